//! Reference generative-retrieval losses.
//!
//! An atomic decoder scores every document id with one softmax over
//! `W·s`; a hierarchical decoder emits one path symbol per step. Both
//! reduce to contrastive losses, which the equivalence checks measure.

use super::{contrastive_loss, ScoreConfig};
use crate::error::{HceError, Result};
use crate::vector::dot;

#[derive(Debug, Clone, PartialEq)]
pub struct GrAtomicModel {
    /// One row `v_d` per document.
    pub lm_head: Vec<Vec<f64>>,
    pub state: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrHierModel {
    /// Decoder state `s⁽ᵗ⁾` per step.
    pub states: Vec<Vec<f64>>,
    /// Symbol embeddings `v(p)` available at each step.
    pub symbols: Vec<Vec<Vec<f64>>>,
}

const RAW: ScoreConfig = ScoreConfig {
    temperature: 1.0,
    cosine_normalize: false,
};

/// `−log softmax(W·s)[d⁺]`, computed over the logit vector in row order.
pub fn gr_atomic_loss(model: &GrAtomicModel, d_plus: usize) -> Result<f64> {
    let rows = model.lm_head.len();
    if d_plus >= rows {
        return Err(HceError::IndexOutOfRange {
            index: d_plus,
            len: rows,
        });
    }
    let logits: Vec<f64> = model.lm_head.iter().map(|v| dot(v, &model.state)).collect();
    Ok(log_partition(&logits) - logits[d_plus])
}

fn log_partition(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

/// `|gr_atomic_loss − contrastive_loss(s, v_{d⁺}, all other rows)|` at `τ = 1`.
pub fn gr_atomic_equivalence_check(model: &GrAtomicModel, d_plus: usize) -> Result<f64> {
    let atomic = gr_atomic_loss(model, d_plus)?;
    let negatives: Vec<&[f64]> = model
        .lm_head
        .iter()
        .enumerate()
        .filter(|&(d, _)| d != d_plus)
        .map(|(_, v)| v.as_slice())
        .collect();
    let contrastive = contrastive_loss(&RAW, &model.state, &model.lm_head[d_plus], &negatives)?;
    Ok((atomic - contrastive.loss).abs())
}

/// Greedy one-step decode: the row with the largest logit, lowest index on
/// ties.
pub fn gr_atomic_decode(model: &GrAtomicModel) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (d, v) in model.lm_head.iter().enumerate() {
        let s = dot(v, &model.state);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((d, s));
        }
    }
    best.map(|(d, _)| d)
}

fn check_path(model: &GrHierModel, path: &[usize]) -> Result<()> {
    if model.states.len() != path.len() || model.symbols.len() != path.len() {
        return Err(HceError::InvalidPath(format!(
            "path of length {} for a model with {} steps",
            path.len(),
            model.states.len()
        )));
    }
    for (t, (&p, set)) in path.iter().zip(&model.symbols).enumerate() {
        if p >= set.len() {
            return Err(HceError::InvalidPath(format!(
                "symbol {p} at step {} but only {} symbols",
                t + 1,
                set.len()
            )));
        }
    }
    Ok(())
}

/// Sequence NLL: the sum over steps of the per-step softmax loss at the
/// positive symbol.
pub fn gr_hier_loss(model: &GrHierModel, path: &[usize]) -> Result<f64> {
    check_path(model, path)?;
    Ok(path
        .iter()
        .zip(model.states.iter().zip(&model.symbols))
        .map(|(&p, (s, set))| {
            let logits: Vec<f64> = set.iter().map(|v| dot(s, v)).collect();
            log_partition(&logits) - logits[p]
        })
        .sum())
}

/// `|gr_hier_loss − Σₜ contrastive_loss(s⁽ᵗ⁾, v(p⁺), other symbols)|`.
pub fn gr_hier_equivalence_check(model: &GrHierModel, path: &[usize]) -> Result<f64> {
    let sequence = gr_hier_loss(model, path)?;
    let mut per_level = 0.0;
    for (&p, (s, set)) in path.iter().zip(model.states.iter().zip(&model.symbols)) {
        let negatives: Vec<&[f64]> = set
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != p)
            .map(|(_, v)| v.as_slice())
            .collect();
        per_level += contrastive_loss(&RAW, s, &set[p], &negatives)?.loss;
    }
    Ok((sequence - per_level).abs())
}
