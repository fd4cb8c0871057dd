//! Contrastive losses with analytic gradients.
//!
//! Every loss here is a sum of softmax negative log-likelihoods over scores
//! `S(q, d)`. Gradients are returned with respect to every vector argument;
//! the caller maps them back onto encoder and centroid parameters.

mod generative;
mod hce;

use crate::error::{HceError, Result};
use crate::vector::{axpy, dot, l2_norm};

pub use generative::{
    gr_atomic_decode, gr_atomic_equivalence_check, gr_atomic_loss, gr_hier_equivalence_check, gr_hier_loss,
    GrAtomicModel, GrHierModel,
};
pub use hce::{
    hce_batch_loss, hce_loss, hierarchy_level_loss, sample_leaf_negatives, CentroidGradients,
    CentroidParameters, HceBatch, HceOutput, LevelLoss,
};

pub const DEFAULT_TEMPERATURE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreConfig {
    pub temperature: f64,
    /// Divide by both norms before scaling. Unit inputs make this a no-op.
    pub cosine_normalize: bool,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            temperature: DEFAULT_TEMPERATURE,
            cosine_normalize: false,
        }
    }
}

impl ScoreConfig {
    pub fn new(temperature: f64, cosine_normalize: bool) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(HceError::Config(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        Ok(ScoreConfig {
            temperature,
            cosine_normalize,
        })
    }
}

fn check_dims(q: &[f64], d: &[f64]) -> Result<()> {
    if q.len() != d.len() {
        return Err(HceError::DimensionMismatch {
            expected: q.len(),
            found: d.len(),
        });
    }
    Ok(())
}

/// `q·d / τ`, or the cosine divided by `τ` in normalized mode.
pub fn score(cfg: &ScoreConfig, q: &[f64], d: &[f64]) -> Result<f64> {
    check_dims(q, d)?;
    Ok(score_unchecked(cfg, q, d))
}

fn score_unchecked(cfg: &ScoreConfig, q: &[f64], d: &[f64]) -> f64 {
    let ip = dot(q, d);
    if cfg.cosine_normalize {
        ip / (l2_norm(q) * l2_norm(d) * cfg.temperature)
    } else {
        ip / cfg.temperature
    }
}

/// Adds `g · ∂S/∂q` to `gq` and `g · ∂S/∂d` to `gd`.
fn score_backward(cfg: &ScoreConfig, q: &[f64], d: &[f64], g: f64, gq: &mut [f64], gd: &mut [f64]) {
    if g == 0.0 {
        return;
    }
    if !cfg.cosine_normalize {
        let a = g / cfg.temperature;
        axpy(a, d, gq);
        axpy(a, q, gd);
        return;
    }
    let (nq, nd) = (l2_norm(q), l2_norm(d));
    let cos = dot(q, d) / (nq * nd);
    // ∂cos/∂q = (d̂ − cos q̂) / ‖q‖
    let a = g / cfg.temperature;
    for (i, (qi, di)) in q.iter().zip(d).enumerate() {
        gq[i] += a * (di / nd - cos * qi / nq) / nq;
        gd[i] += a * (qi / nq - cos * di / nd) / nd;
    }
}

/// `−log softmax(logits)[positive]` and its gradient with respect to the
/// logits.
pub fn softmax_nll(logits: &[f64], positive: usize) -> (f64, Vec<f64>) {
    let top = (0..logits.len()).fold(0, |best, i| if logits[i] > logits[best] { i } else { best });
    let max = logits[top];
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    // ln(Σ exp) − max via ln_1p keeps precision when the loss is tiny
    let rest: f64 = exps
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != top)
        .map(|(_, e)| e)
        .sum();
    let total = 1.0 + rest;
    let loss = (max - logits[positive]) + rest.ln_1p();
    let mut grad: Vec<f64> = exps.iter().map(|e| e / total).collect();
    grad[positive] -= 1.0;
    (loss, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveOutput {
    pub loss: f64,
    pub grad_query: Vec<f64>,
    pub grad_positive: Vec<f64>,
    pub grad_negatives: Vec<Vec<f64>>,
}

/// Softmax NLL of the positive score against the positive and all negatives.
pub fn contrastive_loss(
    cfg: &ScoreConfig,
    q: &[f64],
    d_plus: &[f64],
    negatives: &[&[f64]],
) -> Result<ContrastiveOutput> {
    check_dims(q, d_plus)?;
    for n in negatives {
        check_dims(q, n)?;
    }
    let mut logits = Vec::with_capacity(negatives.len() + 1);
    logits.push(score_unchecked(cfg, q, d_plus));
    logits.extend(negatives.iter().map(|n| score_unchecked(cfg, q, n)));
    let (loss, g) = softmax_nll(&logits, 0);

    let dim = q.len();
    let mut grad_query = vec![0.0; dim];
    let mut grad_positive = vec![0.0; dim];
    score_backward(cfg, q, d_plus, g[0], &mut grad_query, &mut grad_positive);
    let grad_negatives = negatives
        .iter()
        .zip(&g[1..])
        .map(|(n, &gn)| {
            let mut gd = vec![0.0; dim];
            score_backward(cfg, q, n, gn, &mut grad_query, &mut gd);
            gd
        })
        .collect();
    Ok(ContrastiveOutput {
        loss,
        grad_query,
        grad_positive,
        grad_negatives,
    })
}

/// Queries aligned with their positives, plus per-query explicit negatives.
#[derive(Debug, Clone, Default)]
pub struct TrainingBatch<'a> {
    pub queries: Vec<&'a [f64]>,
    pub positives: Vec<&'a [f64]>,
    /// Empty, or one (possibly empty) list per query.
    pub negatives: Vec<Vec<&'a [f64]>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutput {
    pub loss: f64,
    pub grad_queries: Vec<Vec<f64>>,
    pub grad_positives: Vec<Vec<f64>>,
    pub grad_negatives: Vec<Vec<Vec<f64>>>,
}

/// Mean over the batch of a query→document term (all in-batch positives
/// plus the query's explicit negatives) and a document→query term (all
/// in-batch queries).
pub fn bidirectional_batch_loss(cfg: &ScoreConfig, batch: &TrainingBatch<'_>) -> Result<BatchOutput> {
    let b = batch.queries.len();
    if b == 0 {
        return Err(HceError::Config("empty training batch".into()));
    }
    if batch.positives.len() != b {
        return Err(HceError::Config(format!(
            "{} queries but {} positives",
            b,
            batch.positives.len()
        )));
    }
    if !batch.negatives.is_empty() && batch.negatives.len() != b {
        return Err(HceError::Config(format!(
            "{} queries but {} negative lists",
            b,
            batch.negatives.len()
        )));
    }
    let dim = batch.queries[0].len();
    for v in batch
        .queries
        .iter()
        .chain(&batch.positives)
        .chain(batch.negatives.iter().flatten())
    {
        check_dims(batch.queries[0], v)?;
    }
    let no_negatives: Vec<&[f64]> = Vec::new();
    let negs = |i: usize| batch.negatives.get(i).unwrap_or(&no_negatives);

    let s: Vec<Vec<f64>> = batch
        .queries
        .iter()
        .map(|q| {
            batch
                .positives
                .iter()
                .map(|d| score_unchecked(cfg, q, d))
                .collect()
        })
        .collect();

    let inv_b = 1.0 / b as f64;
    let mut total = 0.0;
    let mut ds = vec![vec![0.0; b]; b];
    let mut dneg: Vec<Vec<f64>> = Vec::with_capacity(b);
    for i in 0..b {
        let mut logits = s[i].clone();
        logits.extend(negs(i).iter().map(|n| score_unchecked(cfg, batch.queries[i], n)));
        let (loss, g) = softmax_nll(&logits, i);
        total += loss;
        for j in 0..b {
            ds[i][j] += inv_b * g[j];
        }
        dneg.push(g[b..].iter().map(|x| inv_b * x).collect());

        let column: Vec<f64> = (0..b).map(|j| s[j][i]).collect();
        let (loss, g) = softmax_nll(&column, i);
        total += loss;
        for j in 0..b {
            ds[j][i] += inv_b * g[j];
        }
    }

    let mut grad_queries = vec![vec![0.0; dim]; b];
    let mut grad_positives = vec![vec![0.0; dim]; b];
    for i in 0..b {
        for j in 0..b {
            let (gq, gd) = (&mut grad_queries[i], &mut grad_positives[j]);
            score_backward(cfg, batch.queries[i], batch.positives[j], ds[i][j], gq, gd);
        }
    }
    let grad_negatives = (0..b)
        .map(|i| {
            negs(i)
                .iter()
                .zip(&dneg[i])
                .map(|(n, &g)| {
                    let mut gd = vec![0.0; dim];
                    score_backward(cfg, batch.queries[i], n, g, &mut grad_queries[i], &mut gd);
                    gd
                })
                .collect()
        })
        .collect();
    Ok(BatchOutput {
        loss: total * inv_b,
        grad_queries,
        grad_positives,
        grad_negatives,
    })
}

/// `supervised + α · unsupervised`
pub fn joint_loss(supervised: f64, unsupervised: f64, alpha: f64) -> f64 {
    supervised + alpha * unsupervised
}
