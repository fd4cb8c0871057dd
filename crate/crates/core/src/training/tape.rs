//! Per-step record of every encoding that takes part in the loss, so the
//! loss gradients can be pushed back through the encoder afterwards.

use std::collections::HashMap;

use rand_chacha::ChaCha8Rng;

use super::PseudoQuery;
use crate::encoder::{accumulate_backward, encode, ict_sample, simcse_masks};
use crate::encoder::{DropoutMask, EncoderGradients, EncoderParameters, TokenSequence};
use crate::error::Result;
use crate::hierarchy::HierarchyTree;
use crate::losses::{hce_batch_loss, sample_leaf_negatives, CentroidGradients, CentroidParameters};
use crate::losses::{HceBatch, ScoreConfig};
use crate::vector::{axpy, UnitVector};

pub(super) struct StepContext<'a> {
    pub score: ScoreConfig,
    pub n_ns: usize,
    pub ict_span: usize,
    pub encoder: &'a EncoderParameters,
    pub tree: &'a HierarchyTree,
    pub centroids: &'a CentroidParameters,
    pub doc_tokens: &'a [TokenSequence],
    pub pair_tokens: &'a [TokenSequence],
    pub pair_targets: &'a [usize],
}

pub(super) enum Items<'b> {
    /// Indices into the training pairs.
    Pairs(&'b [usize]),
    /// Document ordinals used as their own pseudo-queries.
    Docs(&'b [usize], PseudoQuery),
}

enum Source {
    Doc(usize),
    Pair(usize),
    Owned(TokenSequence),
}

struct Entry {
    source: Source,
    mask: Option<DropoutMask>,
    vector: UnitVector,
    grad: Vec<f64>,
}

#[derive(Default)]
pub(super) struct Tape {
    entries: Vec<Entry>,
    // unmasked document encodings, shared within the step
    docs: HashMap<usize, usize>,
}

impl Tape {
    fn tokens<'c>(ctx: &'c StepContext<'_>, source: &'c Source) -> &'c TokenSequence {
        match source {
            Source::Doc(d) => &ctx.doc_tokens[*d],
            Source::Pair(p) => &ctx.pair_tokens[*p],
            Source::Owned(t) => t,
        }
    }

    fn push(&mut self, ctx: &StepContext<'_>, source: Source, mask: Option<DropoutMask>) -> Result<usize> {
        let vector = encode(ctx.encoder, Tape::tokens(ctx, &source), mask.as_ref())?;
        self.entries.push(Entry {
            source,
            mask,
            grad: vec![0.0; vector.dim()],
            vector,
        });
        Ok(self.entries.len() - 1)
    }

    fn doc(&mut self, ctx: &StepContext<'_>, ordinal: usize) -> Result<usize> {
        if let Some(&i) = self.docs.get(&ordinal) {
            return Ok(i);
        }
        let i = self.push(ctx, Source::Doc(ordinal), None)?;
        self.docs.insert(ordinal, i);
        Ok(i)
    }

    fn vector(&self, i: usize) -> &[f64] {
        &self.entries[i].vector
    }

    fn add_grad(&mut self, i: usize, weight: f64, g: &[f64]) {
        axpy(weight, g, &mut self.entries[i].grad);
    }

    /// Accumulates encoder gradients of every recorded encoding, in
    /// recording order.
    pub fn backward(&self, ctx: &StepContext<'_>, grads: &mut EncoderGradients) -> Result<()> {
        for e in &self.entries {
            if e.grad.iter().all(|&g| g == 0.0) {
                continue;
            }
            let tokens = Tape::tokens(ctx, &e.source);
            accumulate_backward(ctx.encoder, tokens, e.mask.as_ref(), &e.grad, 1.0, grads)?;
        }
        Ok(())
    }
}

/// Encodes one batch, evaluates its HCE loss and records `weight ·` the
/// gradients on the tape and in `centroid_grads`. Returns the unweighted
/// loss.
pub(super) fn batch_term(
    ctx: &StepContext<'_>,
    rng: &mut ChaCha8Rng,
    items: Items<'_>,
    weight: f64,
    tape: &mut Tape,
    centroid_grads: &mut CentroidGradients,
) -> Result<f64> {
    let mut queries = Vec::new();
    let mut positives = Vec::new();
    let mut targets = Vec::new();
    match items {
        Items::Pairs(batch) => {
            for &p in batch {
                queries.push(tape.push(ctx, Source::Pair(p), None)?);
                positives.push(tape.doc(ctx, ctx.pair_targets[p])?);
                targets.push(ctx.pair_targets[p]);
            }
        }
        Items::Docs(batch, PseudoQuery::Ict) => {
            for &d in batch {
                let span = ict_sample(&ctx.doc_tokens[d], ctx.ict_span, rng);
                queries.push(tape.push(ctx, Source::Owned(span), None)?);
                positives.push(tape.doc(ctx, d)?);
                targets.push(d);
            }
        }
        Items::Docs(batch, PseudoQuery::SimCse) => {
            for &d in batch {
                // the document view takes mask A, the pseudo-query mask B
                let (a, b) = simcse_masks(ctx.encoder, rng);
                let positive = match a {
                    Some(mask) => tape.push(ctx, Source::Doc(d), Some(mask))?,
                    None => tape.doc(ctx, d)?,
                };
                let query = match b {
                    Some(mask) => tape.push(ctx, Source::Doc(d), Some(mask))?,
                    None => tape.doc(ctx, d)?,
                };
                queries.push(query);
                positives.push(positive);
                targets.push(d);
            }
        }
    }

    let depth = ctx.tree.depth();
    let m = ctx.centroids.layers();
    let mut negatives: Vec<Vec<Vec<usize>>> = Vec::with_capacity(depth - m);
    for t in m + 1..=depth {
        let mut level = Vec::with_capacity(targets.len());
        for &d in &targets {
            let sampled = sample_leaf_negatives(ctx.tree, d, t, ctx.n_ns, rng)?;
            level.push(
                sampled
                    .into_iter()
                    .map(|s| tape.doc(ctx, s))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        negatives.push(level);
    }

    let paths: Vec<&[usize]> = targets
        .iter()
        .map(|&d| ctx.tree.path_of(d).map(|p| p.symbols()))
        .collect::<Result<_>>()?;
    let out = {
        let batch = HceBatch {
            queries: queries.iter().map(|&i| tape.vector(i)).collect(),
            positives: positives.iter().map(|&i| tape.vector(i)).collect(),
            paths,
            leaf_negatives: negatives
                .iter()
                .map(|level| {
                    level
                        .iter()
                        .map(|list| list.iter().map(|&i| tape.vector(i)).collect())
                        .collect()
                })
                .collect(),
        };
        hce_batch_loss(&ctx.score, &batch, ctx.centroids)?
    };

    for (&i, g) in queries.iter().zip(&out.grad_queries) {
        tape.add_grad(i, weight, g);
    }
    for (&i, g) in positives.iter().zip(&out.grad_positives) {
        tape.add_grad(i, weight, g);
    }
    for (level, grads) in negatives.iter().zip(&out.grad_negatives) {
        for (list, list_grads) in level.iter().zip(grads) {
            for (&i, g) in list.iter().zip(list_grads) {
                tape.add_grad(i, weight, g);
            }
        }
    }
    centroid_grads.add_scaled(&out.grad_centroids, weight);
    Ok(out.loss)
}
