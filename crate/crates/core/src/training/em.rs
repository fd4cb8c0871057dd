//! EM-style co-training: optimize the encoder against a fixed hierarchy,
//! and rebuild the hierarchy whenever the dev metric improves.

use super::{evaluate_dev_metric, EpochRecord, TrainConfig, TrainOutcome, Trainer};
use crate::corpus::{Corpus, TrainingPair};
use crate::encoder::EncoderParameters;
use crate::error::{HceError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EmOutcome {
    /// Initial row (epoch 0) followed by one row per optimize pass.
    pub records: Vec<EpochRecord>,
    pub rebuilds: usize,
    pub best_metric: f64,
}

/// The control flow of co-training with pluggable steps.
///
/// `optimize(epoch)` runs one pass and returns its mean loss and the global
/// step count; `metric()` scores the current model; `rebuild()` re-clusters.
/// Stops after `max_epochs` passes, or after `patience` consecutive passes
/// without improvement when `patience > 0`.
pub fn em_loop<O, M, B>(
    max_epochs: usize,
    patience: usize,
    mut optimize: O,
    mut metric: M,
    mut rebuild: B,
) -> Result<EmOutcome>
where
    O: FnMut(usize) -> Result<(f64, u64)>,
    M: FnMut() -> Result<f64>,
    B: FnMut() -> Result<()>,
{
    let mut best = metric()?;
    let mut records = vec![EpochRecord {
        epoch: 0,
        step: 0,
        loss: f64::NAN,
        dev_metric: Some(best),
        rebuilt: true,
    }];
    let mut rebuilds = 0;
    let mut stale = 0;
    for epoch in 1..=max_epochs {
        let (loss, step) = optimize(epoch)?;
        let m = metric()?;
        let improved = m > best;
        if improved {
            rebuild()?;
            best = m;
            rebuilds += 1;
            stale = 0;
        } else {
            stale += 1;
        }
        records.push(EpochRecord {
            epoch,
            step,
            loss,
            dev_metric: Some(m),
            rebuilt: improved,
        });
        if patience > 0 && stale >= patience {
            break;
        }
    }
    Ok(EmOutcome {
        records,
        rebuilds,
        best_metric: best,
    })
}

/// Co-training with recall@10 on `dev` as the metric. Returns the encoder
/// after the last optimize pass, not the best-scoring one.
pub fn em_cotrain(
    encoder: EncoderParameters,
    corpus: &Corpus,
    pairs: &[TrainingPair],
    dev: &[TrainingPair],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if dev.is_empty() {
        return Err(HceError::Config("co-training needs a non-empty dev set".into()));
    }
    let trainer = std::cell::RefCell::new(Trainer::new(encoder, corpus, pairs, cfg.clone())?);
    let outcome = em_loop(
        cfg.epochs,
        cfg.patience,
        |_| {
            let mut t = trainer.borrow_mut();
            let loss = t.run_epoch()?;
            Ok((loss, t.step_count()))
        },
        || evaluate_dev_metric(trainer.borrow().encoder(), dev, corpus),
        || trainer.borrow_mut().rebuild_hierarchy(),
    )?;
    let trainer = trainer.into_inner();
    let tree = trainer.tree().clone();
    Ok(TrainOutcome {
        encoder: trainer.into_encoder(),
        tree,
        trace: outcome.records,
        rebuilds: outcome.rebuilds,
    })
}
