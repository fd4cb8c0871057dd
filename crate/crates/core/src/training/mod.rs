//! Training loops: supervised, unsupervised (ICT or SimCSE pseudo-queries),
//! joint, and EM-style co-training of encoder and hierarchy.
//!
//! Randomness is split into independent ChaCha streams derived from one
//! seed: supervised batches and their negatives, unsupervised batches and
//! their pseudo-queries, and clustering. Switching one objective off
//! therefore leaves the other's draws untouched.

mod em;
mod tape;

use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, TrainingPair};
use crate::encoder::{EncoderGradients, EncoderParameters, TokenSequence};
use crate::error::{HceError, Result};
use crate::hierarchy::{choose_branching_factor, hier_agg_cluster, HierarchyTree};
use crate::index::MipsIndex;
use crate::losses::{CentroidGradients, CentroidParameters, ScoreConfig};

pub use crate::losses::sample_leaf_negatives;
pub use em::{em_cotrain, em_loop, EmOutcome};

use tape::{batch_term, Items, StepContext, Tape};

/// Depth targeted when the branching factor is chosen automatically.
pub const AUTO_TARGET_DEPTH: usize = 3;

pub const STREAM_INIT: u64 = 0;
pub const STREAM_SUPERVISED: u64 = 1;
pub const STREAM_UNSUPERVISED: u64 = 2;
pub const STREAM_CLUSTERING: u64 = 3;

/// The seeded generator for one named purpose.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generator used to initialize encoder parameters for `seed`.
pub fn init_rng(seed: u64) -> ChaCha8Rng {
    rng_stream(seed, STREAM_INIT)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Supervised,
    UnsupervisedIct,
    UnsupervisedSimcse,
    Joint,
}

impl FromStr for TrainMode {
    type Err = HceError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "supervised" => Ok(TrainMode::Supervised),
            "unsupervised-ict" => Ok(TrainMode::UnsupervisedIct),
            "unsupervised-simcse" => Ok(TrainMode::UnsupervisedSimcse),
            "joint" => Ok(TrainMode::Joint),
            _ => Err(HceError::Config(format!("unknown training mode {s:?}"))),
        }
    }
}

impl TrainMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrainMode::Supervised => "supervised",
            TrainMode::UnsupervisedIct => "unsupervised-ict",
            TrainMode::UnsupervisedSimcse => "unsupervised-simcse",
            TrainMode::Joint => "joint",
        }
    }
}

/// How a document becomes its own pseudo-query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PseudoQuery {
    Ict,
    SimCse,
}

impl FromStr for PseudoQuery {
    type Err = HceError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ict" => Ok(PseudoQuery::Ict),
            "simcse" => Ok(PseudoQuery::SimCse),
            _ => Err(HceError::Config(format!("unknown pseudo-query kind {s:?}"))),
        }
    }
}

impl PseudoQuery {
    pub fn as_str(&self) -> &'static str {
        match self {
            PseudoQuery::Ict => "ict",
            PseudoQuery::SimCse => "simcse",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: TrainMode,
    /// Pseudo-query source of the unsupervised half of joint training.
    pub pseudo_query: PseudoQuery,
    pub temperature: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub n_ns: usize,
    /// `None` picks the smallest power of two giving depth 3.
    pub branching_factor: Option<usize>,
    /// Retained centroid levels `M`; `None` means `L − 1`.
    pub hierarchy_layers: Option<usize>,
    pub alpha: f64,
    pub epochs: usize,
    /// Epochs without dev improvement before co-training stops; 0 disables.
    pub patience: usize,
    pub seed: u64,
    pub ict_span: usize,
    /// Rebuild the hierarchy whenever the dev metric improves.
    pub cotrain: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::Supervised,
            pseudo_query: PseudoQuery::Ict,
            temperature: 0.01,
            learning_rate: 1e-4,
            batch_size: 32,
            n_ns: 4,
            branching_factor: None,
            hierarchy_layers: None,
            alpha: 0.5,
            epochs: 10,
            patience: 3,
            seed: 0,
            ict_span: 64,
            cotrain: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(HceError::Config(m));
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return fail(format!("temperature must be positive, got {}", self.temperature));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail(format!(
                "learning_rate must be non-negative, got {}",
                self.learning_rate
            ));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return fail(format!("alpha must be non-negative, got {}", self.alpha));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if self.branching_factor.is_some_and(|b| b < 2) {
            return fail("branching_factor must be at least 2".into());
        }
        if self.ict_span == 0 {
            return fail("ict_span must be positive".into());
        }
        Ok(())
    }

    fn score(&self) -> ScoreConfig {
        ScoreConfig {
            temperature: self.temperature,
            cosine_normalize: false,
        }
    }

    fn uses_pairs(&self, num_pairs: usize) -> bool {
        match self.mode {
            TrainMode::Supervised => true,
            TrainMode::Joint => num_pairs > 0,
            _ => false,
        }
    }

    fn unsupervised_part(&self) -> Option<(PseudoQuery, f64)> {
        match self.mode {
            TrainMode::Supervised => None,
            TrainMode::UnsupervisedIct => Some((PseudoQuery::Ict, 1.0)),
            TrainMode::UnsupervisedSimcse => Some((PseudoQuery::SimCse, 1.0)),
            TrainMode::Joint if self.alpha > 0.0 => Some((self.pseudo_query, self.alpha)),
            TrainMode::Joint => None,
        }
    }
}

/// Learning rate after `step` of `total` planned steps: `η·(T − s)/T`,
/// which is exactly 0 at `s = T`.
pub fn linear_decay(eta: f64, step: u64, total: u64) -> f64 {
    if total == 0 || step >= total {
        return 0.0;
    }
    eta * (total - step) as f64 / total as f64
}

/// One row of the training trace.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Global optimizer steps completed so far.
    pub step: u64,
    /// Mean step loss of the epoch; NaN for the initial row.
    pub loss: f64,
    pub dev_metric: Option<f64>,
    pub rebuilt: bool,
}

/// `epoch,step,loss,dev_metric,rebuilt` with fixed precision.
pub fn trace_csv(records: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,step,loss,dev_metric,rebuilt\n");
    for r in records {
        let loss = if r.loss.is_nan() {
            String::new()
        } else {
            format!("{:.9}", r.loss)
        };
        let metric = r.dev_metric.map(|m| format!("{m:.6}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.epoch,
            r.step,
            loss,
            metric,
            u8::from(r.rebuilt)
        );
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub encoder: EncoderParameters,
    pub tree: HierarchyTree,
    pub trace: Vec<EpochRecord>,
    /// Hierarchy rebuilds after the initial build.
    pub rebuilds: usize,
}

/// Holds everything mutable during training: encoder, hierarchy, centroid
/// parameters, generators and the schedule position.
#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: TrainConfig,
    encoder: EncoderParameters,
    doc_tokens: Vec<TokenSequence>,
    pair_tokens: Vec<TokenSequence>,
    pair_targets: Vec<usize>,
    tree: HierarchyTree,
    centroids: CentroidParameters,
    supervised_rng: ChaCha8Rng,
    unsupervised_rng: ChaCha8Rng,
    clustering_rng: ChaCha8Rng,
    pair_order: Vec<usize>,
    doc_order: Vec<usize>,
    doc_cursor: usize,
    step: u64,
    total_steps: u64,
    epoch: usize,
}

impl Trainer {
    /// Tokenizes the data and builds the initial hierarchy from the
    /// encoder's document embeddings.
    pub fn new(
        encoder: EncoderParameters,
        corpus: &Corpus,
        pairs: &[TrainingPair],
        cfg: TrainConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if corpus.is_empty() {
            return Err(HceError::Config("cannot train on an empty corpus".into()));
        }
        if cfg.mode == TrainMode::Supervised && pairs.is_empty() {
            return Err(HceError::Config(
                "supervised training needs at least one pair".into(),
            ));
        }
        let doc_tokens: Vec<TokenSequence> = corpus
            .documents()
            .iter()
            .map(|d| encoder.tokenize(&d.text))
            .collect();
        let mut pair_tokens = Vec::new();
        let mut pair_targets = Vec::new();
        if cfg.uses_pairs(pairs.len()) {
            for p in pairs {
                let target = corpus.ordinal(&p.positive_doc_id).ok_or_else(|| {
                    HceError::UnknownDocument(p.positive_doc_id.clone()).for_query(&p.query.query_id)
                })?;
                pair_tokens.push(encoder.tokenize(&p.query.text));
                pair_targets.push(target);
            }
        }
        let n = corpus.len();
        let mut clustering_rng = rng_stream(cfg.seed, STREAM_CLUSTERING);
        let tree = build_tree(&encoder, &doc_tokens, &cfg, &mut clustering_rng)?;
        let centroids = CentroidParameters::from_tree(&tree, layers_for(&cfg, &tree)?)?;
        let mut trainer = Trainer {
            supervised_rng: rng_stream(cfg.seed, STREAM_SUPERVISED),
            unsupervised_rng: rng_stream(cfg.seed, STREAM_UNSUPERVISED),
            clustering_rng,
            pair_order: (0..pair_targets.len()).collect(),
            doc_order: (0..n).collect(),
            doc_cursor: n,
            step: 0,
            total_steps: 0,
            epoch: 0,
            cfg,
            encoder,
            doc_tokens,
            pair_tokens,
            pair_targets,
            tree,
            centroids,
        };
        trainer.total_steps = trainer.cfg.epochs as u64 * trainer.steps_per_epoch() as u64;
        Ok(trainer)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn encoder(&self) -> &EncoderParameters {
        &self.encoder
    }

    pub fn into_encoder(self) -> EncoderParameters {
        self.encoder
    }

    pub fn tree(&self) -> &HierarchyTree {
        &self.tree
    }

    pub fn centroids(&self) -> &CentroidParameters {
        &self.centroids
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn current_learning_rate(&self) -> f64 {
        linear_decay(self.cfg.learning_rate, self.step, self.total_steps)
    }

    pub fn steps_per_epoch(&self) -> usize {
        let units = if self.cfg.uses_pairs(self.pair_targets.len()) {
            self.pair_targets.len()
        } else {
            self.doc_tokens.len()
        };
        units.div_ceil(self.cfg.batch_size)
    }

    /// Re-clusters the corpus under the current encoder and resets the
    /// centroid parameters from the new tree.
    pub fn rebuild_hierarchy(&mut self) -> Result<()> {
        self.tree = build_tree(
            &self.encoder,
            &self.doc_tokens,
            &self.cfg,
            &mut self.clustering_rng,
        )?;
        self.centroids = CentroidParameters::from_tree(&self.tree, layers_for(&self.cfg, &self.tree)?)?;
        Ok(())
    }

    fn next_doc_batch(&mut self) -> Vec<usize> {
        let n = self.doc_order.len();
        if self.doc_cursor >= n {
            self.doc_order.shuffle(&mut self.unsupervised_rng);
            self.doc_cursor = 0;
        }
        let end = (self.doc_cursor + self.cfg.batch_size).min(n);
        let batch = self.doc_order[self.doc_cursor..end].to_vec();
        self.doc_cursor = end;
        batch
    }

    /// One pass over the training units; returns the mean step loss.
    pub fn run_epoch(&mut self) -> Result<f64> {
        self.epoch += 1;
        let steps = self.steps_per_epoch();
        let use_pairs = self.cfg.uses_pairs(self.pair_targets.len());
        if use_pairs {
            self.pair_order.shuffle(&mut self.supervised_rng);
        }
        let bs = self.cfg.batch_size;
        let mut total = 0.0;
        for s in 0..steps {
            let pairs = use_pairs.then(|| {
                let end = ((s + 1) * bs).min(self.pair_order.len());
                self.pair_order[s * bs..end].to_vec()
            });
            let docs = self.cfg.unsupervised_part().map(|_| self.next_doc_batch());
            total += self.train_step(pairs.as_deref(), docs.as_deref())?;
        }
        Ok(if steps == 0 { 0.0 } else { total / steps as f64 })
    }

    /// Forward, backward and one SGD update for a supervised batch (pair
    /// indices) and/or an unsupervised batch (document ordinals).
    pub fn train_step(&mut self, pairs: Option<&[usize]>, docs: Option<&[usize]>) -> Result<f64> {
        let ctx = StepContext {
            score: self.cfg.score(),
            n_ns: self.cfg.n_ns,
            ict_span: self.cfg.ict_span,
            encoder: &self.encoder,
            tree: &self.tree,
            centroids: &self.centroids,
            doc_tokens: &self.doc_tokens,
            pair_tokens: &self.pair_tokens,
            pair_targets: &self.pair_targets,
        };
        let mut tape = Tape::default();
        let mut centroid_grads = CentroidGradients::zeros(&self.centroids);
        let mut loss = 0.0;
        if let Some(batch) = pairs.filter(|b| !b.is_empty()) {
            loss += batch_term(
                &ctx,
                &mut self.supervised_rng,
                Items::Pairs(batch),
                1.0,
                &mut tape,
                &mut centroid_grads,
            )?;
        }
        if let (Some(batch), Some((kind, weight))) =
            (docs.filter(|b| !b.is_empty()), self.cfg.unsupervised_part())
        {
            loss += weight
                * batch_term(
                    &ctx,
                    &mut self.unsupervised_rng,
                    Items::Docs(batch, kind),
                    weight,
                    &mut tape,
                    &mut centroid_grads,
                )?;
        }
        let divergence = |loss: f64| HceError::Divergence {
            epoch: self.epoch,
            step: self.step,
            loss,
        };
        if !loss.is_finite() {
            return Err(divergence(loss));
        }
        let mut encoder_grads = EncoderGradients::zeros(&self.encoder);
        tape.backward(&ctx, &mut encoder_grads)?;
        if !encoder_grads.is_finite() || !centroid_grads.is_finite() {
            return Err(divergence(f64::NAN));
        }

        let rate = self.current_learning_rate();
        if rate > 0.0 {
            encoder_grads.apply_sgd(&mut self.encoder, rate);
            centroid_grads.apply_sgd(&mut self.centroids, rate)?;
        }
        self.step += 1;
        Ok(loss)
    }
}

fn build_tree(
    encoder: &EncoderParameters,
    doc_tokens: &[TokenSequence],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<HierarchyTree> {
    let vectors = doc_tokens
        .iter()
        .map(|t| crate::encoder::encode(encoder, t, None))
        .collect::<Result<Vec<_>>>()?;
    let b = cfg
        .branching_factor
        .unwrap_or_else(|| choose_branching_factor(vectors.len().max(2), AUTO_TARGET_DEPTH));
    hier_agg_cluster(&vectors, b, rng)
}

fn layers_for(cfg: &TrainConfig, tree: &HierarchyTree) -> Result<usize> {
    let depth = tree.depth();
    match cfg.hierarchy_layers {
        None => Ok(depth - 1),
        Some(m) if m < depth => Ok(m),
        Some(m) => Err(HceError::Config(format!(
            "hierarchy_layers M = {m} must be below the tree depth L = {depth}"
        ))),
    }
}

/// Recall@10 of the dev queries against an exact index of `corpus`.
pub fn evaluate_dev_metric(
    encoder: &EncoderParameters,
    dev: &[TrainingPair],
    corpus: &Corpus,
) -> Result<f64> {
    evaluate_recall(encoder, dev, corpus, 10)
}

/// Recall@k of `(query, positive)` pairs against an exact index of `corpus`.
pub fn evaluate_recall(
    encoder: &EncoderParameters,
    queries: &[TrainingPair],
    corpus: &Corpus,
    k: usize,
) -> Result<f64> {
    let index = MipsIndex::build(encoder, corpus)?;
    evaluate_recall_on_index(encoder, queries, &index, k)
}

pub fn evaluate_recall_on_index(
    encoder: &EncoderParameters,
    queries: &[TrainingPair],
    index: &MipsIndex,
    k: usize,
) -> Result<f64> {
    let (qrels, run) = retrieve(encoder, queries, index, k)?;
    crate::eval::recall_at_k(&qrels, &run, k)
}

/// Searches every distinct query of `pairs` and returns judgments and run.
pub fn retrieve(
    encoder: &EncoderParameters,
    pairs: &[TrainingPair],
    index: &MipsIndex,
    k: usize,
) -> Result<(crate::eval::Qrels, crate::eval::RunFile)> {
    let qrels = crate::eval::Qrels::from_pairs(pairs);
    let mut seen = std::collections::HashSet::new();
    let queries: Vec<&TrainingPair> = pairs.iter().filter(|p| seen.insert(&p.query.query_id)).collect();
    let vectors = queries
        .iter()
        .map(|p| {
            encoder
                .encode_text(&p.query.text)
                .map_err(|e| e.for_query(&p.query.query_id))
        })
        .collect::<Result<Vec<_>>>()?;
    let results = index.search_many(&vectors, k)?;
    let mut run = crate::eval::RunFile::new();
    for (p, r) in queries.iter().zip(&results) {
        run.insert_result(&p.query.query_id, r);
    }
    Ok((qrels, run))
}

/// Trains for `cfg.epochs` epochs on a hierarchy built once from the
/// initial encoder, or runs co-training when `cfg.cotrain` is set.
pub fn train(
    encoder: EncoderParameters,
    corpus: &Corpus,
    pairs: &[TrainingPair],
    dev: &[TrainingPair],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if cfg.cotrain {
        return em_cotrain(encoder, corpus, pairs, dev, cfg);
    }
    let mut trainer = Trainer::new(encoder, corpus, pairs, cfg.clone())?;
    let metric = |t: &Trainer| -> Result<Option<f64>> {
        if dev.is_empty() {
            Ok(None)
        } else {
            evaluate_dev_metric(t.encoder(), dev, corpus).map(Some)
        }
    };
    let mut trace = vec![EpochRecord {
        epoch: 0,
        step: 0,
        loss: f64::NAN,
        dev_metric: metric(&trainer)?,
        rebuilt: true,
    }];
    for _ in 0..cfg.epochs {
        let loss = trainer.run_epoch()?;
        trace.push(EpochRecord {
            epoch: trainer.epoch(),
            step: trainer.step_count(),
            loss,
            dev_metric: metric(&trainer)?,
            rebuilt: false,
        });
    }
    let tree = trainer.tree().clone();
    Ok(TrainOutcome {
        encoder: trainer.into_encoder(),
        tree,
        trace,
        rebuilds: 0,
    })
}

pub fn train_supervised(
    encoder: EncoderParameters,
    corpus: &Corpus,
    pairs: &[TrainingPair],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let cfg = TrainConfig {
        mode: TrainMode::Supervised,
        cotrain: false,
        ..cfg.clone()
    };
    train(encoder, corpus, pairs, &[], &cfg)
}

/// `kind` selects ICT spans or SimCSE views as pseudo-queries.
pub fn train_unsupervised(
    encoder: EncoderParameters,
    corpus: &Corpus,
    kind: PseudoQuery,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let mode = match kind {
        PseudoQuery::Ict => TrainMode::UnsupervisedIct,
        PseudoQuery::SimCse => TrainMode::UnsupervisedSimcse,
    };
    let cfg = TrainConfig {
        mode,
        cotrain: false,
        ..cfg.clone()
    };
    train(encoder, corpus, &[], &[], &cfg)
}

pub fn train_joint(
    encoder: EncoderParameters,
    corpus: &Corpus,
    pairs: &[TrainingPair],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let cfg = TrainConfig {
        mode: TrainMode::Joint,
        cotrain: false,
        ..cfg.clone()
    };
    train(encoder, corpus, pairs, &[], &cfg)
}
