//! Incremental indexing and branching-factor experiments.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, TrainingPair};
use crate::encoder::EncoderParameters;
use crate::error::{HceError, Result};
use crate::hierarchy::tree_depth;
use crate::index::MipsIndex;
use crate::training::{evaluate_recall_on_index, retrieve, train, TrainConfig};

use super::metrics::recall_at_k;
use super::trec::Qrels;

/// Wave sizes of the incremental protocol.
pub const DEFAULT_WAVES: [usize; 4] = [10, 100, 1000, 10000];

/// Cutoffs reported by the sweep.
pub const SWEEP_CUTOFFS: [usize; 4] = [1, 5, 10, 100];

/// Disjoint split of a corpus into old documents `D₀`, new documents `D′`
/// and a discarded remainder `D*`. Each part lists corpus ordinals; `new`
/// is in the order in which documents arrive.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusPartition {
    pub old: Vec<usize>,
    pub new: Vec<usize>,
    pub discarded: Vec<usize>,
}

impl CorpusPartition {
    /// 90% / 9% / 1% of a seeded shuffle. The new and discarded parts are
    /// rounded down; the remainder goes to the old part.
    pub fn split(n: usize, seed: u64) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let new = n * 9 / 100;
        let discarded = n / 100;
        let old = n - new - discarded;
        CorpusPartition {
            new: order[old..old + new].to_vec(),
            discarded: order[old + new..].to_vec(),
            old: order.drain(..old).collect(),
        }
    }

    /// Pairs whose positive lies in `part`, in input order.
    pub fn pairs_in(corpus: &Corpus, pairs: &[TrainingPair], part: &[usize]) -> Vec<TrainingPair> {
        let members: HashSet<usize> = part.iter().copied().collect();
        pairs
            .iter()
            .filter(|p| {
                corpus
                    .ordinal(&p.positive_doc_id)
                    .is_some_and(|o| members.contains(&o))
            })
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveResult {
    /// Cumulative number of new documents in the index.
    pub added: usize,
    pub index_size: usize,
    pub old_recall_1: f64,
    pub old_recall_10: f64,
    /// Number of new queries whose positive has been added so far.
    pub new_queries: usize,
    /// `None` while no new query is answerable.
    pub new_recall_1: Option<f64>,
    pub new_recall_10: Option<f64>,
}

/// Indexes `D₀` with `encoder`, then adds cumulative prefixes of `D′` by
/// encoding alone. Row 0 is the baseline before any addition; one row
/// follows per wave. `old_queries` are scored at every wave; a new query
/// is scored once its positive is in the index.
pub fn incremental_experiment(
    encoder: &EncoderParameters,
    corpus: &Corpus,
    partition: &CorpusPartition,
    old_queries: &[TrainingPair],
    new_queries: &[TrainingPair],
    waves: &[usize],
) -> Result<Vec<WaveResult>> {
    if let Some(&w) = waves.iter().find(|&&w| w > partition.new.len()) {
        return Err(HceError::InsufficientNewDocs {
            requested: w,
            available: partition.new.len(),
        });
    }
    if waves.windows(2).any(|p| p[1] < p[0]) {
        return Err(HceError::Config("wave sizes must be non-decreasing".into()));
    }
    let mut index = MipsIndex::build(encoder, &corpus.subset(&partition.old)?)?;
    let mut added = 0;
    let mut rows = vec![wave_row(
        encoder,
        corpus,
        &index,
        partition,
        old_queries,
        new_queries,
        0,
    )?];
    for &w in waves {
        let docs: Vec<_> = partition.new[added..w]
            .iter()
            .map(|&o| corpus.documents()[o].clone())
            .collect();
        index.add_documents(encoder, &docs)?;
        added = w;
        rows.push(wave_row(
            encoder,
            corpus,
            &index,
            partition,
            old_queries,
            new_queries,
            w,
        )?);
    }
    Ok(rows)
}

fn wave_row(
    encoder: &EncoderParameters,
    corpus: &Corpus,
    index: &MipsIndex,
    partition: &CorpusPartition,
    old_queries: &[TrainingPair],
    new_queries: &[TrainingPair],
    added: usize,
) -> Result<WaveResult> {
    let (qrels, run) = retrieve(encoder, old_queries, index, 10)?;
    let answerable = CorpusPartition::pairs_in(corpus, new_queries, &partition.new[..added]);
    let (new_recall_1, new_recall_10) = if answerable.is_empty() {
        (None, None)
    } else {
        let (nq, nr) = retrieve(encoder, &answerable, index, 10)?;
        (Some(recall_at_k(&nq, &nr, 1)?), Some(recall_at_k(&nq, &nr, 10)?))
    };
    Ok(WaveResult {
        added,
        index_size: index.len(),
        old_recall_1: recall_at_k(&qrels, &run, 1)?,
        old_recall_10: recall_at_k(&qrels, &run, 10)?,
        new_queries: Qrels::from_pairs(&answerable).len(),
        new_recall_1,
        new_recall_10,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub branching: usize,
    pub depth: usize,
    /// Recall at each of [`SWEEP_CUTOFFS`].
    pub recall: [f64; 4],
}

/// Trains one encoder per branching factor from the same initialization,
/// keeping `M = L − 1` centroid levels, and scores `eval` queries.
/// `b_values` must be strictly increasing.
pub fn branching_sweep(
    init: &EncoderParameters,
    corpus: &Corpus,
    pairs: &[TrainingPair],
    dev: &[TrainingPair],
    eval: &[TrainingPair],
    cfg: &TrainConfig,
    b_values: &[usize],
) -> Result<Vec<SweepRow>> {
    if b_values.iter().any(|&b| b < 2) {
        return Err(HceError::Config(
            "every branching factor must be at least 2".into(),
        ));
    }
    if b_values.windows(2).any(|p| p[1] <= p[0]) {
        return Err(HceError::Config(
            "branching factors must be strictly increasing".into(),
        ));
    }
    let mut rows: Vec<SweepRow> = Vec::with_capacity(b_values.len());
    for &b in b_values {
        let cfg = TrainConfig {
            branching_factor: Some(b),
            hierarchy_layers: None,
            ..cfg.clone()
        };
        let out = train(init.clone(), corpus, pairs, dev, &cfg)?;
        let depth = out.tree.depth();
        debug_assert_eq!(depth, tree_depth(corpus.len(), b));
        if rows.last().is_some_and(|r| depth > r.depth) {
            return Err(HceError::Config(format!(
                "depth grew from b = {} to b = {b}",
                rows[rows.len() - 1].branching
            )));
        }
        let index = MipsIndex::build(&out.encoder, corpus)?;
        let mut recall = [0.0; 4];
        for (r, &k) in recall.iter_mut().zip(&SWEEP_CUTOFFS) {
            *r = evaluate_recall_on_index(&out.encoder, eval, &index, k)?;
        }
        rows.push(SweepRow {
            branching: b,
            depth,
            recall,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::Vocabulary;
    use crate::eval::{generate_synthetic_corpus, SyntheticCorpusSpec};
    use crate::training::{init_rng, TrainMode};

    fn data() -> crate::eval::SyntheticDataset {
        generate_synthetic_corpus(&SyntheticCorpusSpec {
            num_topics: 8,
            docs_per_topic: 25,
            tokens_per_doc: 24,
            train_queries_per_topic: 25,
            dev_queries_per_topic: 0,
            vocab_size: 1024,
            seed: 2,
            paraphrase_rate: 0.0,
            disjoint_dev_targets: false,
        })
        .unwrap()
    }

    fn encoder() -> EncoderParameters {
        EncoderParameters::init(Vocabulary::new(4096, 1).unwrap(), 16, 16, 0.0, &mut init_rng(0)).unwrap()
    }

    #[test]
    fn partition_sizes_and_disjointness() {
        let p = CorpusPartition::split(1000, 5);
        assert_eq!((p.old.len(), p.new.len(), p.discarded.len()), (900, 90, 10));
        let mut all: Vec<usize> = p.old.iter().chain(&p.new).chain(&p.discarded).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
        assert_eq!(p, CorpusPartition::split(1000, 5));
        assert_eq!(CorpusPartition::split(7, 0).old.len(), 7);
    }

    #[test]
    fn waves_are_cumulative() {
        let d = data();
        let enc = encoder();
        let p = CorpusPartition::split(d.corpus.len(), 1);
        let old = CorpusPartition::pairs_in(&d.corpus, &d.train, &p.old);
        let new = CorpusPartition::pairs_in(&d.corpus, &d.train, &p.new);
        let rows = incremental_experiment(&enc, &d.corpus, &p, &old, &new, &[0, 5, p.new.len()]).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].index_size, p.old.len());
        assert_eq!(rows[3].index_size, p.old.len() + p.new.len());
        // adding nothing changes nothing
        assert_eq!(rows[0].old_recall_1, rows[1].old_recall_1);
        assert_eq!(rows[0].old_recall_10, rows[1].old_recall_10);
        assert_eq!(rows[0].new_recall_1, None);
        assert!(rows[2].new_queries <= rows[3].new_queries);

        let baseline = MipsIndex::build(&enc, &d.corpus.subset(&p.old).unwrap()).unwrap();
        assert_eq!(
            rows[0].old_recall_10,
            evaluate_recall_on_index(&enc, &old, &baseline, 10).unwrap()
        );
    }

    #[test]
    fn too_many_new_documents() {
        let d = data();
        let p = CorpusPartition::split(d.corpus.len(), 1);
        let err =
            incremental_experiment(&encoder(), &d.corpus, &p, &[], &[], &[p.new.len() + 1]).unwrap_err();
        assert!(matches!(err, HceError::InsufficientNewDocs { .. }));
    }

    #[test]
    fn sweep_depths_follow_the_formula() {
        let d = data();
        let cfg = TrainConfig {
            mode: TrainMode::Supervised,
            epochs: 1,
            batch_size: 16,
            learning_rate: 0.1,
            temperature: 0.1,
            ..TrainConfig::default()
        };
        let bs = [2, 8, 64, 256];
        let rows = branching_sweep(&encoder(), &d.corpus, &d.train, &[], &d.train, &cfg, &bs).unwrap();
        for (row, &b) in rows.iter().zip(&bs) {
            assert_eq!(row.branching, b);
            assert_eq!(row.depth, tree_depth(200, b));
            assert!(row.recall.windows(2).all(|w| w[0] <= w[1]));
        }
        assert_eq!(rows[3].depth, 1);
        assert!(branching_sweep(&encoder(), &d.corpus, &d.train, &[], &d.train, &cfg, &[4, 2]).is_err());
        assert!(branching_sweep(&encoder(), &d.corpus, &d.train, &[], &d.train, &cfg, &[1]).is_err());
    }
}
