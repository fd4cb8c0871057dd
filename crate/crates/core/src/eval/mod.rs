//! Evaluation: TREC formats, rank metrics, synthetic data and the
//! incremental-indexing and branching-factor experiments.

mod experiments;
mod metrics;
mod report;
mod synthetic;
mod trec;

pub use experiments::{
    branching_sweep, incremental_experiment, CorpusPartition, SweepRow, WaveResult, DEFAULT_WAVES,
    SWEEP_CUTOFFS,
};
pub use metrics::{hit_at_k, mrr, ndcg_at_k, recall_at_k, Metric};
pub use report::{incremental_table, sweep_table, Table};
pub use synthetic::{
    bag_of_words_recall_at_1, canonical_token, generate_synthetic_corpus, SyntheticCorpusSpec,
    SyntheticDataset,
};
pub use trec::{Qrels, RankedDoc, RunFile};
