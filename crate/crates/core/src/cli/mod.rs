//! Experiment configuration and the command implementations behind the
//! `hce` binary.

mod commands;
mod config;

pub use commands::{
    cmd_build_hierarchy, cmd_eval, cmd_incremental, cmd_index, cmd_search, cmd_sweep_b, cmd_train,
    hierarchy_stats_text, load_or_init_encoder, SearchInput, ENCODER_FILE, INDEX_FILE, STATS_FILE,
    TRACE_FILE, TREE_FILE,
};
pub use config::{EncoderSpec, ExperimentConfig, CONFIG_KEYS};
