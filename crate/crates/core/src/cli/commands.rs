//! One function per command. Each reads its inputs from the config, writes
//! its artifacts under `output_dir` and returns the text to print.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use crate::corpus::{load_pairs, parse_queries, Corpus, TrainingPair};
use crate::encoder::{read_encoder, write_encoder, EncoderParameters};
use crate::error::{HceError, Result};
use crate::eval::{
    branching_sweep, incremental_experiment, incremental_table, sweep_table, CorpusPartition, Metric, Qrels,
    RunFile,
};
use crate::hierarchy::{choose_branching_factor, hier_agg_cluster, write_tree, HierarchyTree};
use crate::index::{read_index, write_index, MipsIndex};
use crate::training::{rng_stream, trace_csv, train, AUTO_TARGET_DEPTH, STREAM_CLUSTERING};

pub const TREE_FILE: &str = "tree.hct";
pub const STATS_FILE: &str = "hierarchy_stats.txt";
pub const ENCODER_FILE: &str = "encoder.hce";
pub const TRACE_FILE: &str = "trace.csv";
pub const INDEX_FILE: &str = "index.hci";

fn required<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| HceError::Config(format!("{key} is not set")))
}

fn output(cfg: &ExperimentConfig, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.output_dir).map_err(|e| HceError::io(&cfg.output_dir, e))?;
    Ok(cfg.output_dir.join(name))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| HceError::io(path, e))
}

fn load_corpus(cfg: &ExperimentConfig) -> Result<Corpus> {
    Corpus::load_jsonl(required(&cfg.corpus, "corpus")?)
}

fn optional_pairs(path: &Option<PathBuf>) -> Result<Vec<TrainingPair>> {
    path.as_deref().map_or(Ok(Vec::new()), load_pairs)
}

/// The encoder file named by `encoder`, or a fresh one from `seed`.
pub fn load_or_init_encoder(cfg: &ExperimentConfig) -> Result<EncoderParameters> {
    match &cfg.encoder {
        Some(path) => read_encoder(path),
        None => cfg.encoder_spec.init(cfg.train.seed),
    }
}

/// Deterministic summary of a tree; timings are left out.
pub fn hierarchy_stats_text(tree: &HierarchyTree) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "docs {}", tree.num_docs());
    let _ = writeln!(out, "branching {}", tree.branching());
    let _ = writeln!(out, "depth {}", tree.depth());
    let _ = writeln!(out, "level clusters inputs iterations converged");
    for s in tree.stats() {
        let _ = writeln!(
            out,
            "{} {} {} {} {}",
            s.level, s.clusters, s.inputs, s.iterations, s.converged
        );
    }
    let _ = writeln!(out, "fan_out nodes");
    for (fan_out, count) in tree.fan_out_histogram() {
        let _ = writeln!(out, "{fan_out} {count}");
    }
    out
}

pub fn cmd_build_hierarchy(cfg: &ExperimentConfig) -> Result<String> {
    let corpus = load_corpus(cfg)?;
    if corpus.is_empty() {
        return Err(HceError::Config("cannot cluster an empty corpus".into()));
    }
    let encoder = load_or_init_encoder(cfg)?;
    let vectors = corpus
        .documents()
        .par_iter()
        .map(|d| {
            encoder
                .encode_text(&d.text)
                .map_err(|e| e.for_document(&d.doc_id))
        })
        .collect::<Result<Vec<_>>>()?;
    let b = cfg
        .train
        .branching_factor
        .unwrap_or_else(|| choose_branching_factor(corpus.len().max(2), AUTO_TARGET_DEPTH));
    let started = Instant::now();
    let tree = hier_agg_cluster(&vectors, b, &mut rng_stream(cfg.train.seed, STREAM_CLUSTERING))?;
    let seconds = started.elapsed().as_secs_f64();
    let tree_path = output(cfg, TREE_FILE)?;
    write_tree(&tree, &tree_path)?;
    let stats = hierarchy_stats_text(&tree);
    write_text(&output(cfg, STATS_FILE)?, &stats)?;
    Ok(format!(
        "{stats}clustering_seconds {seconds:.3}\nwrote {}\n",
        tree_path.display()
    ))
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<String> {
    let corpus = load_corpus(cfg)?;
    let pairs = optional_pairs(&cfg.pairs)?;
    let dev = optional_pairs(&cfg.dev)?;
    let out = train(load_or_init_encoder(cfg)?, &corpus, &pairs, &dev, &cfg.train)?;
    let encoder_path = output(cfg, ENCODER_FILE)?;
    write_encoder(&out.encoder, &encoder_path)?;
    let trace = trace_csv(&out.trace);
    write_text(&output(cfg, TRACE_FILE)?, &trace)?;
    let mut msg = String::new();
    for w in cfg.warnings() {
        let _ = writeln!(msg, "warning: {w}");
    }
    if let Some(last) = out.trace.last() {
        let _ = writeln!(
            msg,
            "epochs {} steps {} rebuilds {}",
            last.epoch, last.step, out.rebuilds
        );
        if let Some(m) = last.dev_metric {
            let _ = writeln!(msg, "dev recall@10 {m:.6}");
        }
    }
    let _ = writeln!(msg, "wrote {}", encoder_path.display());
    Ok(msg)
}

pub fn cmd_index(cfg: &ExperimentConfig) -> Result<String> {
    let corpus = load_corpus(cfg)?;
    let index = MipsIndex::build(&load_or_init_encoder(cfg)?, &corpus)?;
    let path = output(cfg, INDEX_FILE)?;
    write_index(&index, &path)?;
    Ok(format!(
        "indexed {} documents\nwrote {}\n",
        index.len(),
        path.display()
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchInput {
    /// A single query; prints `doc_id score` lines.
    Text(String),
    /// `query_id<TAB>text` lines; prints a TREC run.
    File(PathBuf),
}

pub fn cmd_search(cfg: &ExperimentConfig, input: &SearchInput, k: usize) -> Result<String> {
    let index_path = cfg
        .index
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join(INDEX_FILE));
    let index = read_index(&index_path)?;
    let encoder = load_or_init_encoder(cfg)?;
    let mut out = String::new();
    match input {
        SearchInput::Text(text) => {
            let result = index.search(&encoder.encode_text(text)?, k)?;
            for hit in result.hits {
                let _ = writeln!(out, "{} {:.6}", hit.doc_id, hit.score);
            }
        }
        SearchInput::File(path) => {
            let text = fs::read_to_string(path).map_err(|e| HceError::io(path, e))?;
            let queries = parse_queries(&text, path)?;
            let vectors = queries
                .par_iter()
                .map(|q| encoder.encode_text(&q.text).map_err(|e| e.for_query(&q.query_id)))
                .collect::<Result<Vec<_>>>()?;
            let mut run = RunFile::new();
            for (q, r) in queries.iter().zip(index.search_many(&vectors, k)?) {
                run.insert_result(&q.query_id, &r);
            }
            out = run.to_trec("hce");
        }
    }
    Ok(out)
}

/// Prints `name value` per metric at full precision.
pub fn cmd_eval(run: &Path, qrels: &Path, metrics: &[Metric]) -> Result<String> {
    let run = RunFile::load(run)?;
    let qrels = Qrels::load(qrels)?;
    let mut out = String::new();
    for m in metrics {
        let _ = writeln!(out, "{} {}", m.name(), m.evaluate(&qrels, &run)?);
    }
    Ok(out)
}

/// Trains on the 90% old split and adds the new split in waves.
///
/// Training sees only pairs whose positive is old. Old-query recall uses
/// the dev pairs (or the training pairs when no dev file is set) with old
/// positives; new queries are all pairs whose positive is new.
pub fn cmd_incremental(cfg: &ExperimentConfig) -> Result<String> {
    let corpus = load_corpus(cfg)?;
    let pairs = optional_pairs(&cfg.pairs)?;
    let dev = optional_pairs(&cfg.dev)?;
    let partition = CorpusPartition::split(corpus.len(), cfg.train.seed);
    if let Some(&w) = cfg.waves.iter().find(|&&w| w > partition.new.len()) {
        return Err(HceError::InsufficientNewDocs {
            requested: w,
            available: partition.new.len(),
        });
    }
    let old_corpus = corpus.subset(&partition.old)?;
    let train_pairs = CorpusPartition::pairs_in(&corpus, &pairs, &partition.old);
    let dev_old = CorpusPartition::pairs_in(&corpus, &dev, &partition.old);
    let out = train(
        load_or_init_encoder(cfg)?,
        &old_corpus,
        &train_pairs,
        &dev_old,
        &cfg.train,
    )?;

    let old_queries = if dev.is_empty() { train_pairs } else { dev_old };
    let all: Vec<TrainingPair> = pairs.iter().chain(&dev).cloned().collect();
    let new_queries = CorpusPartition::pairs_in(&corpus, &all, &partition.new);
    let rows = incremental_experiment(
        &out.encoder,
        &corpus,
        &partition,
        &old_queries,
        &new_queries,
        &cfg.waves,
    )?;
    let table = incremental_table(&rows);
    write_text(&output(cfg, "incremental.csv")?, &table.to_csv())?;
    let text = table.to_text();
    write_text(&output(cfg, "incremental.txt")?, &text)?;
    Ok(text)
}

/// Scores the dev pairs, or the training pairs when no dev file is set.
pub fn cmd_sweep_b(cfg: &ExperimentConfig) -> Result<String> {
    let corpus = load_corpus(cfg)?;
    let pairs = optional_pairs(&cfg.pairs)?;
    let dev = optional_pairs(&cfg.dev)?;
    let eval = if dev.is_empty() { &pairs } else { &dev };
    let init = load_or_init_encoder(cfg)?;
    let rows = branching_sweep(&init, &corpus, &pairs, &dev, eval, &cfg.train, &cfg.sweep_b)?;
    let table = sweep_table(&rows);
    write_text(&output(cfg, "sweep.csv")?, &table.to_csv())?;
    let text = table.to_text();
    write_text(&output(cfg, "sweep.txt")?, &text)?;
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DocumentRecord;

    fn setup(dir: &Path, docs: &[(&str, &str)]) -> ExperimentConfig {
        let corpus = Corpus::new(
            docs.iter()
                .map(|(id, text)| DocumentRecord {
                    doc_id: id.to_string(),
                    text: text.to_string(),
                })
                .collect(),
        )
        .unwrap();
        let path = dir.join("corpus.jsonl");
        fs::write(&path, corpus.to_jsonl()).unwrap();
        let mut cfg = ExperimentConfig::default();
        cfg.corpus = Some(path);
        cfg.output_dir = dir.join("out");
        cfg.encoder_spec.bucket_count = 256;
        cfg.encoder_spec.dim = 8;
        cfg.encoder_spec.hidden = 8;
        cfg
    }

    #[test]
    fn single_document_hierarchy() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = setup(dir.path(), &[("only", "lonely text")]);
        let msg = cmd_build_hierarchy(&cfg).unwrap();
        assert!(msg.contains("depth 1\n"), "{msg}");
        let tree = crate::hierarchy::read_tree(&cfg.output_dir.join(TREE_FILE)).unwrap();
        assert_eq!(tree.depth(), 1);
    }

    #[test]
    fn hierarchy_files_are_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let docs: Vec<(String, String)> = (0..40)
            .map(|i| (format!("d{i}"), format!("w{} w{} w{}", i, i % 7, i % 3)))
            .collect();
        let refs: Vec<(&str, &str)> = docs.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let mut cfg = setup(dir.path(), &refs);
        cfg.train.branching_factor = Some(3);
        cmd_build_hierarchy(&cfg).unwrap();
        let first = fs::read(cfg.output_dir.join(TREE_FILE)).unwrap();
        let stats = fs::read(cfg.output_dir.join(STATS_FILE)).unwrap();
        cmd_build_hierarchy(&cfg).unwrap();
        assert_eq!(first, fs::read(cfg.output_dir.join(TREE_FILE)).unwrap());
        assert_eq!(stats, fs::read(cfg.output_dir.join(STATS_FILE)).unwrap());
    }

    #[test]
    fn search_prints_requested_hits() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = setup(
            dir.path(),
            &[("a", "apple pie"), ("b", "ocean wave"), ("c", "apple tart")],
        );
        cmd_index(&cfg).unwrap();
        let out = cmd_search(&cfg, &SearchInput::Text("apple pie".into()), 1).unwrap();
        assert_eq!(out.lines().count(), 1);
        assert!(out.starts_with("a "), "{out}");

        let queries = dir.path().join("q.tsv");
        fs::write(&queries, "q1\tapple pie\nq2\tocean\n").unwrap();
        let run = cmd_search(&cfg, &SearchInput::File(queries), 2).unwrap();
        assert_eq!(run.lines().count(), 4);
        assert!(run.lines().all(|l| l.split(' ').count() == 6));
    }

    #[test]
    fn missing_corpus_is_named() {
        let cfg = ExperimentConfig::default();
        assert_eq!(
            cmd_index(&cfg).unwrap_err().to_string(),
            "configuration error: corpus is not set"
        );
        let mut cfg = ExperimentConfig::default();
        cfg.corpus = Some(PathBuf::from("/nonexistent/c.jsonl"));
        assert!(cmd_build_hierarchy(&cfg)
            .unwrap_err()
            .to_string()
            .starts_with("/nonexistent/c.jsonl"));
    }
}
