use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hce::cli::{
    cmd_build_hierarchy, cmd_eval, cmd_incremental, cmd_index, cmd_search, cmd_sweep_b, cmd_train,
    ExperimentConfig, SearchInput,
};
use hce::eval::Metric;

/// Hierarchical corpus encoder: training, indexing, search and evaluation.
///
/// Settings come from an optional `key = value` config file; any flag
/// below overrides the matching key. Set HCE_THREADS to bound the worker
/// pool.
#[derive(Parser)]
#[command(name = "hce", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode the corpus and cluster it into a tree.
    BuildHierarchy(Common),
    /// Train an encoder and write it with a per-epoch trace.
    Train(Common),
    /// Encode the corpus into an exact search index.
    Index(Common),
    /// Search an index with one query or a query file.
    Search {
        #[command(flatten)]
        common: Common,
        /// Query text.
        #[arg(long, conflicts_with = "queries")]
        query: Option<String>,
        /// File of `query_id<TAB>text` lines.
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(short, long, default_value_t = 10)]
        k: usize,
    },
    /// Score a TREC run against TREC qrels.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        run: PathBuf,
        /// Comma-separated, e.g. recall@10,hit@10,mrr,ndcg@10.
        #[arg(long, default_value = "recall@10,hit@10,mrr,ndcg@10")]
        metrics: String,
    },
    /// Train on the old split, then add new documents in waves.
    Incremental(Common),
    /// Train once per branching factor and tabulate recall.
    SweepB(Common),
}

#[derive(Args)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    keys: Overrides,
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    pseudo_query: Option<String>,
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    learning_rate: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    n_ns: Option<String>,
    #[arg(long)]
    branching_factor: Option<String>,
    #[arg(long)]
    hierarchy_layers: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    patience: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    ict_span: Option<String>,
    #[arg(long)]
    cotrain: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    bucket_count: Option<String>,
    #[arg(long)]
    hash_seed: Option<String>,
    #[arg(long)]
    dropout_rate: Option<String>,
    #[arg(long)]
    corpus: Option<String>,
    #[arg(long)]
    pairs: Option<String>,
    #[arg(long)]
    dev: Option<String>,
    #[arg(long)]
    qrels: Option<String>,
    #[arg(long)]
    encoder: Option<String>,
    #[arg(long)]
    index: Option<String>,
    #[arg(long)]
    output_dir: Option<String>,
    #[arg(long)]
    waves: Option<String>,
    #[arg(long)]
    sweep_b: Option<String>,
}

impl Overrides {
    fn entries(&self) -> [(&'static str, &Option<String>); 28] {
        [
            ("mode", &self.mode),
            ("pseudo_query", &self.pseudo_query),
            ("tau", &self.tau),
            ("learning_rate", &self.learning_rate),
            ("batch_size", &self.batch_size),
            ("n_ns", &self.n_ns),
            ("branching_factor", &self.branching_factor),
            ("hierarchy_layers", &self.hierarchy_layers),
            ("alpha", &self.alpha),
            ("epochs", &self.epochs),
            ("patience", &self.patience),
            ("seed", &self.seed),
            ("ict_span", &self.ict_span),
            ("cotrain", &self.cotrain),
            ("dim", &self.dim),
            ("hidden", &self.hidden),
            ("bucket_count", &self.bucket_count),
            ("hash_seed", &self.hash_seed),
            ("dropout_rate", &self.dropout_rate),
            ("corpus", &self.corpus),
            ("pairs", &self.pairs),
            ("dev", &self.dev),
            ("qrels", &self.qrels),
            ("encoder", &self.encoder),
            ("index", &self.index),
            ("output_dir", &self.output_dir),
            ("waves", &self.waves),
            ("sweep_b", &self.sweep_b),
        ]
    }
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        for (key, value) in self.keys.entries() {
            if let Some(v) = value {
                cfg.set(key, v)
                    .with_context(|| format!("--{}", key.replace('_', "-")))?;
            }
        }
        cfg.check_paths()?;
        Ok(cfg)
    }
}

fn init_threads() -> Result<()> {
    if let Ok(raw) = std::env::var("HCE_THREADS") {
        let n: usize = raw
            .parse()
            .with_context(|| format!("HCE_THREADS must be a positive integer, got {raw:?}"))?;
        if n == 0 {
            bail!("HCE_THREADS must be a positive integer, got 0");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<String> {
    let out = match cli.command {
        Command::BuildHierarchy(c) => cmd_build_hierarchy(&c.resolve()?)?,
        Command::Train(c) => cmd_train(&c.resolve()?)?,
        Command::Index(c) => cmd_index(&c.resolve()?)?,
        Command::Search {
            common,
            query,
            queries,
            k,
        } => {
            let input = match (query, queries) {
                (Some(text), None) => SearchInput::Text(text),
                (None, Some(path)) => SearchInput::File(path),
                _ => bail!("give exactly one of --query or --queries"),
            };
            cmd_search(&common.resolve()?, &input, k)?
        }
        Command::Eval { common, run, metrics } => {
            let cfg = common.resolve()?;
            let qrels = cfg.qrels.as_deref().context("qrels is not set")?;
            let metrics = metrics
                .split(',')
                .map(|m| Metric::parse(m.trim()))
                .collect::<hce::Result<Vec<_>>>()?;
            cmd_eval(&run, qrels, &metrics)?
        }
        Command::Incremental(c) => cmd_incremental(&c.resolve()?)?,
        Command::SweepB(c) => cmd_sweep_b(&c.resolve()?)?,
    };
    Ok(out)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    init_threads()?;
    print!("{}", run(cli)?);
    Ok(())
}
