//! Flat `key = value` experiment configuration.

use std::fs;
use std::path::{Path, PathBuf};

use crate::encoder::{EncoderParameters, Vocabulary};
use crate::error::{HceError, Result};
use crate::eval::DEFAULT_WAVES;
use crate::training::{init_rng, TrainConfig, TrainMode};

/// Shape of a freshly initialized encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSpec {
    pub dim: usize,
    pub hidden: usize,
    pub bucket_count: u32,
    pub hash_seed: u64,
    pub dropout_rate: f64,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        EncoderSpec {
            dim: 64,
            hidden: 64,
            bucket_count: 1 << 14,
            hash_seed: 0,
            dropout_rate: 0.1,
        }
    }
}

impl EncoderSpec {
    pub fn init(&self, seed: u64) -> Result<EncoderParameters> {
        let vocab = Vocabulary::new(self.bucket_count, self.hash_seed)?;
        EncoderParameters::init(
            vocab,
            self.dim,
            self.hidden,
            self.dropout_rate,
            &mut init_rng(seed),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub encoder_spec: EncoderSpec,
    /// Corpus JSON Lines.
    pub corpus: Option<PathBuf>,
    /// Training pairs, `query_id<TAB>text<TAB>doc_id`.
    pub pairs: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    /// Existing encoder file; when unset commands start from a fresh
    /// encoder initialized from `seed`.
    pub encoder: Option<PathBuf>,
    /// Existing index file read by `search`.
    pub index: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub waves: Vec<usize>,
    pub sweep_b: Vec<usize>,
    alpha_set: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            train: TrainConfig::default(),
            encoder_spec: EncoderSpec::default(),
            corpus: None,
            pairs: None,
            dev: None,
            qrels: None,
            encoder: None,
            index: None,
            output_dir: PathBuf::from("."),
            waves: DEFAULT_WAVES.to_vec(),
            sweep_b: vec![2, 4, 8, 16, 32, 64, 128, 256],
            alpha_set: false,
        }
    }
}

/// Every recognised key, in documentation order.
pub const CONFIG_KEYS: &[&str] = &[
    "mode",
    "pseudo_query",
    "tau",
    "learning_rate",
    "batch_size",
    "n_ns",
    "branching_factor",
    "hierarchy_layers",
    "alpha",
    "epochs",
    "patience",
    "seed",
    "ict_span",
    "cotrain",
    "dim",
    "hidden",
    "bucket_count",
    "hash_seed",
    "dropout_rate",
    "corpus",
    "pairs",
    "dev",
    "qrels",
    "encoder",
    "index",
    "output_dir",
    "waves",
    "sweep_b",
];

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| HceError::Config(format!("{key}: cannot parse {value:?}")))
}

fn auto_or<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value == "auto" {
        Ok(None)
    } else {
        number(key, value).map(Some)
    }
}

fn list(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|v| number(key, v.trim())).collect()
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(HceError::Config(format!(
            "{key}: expected a boolean, got {value:?}"
        ))),
    }
}

impl ExperimentConfig {
    /// Applies one setting. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        let e = &mut self.encoder_spec;
        let path = || Some(PathBuf::from(value));
        match key {
            "mode" => t.mode = value.parse()?,
            "pseudo_query" => t.pseudo_query = value.parse()?,
            "tau" => t.temperature = number(key, value)?,
            "learning_rate" => t.learning_rate = number(key, value)?,
            "batch_size" => t.batch_size = number(key, value)?,
            "n_ns" => t.n_ns = number(key, value)?,
            "branching_factor" => t.branching_factor = auto_or(key, value)?,
            "hierarchy_layers" => t.hierarchy_layers = auto_or(key, value)?,
            "alpha" => {
                t.alpha = number(key, value)?;
                self.alpha_set = true;
            }
            "epochs" => t.epochs = number(key, value)?,
            "patience" => t.patience = number(key, value)?,
            "seed" => t.seed = number(key, value)?,
            "ict_span" => t.ict_span = number(key, value)?,
            "cotrain" => t.cotrain = flag(key, value)?,
            "dim" => e.dim = number(key, value)?,
            "hidden" => e.hidden = number(key, value)?,
            "bucket_count" => e.bucket_count = number(key, value)?,
            "hash_seed" => e.hash_seed = number(key, value)?,
            "dropout_rate" => e.dropout_rate = number(key, value)?,
            "corpus" => self.corpus = path(),
            "pairs" => self.pairs = path(),
            "dev" => self.dev = path(),
            "qrels" => self.qrels = path(),
            "encoder" => self.encoder = path(),
            "index" => self.index = path(),
            "output_dir" => self.output_dir = PathBuf::from(value),
            "waves" => self.waves = list(key, value)?,
            "sweep_b" => self.sweep_b = list(key, value)?,
            _ => return Err(HceError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| HceError::parse(origin, lineno + 1, "expected key = value"))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| HceError::parse(origin, lineno + 1, e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HceError::io(path, e))?;
        ExperimentConfig::parse(&text, path)
    }

    /// Settings that have no effect under the current mode.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.alpha_set && self.train.mode == TrainMode::Supervised {
            out.push("alpha is ignored when mode = supervised".to_string());
        }
        out
    }

    /// Checks that every configured input path exists.
    pub fn check_paths(&self) -> Result<()> {
        let inputs = [
            &self.corpus,
            &self.pairs,
            &self.dev,
            &self.qrels,
            &self.encoder,
            &self.index,
        ];
        for p in inputs.into_iter().flatten() {
            if !p.exists() {
                return Err(HceError::io(
                    p,
                    std::io::Error::from(std::io::ErrorKind::NotFound),
                ));
            }
        }
        Ok(())
    }

    /// Serializes every key, so the output parses back to an equal config
    /// apart from the `alpha` warning state.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let e = &self.encoder_spec;
        let auto = |v: Option<usize>| v.map_or("auto".to_string(), |x| x.to_string());
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut lines = vec![
            format!("mode = {}", t.mode.as_str()),
            format!("pseudo_query = {}", t.pseudo_query.as_str()),
            format!("tau = {}", t.temperature),
            format!("learning_rate = {}", t.learning_rate),
            format!("batch_size = {}", t.batch_size),
            format!("n_ns = {}", t.n_ns),
            format!("branching_factor = {}", auto(t.branching_factor)),
            format!("hierarchy_layers = {}", auto(t.hierarchy_layers)),
            format!("alpha = {}", t.alpha),
            format!("epochs = {}", t.epochs),
            format!("patience = {}", t.patience),
            format!("seed = {}", t.seed),
            format!("ict_span = {}", t.ict_span),
            format!("cotrain = {}", t.cotrain),
            format!("dim = {}", e.dim),
            format!("hidden = {}", e.hidden),
            format!("bucket_count = {}", e.bucket_count),
            format!("hash_seed = {}", e.hash_seed),
            format!("dropout_rate = {}", e.dropout_rate),
        ];
        let paths = [
            ("corpus", &self.corpus),
            ("pairs", &self.pairs),
            ("dev", &self.dev),
            ("qrels", &self.qrels),
            ("encoder", &self.encoder),
            ("index", &self.index),
        ];
        for (k, p) in paths {
            if let Some(p) = p {
                lines.push(format!("{k} = {}", p.display()));
            }
        }
        lines.push(format!("output_dir = {}", self.output_dir.display()));
        lines.push(format!("waves = {}", join(&self.waves)));
        lines.push(format!("sweep_b = {}", join(&self.sweep_b)));
        lines.join("\n") + "\n"
    }
}
