//! Topic-structured synthetic retrieval data.
//!
//! The vocabulary is split into one word block per topic plus shared
//! background words. Each document owns a small signature drawn from its
//! topic block; its text mixes signature, topic and background words.
//! Queries are short samples of the target's signature in which each word
//! may be replaced by its paraphrase (`wN` → `pN`), so an encoder has to
//! learn that the two surface forms mean the same thing.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::trec::Qrels;
use crate::corpus::{Corpus, DocumentRecord, QueryRecord, TrainingPair};
use crate::error::{HceError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpusSpec {
    pub num_topics: usize,
    pub docs_per_topic: usize,
    pub tokens_per_doc: usize,
    pub train_queries_per_topic: usize,
    pub dev_queries_per_topic: usize,
    pub vocab_size: usize,
    pub seed: u64,
    /// Probability that a query word is replaced by its paraphrase.
    pub paraphrase_rate: f64,
    /// Dev queries target documents that no training query targets.
    /// Otherwise they target documents that also have training queries.
    pub disjoint_dev_targets: bool,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        SyntheticCorpusSpec {
            num_topics: 32,
            docs_per_topic: 32,
            tokens_per_doc: 48,
            train_queries_per_topic: 16,
            dev_queries_per_topic: 4,
            vocab_size: 4096,
            seed: 0,
            paraphrase_rate: 0.5,
            disjoint_dev_targets: false,
        }
    }
}

const SIGNATURE_WORDS: usize = 6;
const QUERY_TOKENS: usize = 8;

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub corpus: Corpus,
    pub train: Vec<TrainingPair>,
    pub dev: Vec<TrainingPair>,
    /// Judgments for the dev queries.
    pub qrels: Qrels,
    /// Topic of every document, by corpus ordinal.
    pub doc_topics: Vec<usize>,
}

impl SyntheticCorpusSpec {
    fn validate(&self) -> Result<()> {
        let counts = [
            self.num_topics,
            self.docs_per_topic,
            self.tokens_per_doc,
            self.vocab_size,
        ];
        if counts.contains(&0) {
            return Err(HceError::Config("synthetic corpus sizes must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.paraphrase_rate) {
            return Err(HceError::Config("paraphrase_rate must lie in [0, 1]".into()));
        }
        if self.topic_block() < SIGNATURE_WORDS || self.background_words() == 0 {
            return Err(HceError::Config(format!(
                "vocab_size {} is too small for {} topics",
                self.vocab_size, self.num_topics
            )));
        }
        Ok(())
    }

    fn topic_block(&self) -> usize {
        self.vocab_size * 3 / 4 / self.num_topics
    }

    fn background_words(&self) -> usize {
        self.vocab_size - self.topic_block() * self.num_topics
    }
}

fn word(id: usize) -> String {
    format!("w{id}")
}

fn surface(id: usize, paraphrase: bool) -> String {
    if paraphrase {
        format!("p{id}")
    } else {
        word(id)
    }
}

/// Deterministic under `spec.seed`.
pub fn generate_synthetic_corpus(spec: &SyntheticCorpusSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let block = spec.topic_block();
    let background_start = block * spec.num_topics;
    let background = spec.background_words();

    let mut documents = Vec::new();
    let mut signatures = Vec::new();
    let mut doc_topics = Vec::new();
    for topic in 0..spec.num_topics {
        let base = topic * block;
        for j in 0..spec.docs_per_topic {
            let signature: Vec<usize> = rand::seq::index::sample(&mut rng, block, SIGNATURE_WORDS)
                .into_iter()
                .map(|i| base + i)
                .collect();
            let tokens: Vec<String> = (0..spec.tokens_per_doc)
                .map(|_| {
                    let r: f64 = rng.random();
                    let id = if r < 0.4 {
                        signature[rng.random_range(0..SIGNATURE_WORDS)]
                    } else if r < 0.8 {
                        base + rng.random_range(0..block)
                    } else {
                        background_start + rng.random_range(0..background)
                    };
                    word(id)
                })
                .collect();
            documents.push(DocumentRecord {
                doc_id: format!("t{topic:03}-d{j:04}"),
                text: tokens.join(" "),
            });
            signatures.push(signature);
            doc_topics.push(topic);
        }
    }
    let corpus = Corpus::new(documents)?;

    let make_query = |rng: &mut ChaCha8Rng, doc: usize, id: String| -> TrainingPair {
        let sig = &signatures[doc];
        let base = doc_topics[doc] * block;
        let tokens: Vec<String> = (0..QUERY_TOKENS)
            .map(|_| {
                let id = if rng.random::<f64>() < 0.9 {
                    sig[rng.random_range(0..SIGNATURE_WORDS)]
                } else {
                    base + rng.random_range(0..block)
                };
                surface(id, rng.random::<f64>() < spec.paraphrase_rate)
            })
            .collect();
        TrainingPair {
            query: QueryRecord {
                query_id: id,
                text: tokens.join(" "),
            },
            positive_doc_id: corpus.documents()[doc].doc_id.clone(),
        }
    };

    let mut dev = Vec::new();
    let mut train = Vec::new();
    for topic in 0..spec.num_topics {
        let mut order: Vec<usize> = (0..spec.docs_per_topic)
            .map(|j| topic * spec.docs_per_topic + j)
            .collect();
        order.shuffle(&mut rng);
        // train targets cycle through the shuffled order; disjoint dev
        // targets follow them, overlapping ones reuse the first
        let n_dev = spec.dev_queries_per_topic;
        let n_train = spec.train_queries_per_topic;
        let dev_offset = if spec.disjoint_dev_targets { n_train } else { 0 };
        let dev_cycle = if spec.disjoint_dev_targets || n_train == 0 {
            order.len()
        } else {
            n_train.min(order.len())
        };
        for n in 0..n_train {
            let id = format!("train-t{topic:03}-{n:04}");
            train.push(make_query(&mut rng, order[n % order.len()], id));
        }
        for n in 0..n_dev {
            let id = format!("dev-t{topic:03}-{n:04}");
            let doc = order[(dev_offset + n % dev_cycle) % order.len()];
            dev.push(make_query(&mut rng, doc, id));
        }
    }
    let qrels = Qrels::from_pairs(&dev);
    Ok(SyntheticDataset {
        corpus,
        train,
        dev,
        qrels,
        doc_topics,
    })
}

/// Maps paraphrases back to their canonical word.
pub fn canonical_token(token: &str) -> String {
    match token.strip_prefix('p') {
        Some(rest) if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) => format!("w{rest}"),
        _ => token.to_string(),
    }
}

fn bag_of_words(text: &str) -> HashMap<String, f64> {
    let mut bag = HashMap::new();
    for t in text.split_whitespace() {
        *bag.entry(canonical_token(t)).or_insert(0.0) += 1.0;
    }
    let norm = bag.values().map(|c| c * c).sum::<f64>().sqrt();
    bag.values_mut().for_each(|c| *c /= norm);
    bag
}

/// Recall@1 of a cosine nearest-neighbour search over canonicalized
/// bag-of-words vectors: an upper reference for what an encoder can learn.
pub fn bag_of_words_recall_at_1(corpus: &Corpus, queries: &[TrainingPair]) -> f64 {
    if queries.is_empty() {
        return 0.0;
    }
    let docs: Vec<HashMap<String, f64>> = corpus.documents().iter().map(|d| bag_of_words(&d.text)).collect();
    let hits = queries
        .iter()
        .filter(|pair| {
            let q = bag_of_words(&pair.query.text);
            let mut best = (f64::NEG_INFINITY, usize::MAX);
            for (i, d) in docs.iter().enumerate() {
                let s: f64 = q.iter().map(|(t, w)| w * d.get(t).copied().unwrap_or(0.0)).sum();
                if s > best.0 {
                    best = (s, i);
                }
            }
            corpus.documents()[best.1].doc_id == pair.positive_doc_id
        })
        .count();
    hits as f64 / queries.len() as f64
}
