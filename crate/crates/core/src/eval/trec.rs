//! TREC qrels and run files.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::corpus::TrainingPair;
use crate::error::{HceError, Result};
use crate::index::SearchResult;

/// Graded judgments; only grades ≥ 1 are stored.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Qrels::default()
    }

    /// A grade of 0 marks the pair as non-relevant and is not stored.
    pub fn insert(&mut self, query_id: &str, doc_id: &str, grade: u32) {
        if grade == 0 {
            return;
        }
        self.judgments
            .entry(query_id.to_string())
            .or_default()
            .insert(doc_id.to_string(), grade);
    }

    /// Grade-1 judgments from `(query, positive)` pairs.
    pub fn from_pairs(pairs: &[TrainingPair]) -> Self {
        let mut q = Qrels::new();
        for p in pairs {
            q.insert(&p.query.query_id, &p.positive_doc_id, 1);
        }
        q
    }

    pub fn relevant(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(query_id)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }

    /// Parses `query_id 0 doc_id grade` lines.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut q = Qrels::new();
        for (n, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() || fields[0].starts_with('#') {
                continue;
            }
            if fields.len() != 4 {
                return Err(HceError::parse(
                    origin,
                    n + 1,
                    "expected 4 fields: query_id 0 doc_id grade",
                ));
            }
            let grade: i64 = fields[3]
                .parse()
                .map_err(|_| HceError::parse(origin, n + 1, format!("bad grade {:?}", fields[3])))?;
            if grade > 0 {
                q.insert(fields[0], fields[2], grade as u32);
            }
        }
        Ok(q)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HceError::io(path, e))?;
        Qrels::parse(&text, path)
    }

    pub fn to_trec(&self) -> String {
        let mut out = String::new();
        for (q, docs) in &self.judgments {
            for (d, g) in docs {
                let _ = writeln!(out, "{q} 0 {d} {g}");
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedDoc {
    pub doc_id: String,
    pub score: f64,
}

/// Ranked retrieval output per query.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunFile {
    rankings: BTreeMap<String, Vec<RankedDoc>>,
}

impl RunFile {
    pub fn new() -> Self {
        RunFile::default()
    }

    pub fn insert(&mut self, query_id: &str, ranking: Vec<RankedDoc>) {
        self.rankings.insert(query_id.to_string(), ranking);
    }

    pub fn insert_result(&mut self, query_id: &str, result: &SearchResult) {
        self.insert(
            query_id,
            result
                .hits
                .iter()
                .map(|h| RankedDoc {
                    doc_id: h.doc_id.clone(),
                    score: h.score,
                })
                .collect(),
        );
    }

    pub fn ranking(&self, query_id: &str) -> Option<&[RankedDoc]> {
        self.rankings.get(query_id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[RankedDoc])> {
        self.rankings.iter().map(|(q, r)| (q.as_str(), r.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.rankings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rankings.is_empty()
    }

    /// Parses `query_id Q0 doc_id rank score tag` lines. Documents are
    /// ordered by the rank column, which must run 1..m without gaps.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut raw: BTreeMap<String, Vec<(usize, RankedDoc, usize)>> = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() || fields[0].starts_with('#') {
                continue;
            }
            if fields.len() != 6 {
                return Err(HceError::parse(
                    origin,
                    n + 1,
                    "expected 6 fields: query_id Q0 doc_id rank score tag",
                ));
            }
            let rank: usize = fields[3]
                .parse()
                .map_err(|_| HceError::parse(origin, n + 1, format!("bad rank {:?}", fields[3])))?;
            let score: f64 = fields[4]
                .parse()
                .map_err(|_| HceError::parse(origin, n + 1, format!("bad score {:?}", fields[4])))?;
            raw.entry(fields[0].to_string()).or_default().push((
                rank,
                RankedDoc {
                    doc_id: fields[2].to_string(),
                    score,
                },
                n + 1,
            ));
        }
        let mut run = RunFile::new();
        for (q, mut entries) in raw {
            entries.sort_by_key(|e| e.0);
            let mut seen = HashSet::new();
            for (i, (rank, doc, line)) in entries.iter().enumerate() {
                if *rank != i + 1 {
                    return Err(HceError::parse(
                        origin,
                        *line,
                        format!(
                            "query {q}: ranks must run 1..m without gaps, found {rank} at position {}",
                            i + 1
                        ),
                    ));
                }
                if !seen.insert(doc.doc_id.as_str()) {
                    return Err(HceError::parse(
                        origin,
                        *line,
                        format!("query {q}: duplicate document {}", doc.doc_id),
                    ));
                }
            }
            run.insert(&q, entries.into_iter().map(|e| e.1).collect());
        }
        Ok(run)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HceError::io(path, e))?;
        RunFile::parse(&text, path)
    }

    pub fn to_trec(&self, tag: &str) -> String {
        let mut out = String::new();
        for (q, docs) in &self.rankings {
            for (i, d) in docs.iter().enumerate() {
                let _ = writeln!(out, "{q} Q0 {} {} {:.6} {tag}", d.doc_id, i + 1, d.score);
            }
        }
        out
    }
}
