//! Document, query and training-pair records plus their text file formats.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{HceError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentRecord {
    pub doc_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryRecord {
    pub query_id: String,
    pub text: String,
}

/// A query together with the id of its relevant document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingPair {
    pub query: QueryRecord,
    pub positive_doc_id: String,
}

/// Ordered documents with an id → ordinal map.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    documents: Vec<DocumentRecord>,
    id_index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(documents: Vec<DocumentRecord>) -> Result<Self> {
        let mut id_index = HashMap::with_capacity(documents.len());
        for (i, doc) in documents.iter().enumerate() {
            if doc.doc_id.is_empty() {
                return Err(HceError::Format(format!("document #{i} has an empty doc_id")));
            }
            if id_index.insert(doc.doc_id.clone(), i).is_some() {
                return Err(HceError::DuplicateDocId(doc.doc_id.clone()));
            }
        }
        Ok(Corpus { documents, id_index })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn documents(&self) -> &[DocumentRecord] {
        &self.documents
    }

    pub fn get(&self, ordinal: usize) -> Option<&DocumentRecord> {
        self.documents.get(ordinal)
    }

    pub fn ordinal(&self, doc_id: &str) -> Option<usize> {
        self.id_index.get(doc_id).copied()
    }

    /// A new corpus holding the given ordinals, in the given order.
    pub fn subset(&self, ordinals: &[usize]) -> Result<Corpus> {
        let docs = ordinals
            .iter()
            .map(|&i| {
                self.documents.get(i).cloned().ok_or(HceError::IndexOutOfRange {
                    index: i,
                    len: self.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Corpus::new(docs)
    }

    /// Reads JSON Lines with string fields `doc_id` and `text`. Blank lines
    /// and lines starting with `#` are skipped.
    pub fn from_jsonl_str(text: &str, origin: &Path) -> Result<Corpus> {
        #[derive(Deserialize)]
        struct Line {
            doc_id: String,
            text: String,
        }
        let mut docs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let rec: Line = serde_json::from_str(trimmed)
                .map_err(|e| HceError::parse(origin, lineno + 1, e.to_string()))?;
            if rec.doc_id.is_empty() {
                return Err(HceError::parse(origin, lineno + 1, "empty doc_id"));
            }
            docs.push(DocumentRecord {
                doc_id: rec.doc_id,
                text: rec.text,
            });
        }
        Corpus::new(docs).map_err(|e| match e {
            HceError::DuplicateDocId(id) => HceError::parse(origin, 0, format!("duplicate doc_id {id}")),
            other => other,
        })
    }

    pub fn load_jsonl(path: &Path) -> Result<Corpus> {
        let text = fs::read_to_string(path).map_err(|e| HceError::io(path, e))?;
        Corpus::from_jsonl_str(&text, path)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for doc in &self.documents {
            let line = serde_json::json!({ "doc_id": doc.doc_id, "text": doc.text });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }
}

/// Parses `query_id<TAB>query_text<TAB>doc_id` lines.
pub fn parse_pairs(text: &str, origin: &Path) -> Result<Vec<TrainingPair>> {
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(HceError::parse(
                origin,
                lineno + 1,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        if fields[0].is_empty() || fields[2].is_empty() {
            return Err(HceError::parse(origin, lineno + 1, "empty query_id or doc_id"));
        }
        pairs.push(TrainingPair {
            query: QueryRecord {
                query_id: fields[0].to_string(),
                text: fields[1].to_string(),
            },
            positive_doc_id: fields[2].to_string(),
        });
    }
    Ok(pairs)
}

pub fn load_pairs(path: &Path) -> Result<Vec<TrainingPair>> {
    let text = fs::read_to_string(path).map_err(|e| HceError::io(path, e))?;
    parse_pairs(&text, path)
}

pub fn format_pairs(pairs: &[TrainingPair]) -> String {
    let mut out = String::new();
    for p in pairs {
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            p.query.query_id, p.query.text, p.positive_doc_id
        ));
    }
    out
}

/// Parses `query_id<TAB>query_text` lines.
pub fn parse_queries(text: &str, origin: &Path) -> Result<Vec<QueryRecord>> {
    let mut queries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, body) = line
            .split_once('\t')
            .ok_or_else(|| HceError::parse(origin, lineno + 1, "expected query_id<TAB>text"))?;
        if id.is_empty() {
            return Err(HceError::parse(origin, lineno + 1, "empty query_id"));
        }
        queries.push(QueryRecord {
            query_id: id.to_string(),
            text: body.to_string(),
        });
    }
    Ok(queries)
}
