//! Exact maximum-inner-product search over document embeddings.

mod io;

use std::cmp::Ordering;
use std::collections::HashMap;

use rayon::prelude::*;

use crate::corpus::{Corpus, DocumentRecord};
use crate::encoder::EncoderParameters;
use crate::error::{HceError, Result};
use crate::vector::{dot, UnitVector};

pub use io::{read_index, write_index, INDEX_MAGIC};

#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub doc_id: String,
    pub score: f64,
}

/// Hits by descending score; equal scores by ascending doc id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchResult {
    pub hits: Vec<Hit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MipsIndex {
    dim: usize,
    doc_ids: Vec<String>,
    positions: HashMap<String, usize>,
    rows: Vec<f64>,
    generation: u64,
}

impl MipsIndex {
    pub fn new(dim: usize) -> Self {
        MipsIndex {
            dim,
            doc_ids: Vec::new(),
            positions: HashMap::new(),
            rows: Vec::new(),
            generation: 0,
        }
    }

    pub fn from_vectors(dim: usize, entries: Vec<(String, UnitVector)>) -> Result<Self> {
        let mut index = MipsIndex::new(dim);
        index.add_vectors(entries)?;
        index.generation = 0;
        Ok(index)
    }

    /// Encodes every document without dropout.
    pub fn build(params: &EncoderParameters, corpus: &Corpus) -> Result<Self> {
        let entries = encode_documents(params, corpus.documents())?;
        MipsIndex::from_vectors(params.dim(), entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.positions.contains_key(doc_id)
    }

    /// Appends rows; nothing is changed if any id is a duplicate or any
    /// vector has the wrong dimension.
    pub fn add_vectors(&mut self, entries: Vec<(String, UnitVector)>) -> Result<()> {
        if entries.is_empty() {
            return Ok(());
        }
        let mut fresh = std::collections::HashSet::new();
        for (id, v) in &entries {
            if self.positions.contains_key(id) || !fresh.insert(id.as_str()) {
                return Err(HceError::DuplicateDocId(id.clone()));
            }
            if v.dim() != self.dim {
                return Err(HceError::DimensionMismatch {
                    expected: self.dim,
                    found: v.dim(),
                });
            }
        }
        for (id, v) in entries {
            self.positions.insert(id.clone(), self.doc_ids.len());
            self.doc_ids.push(id);
            self.rows.extend_from_slice(&v);
        }
        self.generation += 1;
        Ok(())
    }

    /// Encode-only insertion of new documents.
    pub fn add_documents(&mut self, params: &EncoderParameters, docs: &[DocumentRecord]) -> Result<()> {
        let entries = encode_documents(params, docs)?;
        self.add_vectors(entries)
    }

    /// Deletes rows, keeping the survivors in their relative order. Fails
    /// without changes if any id is absent.
    pub fn remove_documents<S: AsRef<str>>(&mut self, doc_ids: &[S]) -> Result<()> {
        let mut doomed = vec![false; self.len()];
        for id in doc_ids {
            let id = id.as_ref();
            let &pos = self
                .positions
                .get(id)
                .ok_or_else(|| HceError::UnknownDocument(id.to_string()))?;
            doomed[pos] = true;
        }
        if doc_ids.is_empty() {
            return Ok(());
        }
        let dim = self.dim;
        let mut keep_ids = Vec::with_capacity(self.len());
        let mut keep_rows = Vec::with_capacity(self.rows.len());
        for (i, id) in std::mem::take(&mut self.doc_ids).into_iter().enumerate() {
            if !doomed[i] {
                keep_ids.push(id);
                keep_rows.extend_from_slice(&self.rows[i * dim..(i + 1) * dim]);
            }
        }
        self.doc_ids = keep_ids;
        self.rows = keep_rows;
        self.positions = self
            .doc_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        self.generation += 1;
        Ok(())
    }

    /// Exact top-`k` by inner product.
    pub fn search(&self, q: &[f64], k: usize) -> Result<SearchResult> {
        if q.len() != self.dim {
            return Err(HceError::DimensionMismatch {
                expected: self.dim,
                found: q.len(),
            });
        }
        let mut scored: Vec<(f64, usize)> = self
            .rows
            .chunks_exact(self.dim)
            .map(|row| dot(q, row))
            .zip(0..)
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
            b.0.total_cmp(&a.0)
                .then_with(|| self.doc_ids[a.1].cmp(&self.doc_ids[b.1]))
        };
        if k == 0 {
            scored.clear();
        } else if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_unstable_by(cmp);
        Ok(SearchResult {
            hits: scored
                .into_iter()
                .map(|(score, i)| Hit {
                    doc_id: self.doc_ids[i].clone(),
                    score,
                })
                .collect(),
        })
    }

    /// Searches many queries in parallel; results keep the input order.
    pub fn search_many<Q: AsRef<[f64]> + Sync>(&self, queries: &[Q], k: usize) -> Result<Vec<SearchResult>> {
        queries.par_iter().map(|q| self.search(q.as_ref(), k)).collect()
    }
}

fn encode_documents(
    params: &EncoderParameters,
    docs: &[DocumentRecord],
) -> Result<Vec<(String, UnitVector)>> {
    docs.par_iter()
        .map(|d| {
            params
                .encode_text(&d.text)
                .map(|v| (d.doc_id.clone(), v))
                .map_err(|e| e.for_document(&d.doc_id))
        })
        .collect()
}
