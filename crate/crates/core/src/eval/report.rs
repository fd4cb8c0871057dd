//! Result tables rendered as CSV or aligned text.

use std::fmt::Write as _;

use super::experiments::{SweepRow, WaveResult, SWEEP_CUTOFFS};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Table {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.headers.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Columns padded to their widest cell and separated by two spaces.
    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.headers.iter().map(|h| h.chars().count()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut out = String::new();
        for line in std::iter::once(&self.headers).chain(&self.rows) {
            let cells: Vec<String> = line
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c:>w$}"))
                .collect();
            let _ = writeln!(out, "{}", cells.join("  "));
        }
        out
    }
}

fn metric(x: f64) -> String {
    format!("{x:.4}")
}

fn optional(x: Option<f64>) -> String {
    x.map(metric).unwrap_or_else(|| "-".into())
}

pub fn incremental_table(rows: &[WaveResult]) -> Table {
    let mut t = Table::new([
        "added",
        "index_size",
        "old_r@1",
        "old_r@10",
        "new_queries",
        "new_r@1",
        "new_r@10",
    ]);
    for r in rows {
        t.push(vec![
            r.added.to_string(),
            r.index_size.to_string(),
            metric(r.old_recall_1),
            metric(r.old_recall_10),
            r.new_queries.to_string(),
            optional(r.new_recall_1),
            optional(r.new_recall_10),
        ]);
    }
    t
}

pub fn sweep_table(rows: &[SweepRow]) -> Table {
    let mut headers = vec!["b".to_string(), "L".to_string()];
    headers.extend(SWEEP_CUTOFFS.iter().map(|k| format!("r@{k}")));
    let mut t = Table::new(headers);
    for r in rows {
        let mut cells = vec![r.branching.to_string(), r.depth.to_string()];
        cells.extend(r.recall.iter().map(|&x| metric(x)));
        t.push(cells);
    }
    t
}
