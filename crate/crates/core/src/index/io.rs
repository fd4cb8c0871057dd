//! `HCI1` index files: magic, `dim` and row count (u64 LE), the doc id table
//! (u32 length + UTF-8 bytes each), then the row-major f64 LE matrix.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::MipsIndex;
use crate::binio::{Reader, Writer};
use crate::error::{HceError, Result};
use crate::vector::UnitVector;

pub const INDEX_MAGIC: &[u8; 4] = b"HCI1";

impl MipsIndex {
    pub fn write_to<W: Write>(&self, out: W) -> Result<W> {
        let mut w = Writer::new(out);
        w.magic(INDEX_MAGIC)?;
        w.usize(self.dim)?;
        w.usize(self.len())?;
        for id in &self.doc_ids {
            w.str(id)?;
        }
        w.f64s(&self.rows)?;
        w.finish()
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let mut r = Reader::new(input);
        r.expect_magic(INDEX_MAGIC)?;
        let dim = r.count(8)?;
        let rows = r.count(8 * dim.max(1))?;
        let ids = (0..rows).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
        let mut entries = Vec::with_capacity(rows);
        for id in ids {
            let v = UnitVector::new(r.f64s(dim)?).map_err(|e| HceError::Format(format!("row {id}: {e}")))?;
            entries.push((id, v));
        }
        r.expect_eof()?;
        MipsIndex::from_vectors(dim, entries)
    }
}

pub fn write_index(index: &MipsIndex, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| HceError::io(path, e))?;
    index.write_to(BufWriter::new(file)).map(|_| ())
}

pub fn read_index(path: &Path) -> Result<MipsIndex> {
    let file = File::open(path).map_err(|e| HceError::io(path, e))?;
    MipsIndex::read_from(BufReader::new(file)).map_err(|e| match e {
        HceError::Format(msg) => HceError::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}
