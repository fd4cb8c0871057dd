//! `HCE1` parameter files: magic, then `dim`, `hidden`, `bucket_count`,
//! `hash_seed` (u64 LE), `dropout_rate` (f64 LE), then the embedding table and
//! the projection, row-major f64 LE.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{EncoderParameters, Vocabulary};
use crate::binio::{Reader, Writer};
use crate::error::{HceError, Result};

pub const ENCODER_MAGIC: &[u8; 4] = b"HCE1";

impl EncoderParameters {
    pub fn write_to<W: Write>(&self, out: W) -> Result<W> {
        let mut w = Writer::new(out);
        w.magic(ENCODER_MAGIC)?;
        w.usize(self.dim)?;
        w.usize(self.hidden)?;
        w.u64(u64::from(self.vocab.bucket_count()))?;
        w.u64(self.vocab.hash_seed())?;
        w.f64(self.dropout_rate)?;
        w.f64s(&self.embedding_table)?;
        w.f64s(&self.projection)?;
        w.finish()
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let mut r = Reader::new(input);
        r.expect_magic(ENCODER_MAGIC)?;
        let dim = r.count(8)?;
        let hidden = r.count(8)?;
        let buckets =
            u32::try_from(r.u64()?).map_err(|_| HceError::Format("bucket_count exceeds u32".into()))?;
        let hash_seed = r.u64()?;
        let dropout_rate = r.f64()?;
        let vocab = Vocabulary::new(buckets, hash_seed)?;
        let rows = (buckets as usize)
            .checked_mul(hidden)
            .ok_or_else(|| HceError::Format("embedding table too large".into()))?;
        let embedding_table = r.f64s(rows)?;
        let projection = r.f64s(dim * hidden)?;
        r.expect_eof()?;
        EncoderParameters::from_parts(vocab, dim, hidden, dropout_rate, embedding_table, projection)
    }
}

pub fn write_encoder(params: &EncoderParameters, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| HceError::io(path, e))?;
    params
        .write_to(BufWriter::new(file))
        .map(|_| ())
        .map_err(|e| with_path(e, path))
}

pub fn read_encoder(path: &Path) -> Result<EncoderParameters> {
    let file = File::open(path).map_err(|e| HceError::io(path, e))?;
    EncoderParameters::read_from(BufReader::new(file)).map_err(|e| with_path(e, path))
}

fn with_path(e: HceError, path: &Path) -> HceError {
    match e {
        HceError::Format(msg) => HceError::Format(format!("{}: {msg}", path.display())),
        other => other,
    }
}
