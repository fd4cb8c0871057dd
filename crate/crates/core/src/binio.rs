//! Little-endian helpers for the versioned binary artifacts.
//!
//! Every artifact starts with a four-byte magic whose last byte is the format
//! version (`HCE1`, `HCT1`, `HCI1`).

use std::io::{Read, Write};

use crate::error::{HceError, Result};

pub(crate) struct Writer<W: Write> {
    inner: W,
}

impl<W: Write> Writer<W> {
    pub fn new(inner: W) -> Self {
        Writer { inner }
    }

    fn put(&mut self, bytes: &[u8]) -> Result<()> {
        self.inner
            .write_all(bytes)
            .map_err(|e| HceError::Format(format!("write failed: {e}")))
    }

    pub fn magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        self.put(magic)
    }

    pub fn u64(&mut self, x: u64) -> Result<()> {
        self.put(&x.to_le_bytes())
    }

    pub fn usize(&mut self, x: usize) -> Result<()> {
        self.u64(x as u64)
    }

    pub fn f64(&mut self, x: f64) -> Result<()> {
        self.put(&x.to_le_bytes())
    }

    pub fn f64s(&mut self, xs: &[f64]) -> Result<()> {
        for &x in xs {
            self.f64(x)?;
        }
        Ok(())
    }

    pub fn str(&mut self, s: &str) -> Result<()> {
        let len = u32::try_from(s.len()).map_err(|_| HceError::Format("string longer than 4 GiB".into()))?;
        self.put(&len.to_le_bytes())?;
        self.put(s.as_bytes())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner
            .flush()
            .map_err(|e| HceError::Format(format!("flush failed: {e}")))?;
        Ok(self.inner)
    }
}

pub(crate) struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    pub fn new(inner: R) -> Self {
        Reader { inner }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| HceError::Format(format!("truncated file: {e}")))?;
        Ok(buf)
    }

    /// Checks the three-byte family tag and the version byte separately so a
    /// future version is reported as a version mismatch, not garbage.
    pub fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got: [u8; 4] = self.take()?;
        if got[..3] != magic[..3] {
            return Err(HceError::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&got),
                String::from_utf8_lossy(magic)
            )));
        }
        if got[3] != magic[3] {
            return Err(HceError::VersionMismatch {
                expected: String::from_utf8_lossy(magic).into_owned(),
                found: String::from_utf8_lossy(&got).into_owned(),
            });
        }
        Ok(())
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    pub fn usize(&mut self) -> Result<usize> {
        let x = self.u64()?;
        usize::try_from(x).map_err(|_| HceError::Format(format!("count {x} too large")))
    }

    /// A count that will be used to size an allocation of `elem_size`-byte
    /// items; rejects absurd values before allocating.
    pub fn count(&mut self, elem_size: usize) -> Result<usize> {
        let n = self.usize()?;
        if n.checked_mul(elem_size.max(1))
            .is_none_or(|bytes| bytes > (1usize << 40))
        {
            return Err(HceError::Format(format!("implausible element count {n}")));
        }
        Ok(n)
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn str(&mut self) -> Result<String> {
        let len = u32::from_le_bytes(self.take()?) as usize;
        let mut buf = vec![0u8; len];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| HceError::Format(format!("truncated file: {e}")))?;
        String::from_utf8(buf).map_err(|_| HceError::Format("invalid UTF-8 string".into()))
    }

    pub fn expect_eof(&mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe) {
            Ok(0) => Ok(()),
            Ok(_) => Err(HceError::Format("trailing bytes after payload".into())),
            Err(e) => Err(HceError::Format(format!("read failed: {e}"))),
        }
    }
}
