//! Little-endian cursor helpers shared by the binary formats.

use crate::error::{Error, Result};

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::TruncatedFile);
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn magic(&mut self, expected: &'static str) -> Result<()> {
        let got = self
            .take(expected.len())
            .map_err(|_| Error::BadMagic { expected })?;
        if got != expected.as_bytes() {
            return Err(Error::BadMagic { expected });
        }
        Ok(())
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    /// Reads `n` f32 values widened to f64, rejecting non-finite entries.
    pub(crate) fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = n.checked_mul(4).ok_or(Error::TruncatedFile)?;
        let raw = self.take(bytes)?;
        raw.chunks_exact(4)
            .map(|c| {
                let v = f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Malformed("non-finite value".into()))
                }
            })
            .collect()
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::Malformed(format!(
                "{} trailing bytes",
                self.remaining()
            )));
        }
        Ok(())
    }
}

#[derive(Default)]
pub(crate) struct Writer {
    pub(crate) buf: Vec<u8>,
}

impl Writer {
    pub(crate) fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub(crate) fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }

    pub(crate) fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }

    pub(crate) fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }

    /// Narrows to f32; values that overflow f32 are rejected.
    pub(crate) fn f32s(&mut self, values: &[f64]) -> Result<()> {
        for v in values {
            let narrow = *v as f32;
            if !narrow.is_finite() {
                return Err(Error::NonFinite);
            }
            self.bytes(&narrow.to_le_bytes());
        }
        Ok(())
    }
}

/// Narrows sizes to the u32 fields of the formats.
pub(crate) fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::ShapeMismatch(format!("{what} {v} exceeds u32")))
}
