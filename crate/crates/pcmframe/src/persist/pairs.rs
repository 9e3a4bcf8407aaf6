//! `PCMD` pair datasets.
//!
//! ```text
//! "PCMD" | version u32 | d_z u32 | d_emb u32 | n u64 | fingerprint u64 |
//! generation seed u64 | n × (d_z + d_emb) f32, each record SE then CIE
//! ```

use std::path::Path;

use super::bytes::{to_u32, Reader, Writer};
use crate::error::{Error, Result};
use crate::world::{PairDataset, PairRecord};

pub const MAGIC: &str = "PCMD";
pub const VERSION: u32 = 1;

pub fn encode_pairs(dataset: &PairDataset) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.bytes(MAGIC.as_bytes());
    w.u32(VERSION);
    w.u32(to_u32(dataset.d_z, "d_z")?);
    w.u32(to_u32(dataset.d_emb, "d_emb")?);
    w.u64(dataset.records.len() as u64);
    w.u64(dataset.fingerprint);
    w.u64(dataset.generation_seed);
    for (i, r) in dataset.records.iter().enumerate() {
        if r.se.len() != dataset.d_z || r.cie.len() != dataset.d_emb {
            return Err(Error::ShapeMismatch(format!("record {i} has wrong widths")));
        }
        w.f32s(&r.se)?;
        w.f32s(&r.cie)?;
    }
    Ok(w.buf)
}

pub fn decode_pairs(bytes: &[u8]) -> Result<PairDataset> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::VersionMismatch {
            expected: VERSION,
            found: version,
        });
    }
    let d_z = r.u32()? as usize;
    let d_emb = r.u32()? as usize;
    let n = r.u64()?;
    let fingerprint = r.u64()?;
    let generation_seed = r.u64()?;
    if d_z == 0 || d_emb == 0 {
        return Err(Error::Malformed("zero record width".into()));
    }
    let per_record = (d_z + d_emb) * 4;
    let total = usize::try_from(n)
        .ok()
        .and_then(|n| n.checked_mul(per_record))
        .ok_or(Error::TruncatedFile)?;
    if total > r.remaining() {
        return Err(Error::TruncatedFile);
    }
    let records = (0..n)
        .map(|_| {
            Ok(PairRecord {
                se: r.f32s(d_z)?,
                cie: r.f32s(d_emb)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok(PairDataset {
        d_z,
        d_emb,
        generation_seed,
        fingerprint,
        records,
    })
}

pub fn save_pairs(path: &Path, dataset: &PairDataset) -> Result<()> {
    std::fs::write(path, encode_pairs(dataset)?)?;
    Ok(())
}

pub fn load_pairs(path: &Path) -> Result<PairDataset> {
    decode_pairs(&std::fs::read(path)?)
}
