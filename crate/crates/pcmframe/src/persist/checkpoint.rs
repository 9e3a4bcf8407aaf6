//! `PCMF` checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "PCMF" | version u32 | config block | tensor count u32 | tensors...
//! config block: kind u32 (0 dense, 1 plain) | d u32 | n_blocks u32 | n_fc u32 | dropout f64
//! tensor: name length u32 | UTF-8 name | rank u32 | dims u32 × rank | f32 data, row-major
//! ```
//!
//! Model tensors come first in parameter-store order. Optimizer state, when
//! present, follows as `adam.step` (rank 0) and then `adam.m.<name>` and
//! `adam.v.<name>` for each trainable tensor.

use std::path::Path;

use super::bytes::{to_u32, Reader, Writer};
use crate::c2s::{Architecture, C2SConfig, C2SNetwork};
use crate::embedding::SeededRng;
use crate::error::{Error, Result};
use crate::nn::{AdamState, LayerSpec, Network};

pub const MAGIC: &str = "PCMF";
pub const VERSION: u32 = 1;
const MAX_RANK: u32 = 8;
/// Larger step counts are not exactly representable in f32.
const MAX_ADAM_STEP: u64 = 1 << 24;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: C2SNetwork,
    pub optimizer: Option<AdamState>,
}

fn write_tensor(w: &mut Writer, name: &str, shape: &[usize], data: &[f64]) -> Result<()> {
    w.u32(to_u32(name.len(), "tensor name length")?);
    w.bytes(name.as_bytes());
    w.u32(to_u32(shape.len(), "rank")?);
    for d in shape {
        w.u32(to_u32(*d, "dimension")?);
    }
    w.f32s(data)
}

pub fn encode_checkpoint(net: &C2SNetwork, optimizer: Option<&AdamState>) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.bytes(MAGIC.as_bytes());
    w.u32(VERSION);
    match *net.architecture() {
        Architecture::Dense(c) => {
            w.u32(0);
            w.u32(to_u32(c.d, "d")?);
            w.u32(to_u32(c.n_blocks, "n_blocks")?);
            w.u32(0);
            w.f64(c.dropout_rate);
        }
        Architecture::PlainMlp { d, n_fc } => {
            w.u32(1);
            w.u32(to_u32(d, "d")?);
            w.u32(0);
            w.u32(to_u32(n_fc, "n_fc")?);
            w.f64(0.0);
        }
    }
    let params = net.network().params();
    let trainable = params.tensors().iter().filter(|t| t.trainable).count();
    let count = params.len() + optimizer.map_or(0, |_| 1 + 2 * trainable);
    w.u32(to_u32(count, "tensor count")?);
    for t in params.tensors() {
        write_tensor(&mut w, &t.name, &t.shape, &t.data)?;
    }
    if let Some(adam) = optimizer {
        if adam.m.len() != params.len() || adam.v.len() != params.len() {
            return Err(Error::ShapeMismatch(
                "optimizer state does not mirror parameters".into(),
            ));
        }
        if adam.step > MAX_ADAM_STEP {
            return Err(Error::ShapeMismatch(format!(
                "optimizer step {} too large",
                adam.step
            )));
        }
        write_tensor(&mut w, "adam.step", &[], &[adam.step as f64])?;
        for (i, t) in params.tensors().iter().enumerate() {
            if t.trainable {
                write_tensor(&mut w, &format!("adam.m.{}", t.name), &t.shape, &adam.m[i])?;
                write_tensor(&mut w, &format!("adam.v.{}", t.name), &t.shape, &adam.v[i])?;
            }
        }
    }
    Ok(w.buf)
}

/// Parameter count implied by a layer list, computed without allocating.
fn param_count(layers: &[LayerSpec]) -> Option<usize> {
    layers.iter().try_fold(0usize, |acc, l| {
        let n = match l {
            LayerSpec::FullyConnected { input, output } => {
                input.checked_mul(*output)?.checked_add(*output)?
            }
            LayerSpec::PRelu => 1,
            LayerSpec::BatchNorm { features, .. } => features.checked_mul(4)?,
            _ => 0,
        };
        acc.checked_add(n)
    })
}

fn read_architecture(r: &mut Reader) -> Result<Architecture> {
    let kind = r.u32()?;
    let d = r.u32()? as usize;
    let n_blocks = r.u32()? as usize;
    let n_fc = r.u32()? as usize;
    let dropout_rate = r.f64()?;
    let arch = match kind {
        0 if n_fc == 0 => Architecture::Dense(C2SConfig {
            d,
            n_blocks,
            dropout_rate,
        }),
        1 if n_blocks == 0 && dropout_rate.to_bits() == 0 => Architecture::PlainMlp { d, n_fc },
        _ => return Err(Error::Malformed("invalid architecture block".into())),
    };
    Ok(arch)
}

struct RawTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn read_tensor(r: &mut Reader) -> Result<RawTensor> {
    let name_len = r.u32()? as usize;
    let name = std::str::from_utf8(r.take(name_len)?)
        .map_err(|_| Error::Malformed("tensor name is not UTF-8".into()))?
        .to_string();
    let rank = r.u32()?;
    if rank > MAX_RANK {
        return Err(Error::Malformed(format!("tensor `{name}` has rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank as usize);
    for _ in 0..rank {
        shape.push(r.u32()? as usize);
    }
    let n = shape
        .iter()
        .try_fold(1usize, |a, d| a.checked_mul(*d))
        .ok_or(Error::TruncatedFile)?;
    let data = r.f32s(n)?;
    Ok(RawTensor { name, shape, data })
}

fn expect_tensor(r: &mut Reader, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
    let t = read_tensor(r)?;
    if t.name != name || t.shape != shape {
        return Err(Error::ShapeMismatch(format!(
            "expected tensor `{name}` {shape:?}, found `{}` {:?}",
            t.name, t.shape
        )));
    }
    Ok(t.data)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::VersionMismatch {
            expected: VERSION,
            found: version,
        });
    }
    let arch = read_architecture(&mut r)?;
    let count = r.u32()? as usize;
    // every block or layer needs at least one tensor header in the file
    let (n_blocks, n_fc) = match arch {
        Architecture::Dense(c) => (c.n_blocks, 0),
        Architecture::PlainMlp { n_fc, .. } => (0, n_fc),
    };
    if n_blocks.max(n_fc).saturating_mul(12) > r.remaining() {
        return Err(Error::TruncatedFile);
    }
    let (layers, _) = arch.build_layers()?;
    // refuse to allocate a network larger than the file could describe
    let needed = param_count(&layers)
        .and_then(|n| n.checked_mul(4))
        .ok_or(Error::TruncatedFile)?;
    if needed > r.remaining() {
        return Err(Error::TruncatedFile);
    }
    let network = Network::new(arch.width(), layers, &mut SeededRng::new(0))?;
    let mut net = C2SNetwork::from_parts(arch, network)?;

    let n_params = net.network().params().len();
    let trainable: Vec<bool> = net
        .network()
        .params()
        .tensors()
        .iter()
        .map(|t| t.trainable)
        .collect();
    let n_trainable = trainable.iter().filter(|t| **t).count();
    let with_adam = if count == n_params {
        false
    } else if count == n_params + 1 + 2 * n_trainable {
        true
    } else {
        return Err(Error::ShapeMismatch(format!(
            "{count} tensors for an architecture with {n_params} parameters"
        )));
    };

    for i in 0..n_params {
        let (name, shape) = {
            let t = net.network().params().tensor(i);
            (t.name.clone(), t.shape.clone())
        };
        let data = expect_tensor(&mut r, &name, &shape)?;
        net.network_mut().params_mut().tensor_mut(i).data = data;
    }

    let optimizer = if with_adam {
        let step = expect_tensor(&mut r, "adam.step", &[])?[0];
        if step < 0.0 || step.fract() != 0.0 || step > MAX_ADAM_STEP as f64 {
            return Err(Error::Malformed(format!("invalid optimizer step {step}")));
        }
        let mut adam = AdamState::new(net.network().params());
        adam.step = step as u64;
        for (i, _) in trainable.iter().enumerate().filter(|(_, t)| **t) {
            let t = net.network().params().tensor(i);
            adam.m[i] = expect_tensor(&mut r, &format!("adam.m.{}", t.name), &t.shape)?;
            adam.v[i] = expect_tensor(&mut r, &format!("adam.v.{}", t.name), &t.shape)?;
            if adam.v[i].iter().any(|v| *v < 0.0) {
                return Err(Error::Malformed(format!(
                    "negative second moment in `{}`",
                    t.name
                )));
            }
        }
        Some(adam)
    } else {
        None
    };
    r.finish()?;
    Ok(Checkpoint { net, optimizer })
}

pub fn save_checkpoint(path: &Path, net: &C2SNetwork, optimizer: Option<&AdamState>) -> Result<()> {
    std::fs::write(path, encode_checkpoint(net, optimizer)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&std::fs::read(path)?)
}
