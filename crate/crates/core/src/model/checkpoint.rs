//! Versioned binary checkpoint container.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic      8 bytes  "DCDPCKPT"
//! version    u32      currently 1
//! header     u64 length + UTF-8 JSON {"format_version", "network": NetworkConfig}
//! params     u64 count, then per parameter:
//!              u64 name length, name bytes,
//!              u32 rank, u64 per dimension,
//!              f64 values in row-major order
//! norms      u64 count, then per batch-norm layer:
//!              u64 channels, f64 decay, f64 eps, f64 mean[channels], f64 var[channels]
//! ```
//!
//! Values are stored as raw IEEE-754 bits, so save/load is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{rebuild, DualPathNetwork, NetworkConfig};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::tensor::RunningStats;

const MAGIC: &[u8; 8] = b"DCDPCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    network: NetworkConfig,
}

pub fn to_bytes(net: &DualPathNetwork) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.header(MAGIC, CHECKPOINT_VERSION);
    let header = serde_json::to_vec(&Header {
        format_version: CHECKPOINT_VERSION,
        network: net.config().clone(),
    })
    .map_err(|e| Error::Format(e.to_string()))?;
    w.blob(&header);

    w.u64(net.params.len() as u64);
    for p in net.params.iter() {
        w.blob(p.name().as_bytes());
        w.u32(p.value.ndim() as u32);
        for &d in p.value.shape() {
            w.u64(d as u64);
        }
        w.f64s(p.value.data());
    }

    w.u64(net.stats.len() as u64);
    for s in &net.stats {
        w.u64(s.mean.len() as u64);
        w.f64(s.decay);
        w.f64(s.eps);
        w.f64s(&s.mean);
        w.f64s(&s.var);
    }
    Ok(w.buf)
}

pub fn from_bytes(bytes: &[u8]) -> Result<DualPathNetwork> {
    let mut r = Reader::new(bytes);
    let version = r.header(MAGIC, "checkpoint")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let header: Header =
        serde_json::from_slice(r.blob()?).map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
    let mut net = rebuild(header.network)?;

    let count = r.usize()?;
    if count != net.params.len() {
        return Err(Error::Format(format!(
            "checkpoint has {count} parameters, configuration builds {}",
            net.params.len()
        )));
    }
    for p in net.params.iter_mut() {
        let name = std::str::from_utf8(r.blob()?).map_err(|e| Error::Format(e.to_string()))?;
        if name != p.name() {
            return Err(Error::Format(format!("expected parameter {}, found {name}", p.name())));
        }
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
        if shape != p.value.shape() {
            return Err(Error::Format(format!(
                "parameter {name} has shape {shape:?}, expected {:?}",
                p.value.shape()
            )));
        }
        let values = r.f64s(p.value.len())?;
        p.value.data_mut().copy_from_slice(&values);
    }

    let count = r.usize()?;
    if count != net.stats.len() {
        return Err(Error::Format(format!(
            "checkpoint has {count} batch-norm layers, configuration builds {}",
            net.stats.len()
        )));
    }
    for s in net.stats.iter_mut() {
        let channels = r.usize()?;
        if channels != s.mean.len() {
            return Err(Error::Format("batch-norm channel count mismatch".into()));
        }
        let decay = r.f64()?;
        let eps = r.f64()?;
        let mean = r.f64s(channels)?;
        let var = r.f64s(channels)?;
        *s = RunningStats { mean, var, decay, eps };
    }
    r.finish()?;
    Ok(net)
}

pub fn save(net: &DualPathNetwork, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_bytes(net)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<DualPathNetwork> {
    from_bytes(&fs::read(path)?)
}
