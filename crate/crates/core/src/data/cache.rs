//! Versioned binary cache for [`WindowedDataset`].
//!
//! Layout (little-endian):
//!
//! ```text
//! magic      8 bytes  "DCDPDSET"
//! version    u32      currently 1
//! header     u64 length + UTF-8 JSON {m, window_len, channels, stride, class_names, partition}
//! labels     u64 × m
//! norm flag  u32      0 = none, 1 = present
//! norm       f64 × channels means, then f64 × channels stds (only when present)
//! windows    f64 × (m · window_len · channels), row-major
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::normalize::Normalizer;
use super::window::WindowedDataset;
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::model::ChannelPartition;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"DCDPDSET";
pub const CACHE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    m: usize,
    window_len: usize,
    channels: usize,
    stride: usize,
    class_names: Vec<String>,
    partition: ChannelPartition,
}

pub fn to_bytes(ds: &WindowedDataset) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.header(MAGIC, CACHE_VERSION);
    let header = Header {
        m: ds.len(),
        window_len: ds.window_len,
        channels: ds.channels(),
        stride: ds.stride,
        class_names: ds.class_names.clone(),
        partition: ds.partition.clone(),
    };
    w.blob(&serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?);
    for &l in &ds.labels {
        w.u64(l as u64);
    }
    match &ds.normalization {
        None => w.u32(0),
        Some(n) => {
            w.u32(1);
            w.f64s(&n.mean);
            w.f64s(&n.std);
        }
    }
    w.f64s(ds.windows.data());
    Ok(w.buf)
}

pub fn from_bytes(bytes: &[u8]) -> Result<WindowedDataset> {
    let mut r = Reader::new(bytes);
    let version = r.header(MAGIC, "dataset cache")?;
    if version != CACHE_VERSION {
        return Err(Error::Format(format!("unsupported dataset cache version {version}")));
    }
    let h: Header =
        serde_json::from_slice(r.blob()?).map_err(|e| Error::Format(format!("dataset cache header: {e}")))?;
    let labels = (0..h.m)
        .map(|_| r.usize())
        .collect::<Result<Vec<_>>>()?;
    let normalization = match r.u32()? {
        0 => None,
        1 => Some(Normalizer {
            mean: r.f64s(h.channels)?,
            std: r.f64s(h.channels)?,
        }),
        other => return Err(Error::Format(format!("invalid normalization flag {other}"))),
    };
    let n = h
        .m
        .checked_mul(h.window_len)
        .and_then(|v| v.checked_mul(h.channels))
        .ok_or_else(|| Error::Format("window tensor size overflows".into()))?;
    let windows = Tensor::new(vec![h.m, h.window_len, h.channels], r.f64s(n)?)?;
    r.finish()?;
    let mut ds = WindowedDataset::new(windows, labels, h.stride, h.class_names, h.partition)?;
    ds.normalization = normalization;
    Ok(ds)
}

pub fn save_dataset(ds: &WindowedDataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_bytes(ds)?)?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<WindowedDataset> {
    from_bytes(&fs::read(path)?)
}
