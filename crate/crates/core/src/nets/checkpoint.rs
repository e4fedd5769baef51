//! Versioned little-endian binary checkpoint of a [`HyperNetwork`].
//!
//! Layout:
//!
//! ```text
//! magic     8 bytes  "CUBEFLD\0"
//! version   u32      1
//! enc_res   u32
//! enc_hid   u32 count, then u32 widths
//! latent    u32
//! head_hid  u32 count, then u32 widths
//! target    u32 count, then u32 widths (3 … 1)
//! tensors   u32 count, then per tensor: u32 rank, u64 dims, f64 data
//! ```

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::autodiff::Tensor;

use super::{HyperConfig, HyperNetwork, NetError, TargetArch};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CUBEFLD\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated at byte {0}")]
    Truncated(usize),
    #[error("{0} trailing bytes after checkpoint payload")]
    TrailingBytes(usize),
    #[error("inconsistent checkpoint: {0}")]
    Inconsistent(#[from] NetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_widths(out: &mut Vec<u8>, widths: &[usize]) {
    put_u32(out, widths.len() as u32);
    for &w in widths {
        put_u32(out, w as u32);
    }
}

pub fn encode_checkpoint(net: &HyperNetwork) -> Vec<u8> {
    let cfg = net.config();
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    put_u32(&mut out, cfg.encoder_resolution as u32);
    put_widths(&mut out, &cfg.encoder_hidden);
    put_u32(&mut out, cfg.latent_dim as u32);
    put_widths(&mut out, &cfg.head_hidden);
    put_widths(&mut out, cfg.target.widths());
    let params = net.params();
    put_u32(&mut out, params.len() as u32);
    for t in params {
        put_u32(&mut out, t.shape().len() as u32);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.bytes.len() - self.pos < n {
            return Err(CheckpointError::Truncated(self.bytes.len()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn widths(&mut self) -> Result<Vec<usize>, CheckpointError> {
        let n = self.u32()? as usize;
        (0..n).map(|_| self.u32().map(|w| w as usize)).collect()
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<HyperNetwork, CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8).map_err(|_| CheckpointError::BadMagic)? != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let encoder_resolution = r.u32()? as usize;
    let encoder_hidden = r.widths()?;
    let latent_dim = r.u32()? as usize;
    let head_hidden = r.widths()?;
    let target = TargetArch::new(r.widths()?)?;
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let len: usize = shape.iter().product();
        let raw = r.take(len.checked_mul(8).ok_or(CheckpointError::Truncated(bytes.len()))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Tensor::new(shape, data).map_err(NetError::from)?);
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
    }
    let config = HyperConfig {
        encoder_resolution,
        encoder_hidden,
        latent_dim,
        head_hidden,
        target,
    };
    Ok(HyperNetwork::from_params(config, tensors)?)
}

pub fn save_checkpoint(net: &HyperNetwork, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    fs::write(path, encode_checkpoint(net))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<HyperNetwork, CheckpointError> {
    decode_checkpoint(&fs::read(path)?)
}
