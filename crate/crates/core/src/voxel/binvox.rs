//! binvox v1 reader and writer.
//!
//! The writer emits the canonical header
//!
//! ```text
//! #binvox 1
//! dim n n n
//! translate 0 0 0
//! scale 1
//! data
//! ```
//!
//! followed by `(value, count)` byte pairs with `count` in `1..=255`.

use std::fs;
use std::path::Path;

use thiserror::Error;

use super::VoxelGrid;

#[derive(Debug, Error)]
pub enum BinvoxError {
    #[error("missing `#binvox` magic line")]
    BadMagic,
    #[error("malformed header line: {0:?}")]
    MalformedHeader(String),
    #[error("header has no `dim` line")]
    MissingDim,
    #[error("header ended before `data`")]
    MissingData,
    #[error("non-cubic grid dimensions {0:?}")]
    NonCubic([usize; 3]),
    #[error("grid dimension must be positive")]
    ZeroDim,
    #[error("run-length data has an odd number of bytes ({0})")]
    TruncatedRle(usize),
    #[error("zero-length run at byte offset {0}")]
    ZeroRun(usize),
    #[error("voxel value {value} at byte offset {offset} is not 0 or 1")]
    InvalidValue { value: u8, offset: usize },
    #[error("run-length data covers more than {expected} voxels")]
    Overflow { expected: usize },
    #[error("run-length data covers {got} of {expected} voxels")]
    Underflow { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn parse_binvox(bytes: &[u8]) -> Result<VoxelGrid, BinvoxError> {
    let mut pos = 0;
    let next_line = |pos: &mut usize| -> Option<String> {
        if *pos >= bytes.len() {
            return None;
        }
        let end = bytes[*pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|i| *pos + i)
            .unwrap_or(bytes.len());
        let line = String::from_utf8_lossy(&bytes[*pos..end]).trim().to_string();
        *pos = (end + 1).min(bytes.len());
        Some(line)
    };

    let magic = next_line(&mut pos).ok_or(BinvoxError::BadMagic)?;
    let mut parts = magic.split_whitespace();
    if parts.next() != Some("#binvox") {
        return Err(BinvoxError::BadMagic);
    }

    let mut dims: Option<[usize; 3]> = None;
    loop {
        let line = next_line(&mut pos).ok_or(BinvoxError::MissingData)?;
        let mut words = line.split_whitespace();
        match words.next() {
            Some("data") => break,
            Some("dim") => {
                let vals: Vec<usize> = words
                    .map(|w| w.parse::<usize>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| BinvoxError::MalformedHeader(line.clone()))?;
                if vals.len() != 3 {
                    return Err(BinvoxError::MalformedHeader(line));
                }
                dims = Some([vals[0], vals[1], vals[2]]);
            }
            Some("translate") | Some("scale") => {
                let ok = words.all(|w| w.parse::<f64>().is_ok());
                if !ok {
                    return Err(BinvoxError::MalformedHeader(line));
                }
            }
            Some(w) if w.starts_with('#') => {}
            None => {}
            Some(_) => return Err(BinvoxError::MalformedHeader(line)),
        }
    }

    let dims = dims.ok_or(BinvoxError::MissingDim)?;
    if dims[0] != dims[1] || dims[1] != dims[2] {
        return Err(BinvoxError::NonCubic(dims));
    }
    let n = dims[0];
    if n == 0 {
        return Err(BinvoxError::ZeroDim);
    }
    let total = n * n * n;

    let data = &bytes[pos..];
    if !data.len().is_multiple_of(2) {
        return Err(BinvoxError::TruncatedRle(data.len()));
    }
    let mut occupancy = Vec::with_capacity(total);
    for (i, pair) in data.chunks_exact(2).enumerate() {
        let offset = pos + 2 * i;
        let (value, count) = (pair[0], pair[1] as usize);
        if value > 1 {
            return Err(BinvoxError::InvalidValue { value, offset });
        }
        if count == 0 {
            return Err(BinvoxError::ZeroRun(offset + 1));
        }
        if occupancy.len() + count > total {
            return Err(BinvoxError::Overflow { expected: total });
        }
        occupancy.extend(std::iter::repeat_n(value == 1, count));
    }
    if occupancy.len() < total {
        return Err(BinvoxError::Underflow {
            expected: total,
            got: occupancy.len(),
        });
    }
    Ok(VoxelGrid::from_occupancy(n, occupancy).expect("length checked above"))
}

pub fn write_binvox(grid: &VoxelGrid) -> Vec<u8> {
    let n = grid.resolution();
    let mut out = format!("#binvox 1\ndim {n} {n} {n}\ntranslate 0 0 0\nscale 1\ndata\n").into_bytes();
    let occ = grid.occupancy();
    let mut i = 0;
    while i < occ.len() {
        let value = occ[i];
        let mut run = 1;
        while i + run < occ.len() && occ[i + run] == value && run < 255 {
            run += 1;
        }
        out.push(value as u8);
        out.push(run as u8);
        i += run;
    }
    out
}

pub fn load_binvox(path: impl AsRef<Path>) -> Result<VoxelGrid, BinvoxError> {
    parse_binvox(&fs::read(path)?)
}

pub fn save_binvox(grid: &VoxelGrid, path: impl AsRef<Path>) -> Result<(), BinvoxError> {
    fs::write(path, write_binvox(grid))?;
    Ok(())
}
