//! Occupancy grids over the unit cube.
//!
//! Cells are addressed by `(x, y, z)` lattice coordinates and stored with `x`
//! slowest and `y` fastest: `index = x·n² + z·n + y`. This is the binvox order.

mod binvox;
mod shapes;

pub use binvox::{load_binvox, parse_binvox, save_binvox, write_binvox, BinvoxError};
pub use shapes::{desk_dataset, ShapeKind, ShapeSpec};

use rand::Rng;
use thiserror::Error;

use crate::interval::{Box3, Interval};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VoxelError {
    #[error("grid resolution must be at least 1")]
    ZeroResolution,
    #[error("occupancy length {len} does not equal {n}^3")]
    Length { n: usize, len: usize },
    #[error("factor {factor} does not divide resolution {n}")]
    Indivisible { n: usize, factor: usize },
    #[error("shape does not fit inside the unit cube: {0}")]
    OutOfUnitCube(String),
    #[error("shape resolution must be at least 4, got {0}")]
    ResolutionTooSmall(usize),
    #[error("invalid shape parameters: {0}")]
    InvalidParams(String),
}

/// Linear cell index for lattice coordinates at resolution `n`.
#[inline]
pub fn cell_index(n: usize, x: usize, y: usize, z: usize) -> usize {
    x * n * n + z * n + y
}

/// Lattice coordinates `(x, y, z)` of a linear cell index.
#[inline]
pub fn cell_coords(n: usize, index: usize) -> (usize, usize, usize) {
    let x = index / (n * n);
    let rem = index % (n * n);
    (x, rem % n, rem / n)
}

/// Binary occupancy labels on an `n³` lattice of cubes of side `1/n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VoxelGrid {
    n: usize,
    occupancy: Vec<bool>,
}

impl VoxelGrid {
    pub fn empty(n: usize) -> Result<Self, VoxelError> {
        if n == 0 {
            return Err(VoxelError::ZeroResolution);
        }
        Ok(Self {
            n,
            occupancy: vec![false; n * n * n],
        })
    }

    pub fn from_occupancy(n: usize, occupancy: Vec<bool>) -> Result<Self, VoxelError> {
        if n == 0 {
            return Err(VoxelError::ZeroResolution);
        }
        if occupancy.len() != n * n * n {
            return Err(VoxelError::Length {
                n,
                len: occupancy.len(),
            });
        }
        Ok(Self { n, occupancy })
    }

    /// Labels each cell by `inside(x, y, z)` on lattice coordinates.
    pub fn from_fn(
        n: usize,
        mut inside: impl FnMut(usize, usize, usize) -> bool,
    ) -> Result<Self, VoxelError> {
        let mut grid = Self::empty(n)?;
        for idx in 0..grid.occupancy.len() {
            let (x, y, z) = cell_coords(n, idx);
            grid.occupancy[idx] = inside(x, y, z);
        }
        Ok(grid)
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.occupancy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupancy.is_empty()
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.occupancy[cell_index(self.n, x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, value: bool) {
        let idx = cell_index(self.n, x, y, z);
        self.occupancy[idx] = value;
    }

    pub fn count_occupied(&self) -> usize {
        self.occupancy.iter().filter(|&&b| b).count()
    }

    pub fn cell_center(&self, index: usize) -> [f64; 3] {
        let (x, y, z) = cell_coords(self.n, index);
        let n = self.n as f64;
        [
            (x as f64 + 0.5) / n,
            (y as f64 + 0.5) / n,
            (z as f64 + 0.5) / n,
        ]
    }

    pub fn cell_box(&self, index: usize) -> Box3 {
        cell_box(self.n, index)
    }

    /// All cells paired with their labels, in index order.
    pub fn labeled_cubes(&self) -> Vec<LabeledCube> {
        (0..self.len())
            .map(|i| LabeledCube {
                cube: self.cell_box(i),
                inside: self.occupancy[i],
            })
            .collect()
    }

    /// Majority vote over `factor³` children; ties count as occupied.
    pub fn downsample(&self, factor: usize) -> Result<VoxelGrid, VoxelError> {
        if factor == 0 || !self.n.is_multiple_of(factor) {
            return Err(VoxelError::Indivisible { n: self.n, factor });
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let m = self.n / factor;
        let children = factor * factor * factor;
        VoxelGrid::from_fn(m, |x, y, z| {
            let mut count = 0;
            for dx in 0..factor {
                for dy in 0..factor {
                    for dz in 0..factor {
                        if self.get(x * factor + dx, y * factor + dy, z * factor + dz) {
                            count += 1;
                        }
                    }
                }
            }
            2 * count >= children
        })
    }

    /// Nearest-neighbour refinement: each cell becomes `factor³` copies.
    pub fn upsample(&self, factor: usize) -> Result<VoxelGrid, VoxelError> {
        if factor == 0 {
            return Err(VoxelError::Indivisible { n: self.n, factor });
        }
        VoxelGrid::from_fn(self.n * factor, |x, y, z| {
            self.get(x / factor, y / factor, z / factor)
        })
    }

    /// This grid brought to resolution `m` by downsampling or upsampling.
    pub fn resample(&self, m: usize) -> Result<VoxelGrid, VoxelError> {
        if m == 0 {
            return Err(VoxelError::ZeroResolution);
        }
        if m == self.n {
            Ok(self.clone())
        } else if m < self.n {
            if !self.n.is_multiple_of(m) {
                return Err(VoxelError::Indivisible { n: self.n, factor: m });
            }
            self.downsample(self.n / m)
        } else {
            if !m.is_multiple_of(self.n) {
                return Err(VoxelError::Indivisible { n: m, factor: self.n });
            }
            self.upsample(m / self.n)
        }
    }

    /// Occupancy as 0/1 values.
    pub fn to_values(&self) -> ValueGrid {
        ValueGrid {
            m: self.n,
            values: self
                .occupancy
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    /// Cell-wise union of two grids of equal resolution.
    pub fn union(&self, other: &VoxelGrid) -> Result<VoxelGrid, VoxelError> {
        if self.n != other.n {
            return Err(VoxelError::Length {
                n: self.n,
                len: other.len(),
            });
        }
        Ok(VoxelGrid {
            n: self.n,
            occupancy: self
                .occupancy
                .iter()
                .zip(&other.occupancy)
                .map(|(a, b)| *a || *b)
                .collect(),
        })
    }
}

/// Real-valued grid in cell order, one value per cell center.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrid {
    m: usize,
    values: Vec<f64>,
}

impl ValueGrid {
    pub fn new(m: usize, values: Vec<f64>) -> Result<Self, VoxelError> {
        if m == 0 {
            return Err(VoxelError::ZeroResolution);
        }
        if values.len() != m * m * m {
            return Err(VoxelError::Length {
                n: m,
                len: values.len(),
            });
        }
        Ok(Self { m, values })
    }

    pub fn from_fn(m: usize, mut f: impl FnMut([f64; 3]) -> f64) -> Result<Self, VoxelError> {
        if m == 0 {
            return Err(VoxelError::ZeroResolution);
        }
        let mf = m as f64;
        let values = (0..m * m * m)
            .map(|idx| {
                let (x, y, z) = cell_coords(m, idx);
                f([
                    (x as f64 + 0.5) / mf,
                    (y as f64 + 0.5) / mf,
                    (z as f64 + 0.5) / mf,
                ])
            })
            .collect();
        Ok(Self { m, values })
    }

    pub fn resolution(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[cell_index(self.m, x, y, z)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ValueGrid {
        ValueGrid {
            m: self.m,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Cells with value strictly above `threshold` become occupied.
    pub fn threshold(&self, threshold: f64) -> VoxelGrid {
        VoxelGrid {
            n: self.m,
            occupancy: self.values.iter().map(|&v| v > threshold).collect(),
        }
    }
}

/// A voxel cube with its ground-truth label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledCube {
    pub cube: Box3,
    pub inside: bool,
}

fn cell_box(n: usize, index: usize) -> Box3 {
    let (x, y, z) = cell_coords(n, index);
    let nf = n as f64;
    let axis = |i: usize| Interval::hull(i as f64 / nf, (i + 1) as f64 / nf);
    Box3::new(axis(x), axis(y), axis(z))
}

/// The `n³` cubes of side `1/n` tiling `[0,1]³`, in cell-index order.
pub fn grid_cells(n: usize) -> Result<Vec<Box3>, VoxelError> {
    if n == 0 {
        return Err(VoxelError::ZeroResolution);
    }
    Ok((0..n * n * n).map(|i| cell_box(n, i)).collect())
}

/// Point drawn uniformly from `cube`, each axis independently.
pub fn sample_point<R: Rng + ?Sized>(cube: &Box3, rng: &mut R) -> [f64; 3] {
    let mut p = [0.0; 3];
    for (out, axis) in p.iter_mut().zip(cube.axes()) {
        let u: f64 = rng.gen();
        *out = (axis.lo() + u * axis.width()).min(axis.hi());
    }
    p
}
