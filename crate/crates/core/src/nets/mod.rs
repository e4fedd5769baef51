//! Target network `T_θ`, the hypernetwork that emits `θ`, and grid evaluation.

mod checkpoint;
pub mod graph;
mod hyper;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointError,
};
pub use hyper::{hyper_forward, DenseLayer, HyperConfig, HyperGraph, HyperNetwork};

use rayon::prelude::*;
use thiserror::Error;

use crate::autodiff::{dot, AutodiffError, Tensor};
use crate::interval::{
    activation_interval, dense_interval, Activation, Box3, Interval, IntervalError, IntervalVector,
};
use crate::voxel::{cell_coords, ValueGrid, VoxelError};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid architecture: {0}")]
    Arch(String),
    #[error("theta has length {got}, architecture needs {expected}")]
    ThetaLength { expected: usize, got: usize },
    #[error("grid resolution {grid} cannot be reduced to encoder resolution {encoder}")]
    Resolution { grid: usize, encoder: usize },
    #[error("latent has length {got}, expected {expected}")]
    LatentLength { expected: usize, got: usize },
    #[error("evaluation resolution must be at least 1")]
    ZeroResolution,
    #[error("unknown field mode {0:?}")]
    UnknownMode(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Interval(#[from] IntervalError),
    #[error(transparent)]
    Voxel(#[from] VoxelError),
}

/// Layer widths of the target network: `3 → hidden… → 1`, ReLU hidden
/// activations and a sigmoid output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetArch {
    widths: Vec<usize>,
}

/// Where one entry of the flat parameter vector lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamSlot {
    Weight {
        layer: usize,
        row: usize,
        col: usize,
    },
    Bias {
        layer: usize,
        row: usize,
    },
}

/// Offsets of one layer inside `θ`. Weights are stored row-major as
/// `(fan_out, fan_in)`, followed by the `fan_out` biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerLayout {
    pub weight_offset: usize,
    pub bias_offset: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl TargetArch {
    pub fn new(widths: Vec<usize>) -> Result<Self, NetError> {
        if widths.len() < 3 {
            return Err(NetError::Arch(format!(
                "need at least one hidden layer, got widths {widths:?}"
            )));
        }
        if widths[0] != 3 || *widths.last().unwrap() != 1 {
            return Err(NetError::Arch(format!(
                "widths must start at 3 and end at 1, got {widths:?}"
            )));
        }
        if widths.contains(&0) {
            return Err(NetError::Arch("zero-width layer".into()));
        }
        Ok(Self { widths })
    }

    pub fn with_hidden(hidden: &[usize]) -> Result<Self, NetError> {
        let mut widths = vec![3];
        widths.extend_from_slice(hidden);
        widths.push(1);
        Self::new(widths)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn hidden(&self) -> &[usize] {
        &self.widths[1..self.widths.len() - 1]
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn layouts(&self) -> Vec<LayerLayout> {
        let mut offset = 0;
        self.widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let layout = LayerLayout {
                    weight_offset: offset,
                    bias_offset: offset + fan_in * fan_out,
                    fan_in,
                    fan_out,
                };
                offset += fan_in * fan_out + fan_out;
                layout
            })
            .collect()
    }

    pub fn locate(&self, offset: usize) -> Option<ParamSlot> {
        for (layer, l) in self.layouts().into_iter().enumerate() {
            if offset < l.bias_offset {
                let local = offset - l.weight_offset;
                return Some(ParamSlot::Weight {
                    layer,
                    row: local / l.fan_in,
                    col: local % l.fan_in,
                });
            }
            if offset < l.bias_offset + l.fan_out {
                return Some(ParamSlot::Bias {
                    layer,
                    row: offset - l.bias_offset,
                });
            }
        }
        None
    }

    pub fn offset_of(&self, slot: ParamSlot) -> Option<usize> {
        let layouts = self.layouts();
        match slot {
            ParamSlot::Weight { layer, row, col } => {
                let l = layouts.get(layer)?;
                (row < l.fan_out && col < l.fan_in).then(|| l.weight_offset + row * l.fan_in + col)
            }
            ParamSlot::Bias { layer, row } => {
                let l = layouts.get(layer)?;
                (row < l.fan_out).then(|| l.bias_offset + row)
            }
        }
    }
}

/// Flat weight vector `θ` for one shape's target network.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetNetParams {
    theta: Tensor,
    arch: TargetArch,
}

impl TargetNetParams {
    pub fn new(arch: TargetArch, theta: Tensor) -> Result<Self, NetError> {
        let expected = arch.param_count();
        if theta.shape() != [expected] {
            return Err(NetError::ThetaLength {
                expected,
                got: theta.len(),
            });
        }
        Ok(Self { theta, arch })
    }

    pub fn zeros(arch: TargetArch) -> Self {
        let theta = Tensor::zeros(&[arch.param_count()]);
        Self { theta, arch }
    }

    pub fn theta(&self) -> &Tensor {
        &self.theta
    }

    pub fn arch(&self) -> &TargetArch {
        &self.arch
    }

    /// `(W, b)` of each layer with `W` shaped `(fan_out, fan_in)`.
    pub fn layers(&self) -> Vec<(Tensor, Tensor)> {
        let data = self.theta.data();
        self.arch
            .layouts()
            .iter()
            .map(|l| {
                let w = data[l.weight_offset..l.bias_offset].to_vec();
                let b = data[l.bias_offset..l.bias_offset + l.fan_out].to_vec();
                (
                    Tensor::matrix(l.fan_out, l.fan_in, w).expect("layout sizes"),
                    Tensor::vector(b),
                )
            })
            .collect()
    }

    pub fn from_layers(arch: TargetArch, layers: &[(Tensor, Tensor)]) -> Result<Self, NetError> {
        let layouts = arch.layouts();
        if layers.len() != layouts.len() {
            return Err(NetError::Arch(format!(
                "expected {} layers, got {}",
                layouts.len(),
                layers.len()
            )));
        }
        let mut theta = Vec::with_capacity(arch.param_count());
        for ((w, b), l) in layers.iter().zip(&layouts) {
            if w.shape() != [l.fan_out, l.fan_in] || b.shape() != [l.fan_out] {
                return Err(NetError::Arch(format!(
                    "layer shapes {:?}/{:?} do not match ({}, {})",
                    w.shape(),
                    b.shape(),
                    l.fan_out,
                    l.fan_in
                )));
            }
            theta.extend_from_slice(w.data());
            theta.extend_from_slice(b.data());
        }
        Self::new(arch, Tensor::vector(theta))
    }

    pub fn net(&self) -> TargetNet {
        TargetNet {
            layers: self.layers(),
        }
    }
}

/// Unpacked target network for direct (tape-free) evaluation.
#[derive(Debug, Clone)]
pub struct TargetNet {
    layers: Vec<(Tensor, Tensor)>,
}

impl TargetNet {
    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            Activation::Sigmoid
        } else {
            Activation::Relu
        }
    }

    /// Occupancy in `(0, 1)` at point `p`.
    pub fn point_forward(&self, p: [f64; 3]) -> f64 {
        let mut x: Vec<f64> = p.to_vec();
        for (l, (w, b)) in self.layers.iter().enumerate() {
            let act = self.activation(l);
            let fan_in = w.shape()[1];
            x = w
                .data()
                .chunks(fan_in)
                .zip(b.data())
                .map(|(row, &bias)| act.apply(dot(row, &x) + bias))
                .collect();
        }
        x[0]
    }

    /// Interval of outputs over `input`, propagated layer by layer.
    pub fn interval_forward_vector(&self, input: &IntervalVector) -> Result<IntervalVector, NetError> {
        let mut z = input.clone();
        for (l, (w, b)) in self.layers.iter().enumerate() {
            z = activation_interval(self.activation(l), &dense_interval(w, b, &z)?);
        }
        Ok(z)
    }

    /// Occupancy interval over every point of `cube`.
    pub fn interval_forward(&self, cube: &Box3) -> Interval {
        let out = self
            .interval_forward_vector(&cube.to_vector())
            .expect("layer shapes fixed by the architecture");
        out.get(0)
    }
}

pub fn target_point_forward(theta: &TargetNetParams, p: [f64; 3]) -> f64 {
    theta.net().point_forward(p)
}

pub fn target_interval_forward(theta: &TargetNetParams, cube: &Box3) -> Interval {
    theta.net().interval_forward(cube)
}

/// How a grid cell is turned into one value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldMode {
    /// Point evaluation at the cell center.
    PointAtCenter,
    /// Lower end of the cell's occupancy interval.
    IntervalWorstLo,
    /// Upper end of the cell's occupancy interval.
    IntervalWorstHi,
    /// Midpoint of the cell's occupancy interval.
    IntervalMidpoint,
}

impl FieldMode {
    pub const ALL: [FieldMode; 4] = [
        FieldMode::PointAtCenter,
        FieldMode::IntervalWorstLo,
        FieldMode::IntervalWorstHi,
        FieldMode::IntervalMidpoint,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FieldMode::PointAtCenter => "point-at-center",
            FieldMode::IntervalWorstLo => "interval-worst-lo",
            FieldMode::IntervalWorstHi => "interval-worst-hi",
            FieldMode::IntervalMidpoint => "interval-midpoint",
        }
    }
}

impl std::fmt::Display for FieldMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FieldMode {
    type Err = NetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FieldMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| NetError::UnknownMode(s.to_string()))
    }
}

/// Evaluates the field on an `m³` lattice of cells covering the unit cube.
pub fn field_eval_grid(theta: &TargetNetParams, m: usize, mode: FieldMode) -> Result<ValueGrid, NetError> {
    if m == 0 {
        return Err(NetError::ZeroResolution);
    }
    let net = theta.net();
    let mf = m as f64;
    let values: Vec<f64> = (0..m * m * m)
        .into_par_iter()
        .map(|idx| {
            let (x, y, z) = cell_coords(m, idx);
            let coords = [x, y, z];
            match mode {
                FieldMode::PointAtCenter => {
                    net.point_forward(coords.map(|i| (i as f64 + 0.5) / mf))
                }
                _ => {
                    let axis = |i: usize| Interval::hull(i as f64 / mf, (i + 1) as f64 / mf);
                    let cube = Box3::new(axis(x), axis(y), axis(z));
                    let iv = net.interval_forward(&cube);
                    match mode {
                        FieldMode::IntervalWorstLo => iv.lo(),
                        FieldMode::IntervalWorstHi => iv.hi(),
                        _ => iv.center(),
                    }
                }
            }
        })
        .collect();
    Ok(ValueGrid::new(m, values)?)
}
