//! Shape interpolation through the hypernetwork's latent space or directly
//! between emitted target parameters.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Tensor;
use crate::mesh::{marching_cubes, MeshError, TriangleMesh, DEFAULT_ISO};
use crate::nets::{field_eval_grid, FieldMode, HyperNetwork, NetError, TargetNetParams};
use crate::voxel::VoxelGrid;

#[derive(Debug, Error)]
pub enum InterpError {
    #[error("interpolation parameter {0} is outside [0, 1]")]
    OutOfRange(f64),
    #[error("need at least 2 steps, got {0}")]
    TooFewSteps(usize),
    #[error("unknown interpolation space {0:?}")]
    UnknownSpace(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    /// Blend latent codes, then decode.
    #[default]
    Latent,
    /// Blend the decoded target parameters.
    Theta,
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Space::Latent => "latent",
            Space::Theta => "theta",
        })
    }
}

impl FromStr for Space {
    type Err = InterpError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "latent" => Ok(Space::Latent),
            "theta" => Ok(Space::Theta),
            other => Err(InterpError::UnknownSpace(other.to_string())),
        }
    }
}

/// `(1 - t)·a + t·b`, returning `a` or `b` exactly at the endpoints.
fn lerp(a: &Tensor, b: &Tensor, t: f64) -> Tensor {
    if t == 0.0 {
        return a.clone();
    }
    if t == 1.0 {
        return b.clone();
    }
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (1.0 - t) * x + t * y)
        .collect();
    Tensor::new(a.shape().to_vec(), data).expect("operands share a shape")
}

pub fn interpolate(
    model: &HyperNetwork,
    a: &VoxelGrid,
    b: &VoxelGrid,
    t: f64,
    space: Space,
) -> Result<TargetNetParams, InterpError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(InterpError::OutOfRange(t));
    }
    match space {
        Space::Latent => {
            let ea = model.encode(a)?;
            let eb = model.encode(b)?;
            Ok(model.decode(&lerp(&ea, &eb, t))?)
        }
        Space::Theta => {
            let (_, ta) = model.forward(a)?;
            let (_, tb) = model.forward(b)?;
            let theta = lerp(ta.theta(), tb.theta(), t);
            Ok(TargetNetParams::new(ta.arch().clone(), theta)?)
        }
    }
}

/// The `t` values `0, 1/(steps-1), …, 1`.
pub fn schedule(steps: usize) -> Result<Vec<f64>, InterpError> {
    if steps < 2 {
        return Err(InterpError::TooFewSteps(steps));
    }
    let last = (steps - 1) as f64;
    Ok((0..steps)
        .map(|i| if i == steps - 1 { 1.0 } else { i as f64 / last })
        .collect())
}

/// Meshes of the `iso = 0.5` surface at each scheduled `t`, evaluated on an
/// `m³` lattice.
pub fn interpolation_sequence(
    model: &HyperNetwork,
    a: &VoxelGrid,
    b: &VoxelGrid,
    steps: usize,
    space: Space,
    m: usize,
    mode: FieldMode,
) -> Result<Vec<TriangleMesh>, InterpError> {
    schedule(steps)?
        .into_iter()
        .map(|t| {
            let theta = interpolate(model, a, b, t, space)?;
            let values = field_eval_grid(&theta, m, mode)?;
            Ok(marching_cubes(&values, DEFAULT_ISO)?)
        })
        .collect()
}
