//! Target-network forward passes recorded on a tape, batched over points or cubes.

use crate::autodiff::{AutodiffError, NodeId, Tape, Tensor};
use crate::interval::Box3;

use super::TargetArch;

/// Per-layer weight and bias nodes sliced out of a `θ` node.
#[derive(Debug, Clone)]
pub struct TapeLayers {
    /// `(W: (fan_out, fan_in), b: (fan_out,))` per layer.
    pub layers: Vec<(NodeId, NodeId)>,
}

pub fn unpack_theta(tape: &mut Tape, theta: NodeId, arch: &TargetArch) -> Result<TapeLayers, AutodiffError> {
    let mut layers = Vec::with_capacity(arch.num_layers());
    for l in arch.layouts() {
        let flat = tape.slice(theta, l.weight_offset, l.fan_in * l.fan_out)?;
        let w = tape.reshape(flat, &[l.fan_out, l.fan_in])?;
        let b = tape.slice(theta, l.bias_offset, l.fan_out)?;
        layers.push((w, b));
    }
    Ok(TapeLayers { layers })
}

fn rows(data: impl IntoIterator<Item = [f64; 3]>) -> Tensor {
    let flat: Vec<f64> = data.into_iter().flatten().collect();
    let n = flat.len() / 3;
    Tensor::matrix(n, 3, flat).expect("three columns")
}

/// Occupancies `(B,)` for a batch of points.
pub fn point_batch(tape: &mut Tape, net: &TapeLayers, points: &[[f64; 3]]) -> Result<NodeId, AutodiffError> {
    let mut x = tape.constant(rows(points.iter().copied()));
    let last = net.layers.len() - 1;
    for (l, &(w, b)) in net.layers.iter().enumerate() {
        let wt = tape.transpose(w)?;
        let h = tape.matmul(x, wt)?;
        let h = tape.add_bias(h, b)?;
        x = if l == last { tape.sigmoid(h)? } else { tape.relu(h)? };
    }
    tape.reshape(x, &[points.len()])
}

/// Occupancy interval endpoints `(lo, hi)`, each `(B,)`, for a batch of cubes.
///
/// Each dense layer maps center `c` and radius `r` to `W c + b` and `|W| r`;
/// the activations are applied to both endpoints.
pub fn interval_batch(
    tape: &mut Tape,
    net: &TapeLayers,
    cubes: &[Box3],
) -> Result<(NodeId, NodeId), AutodiffError> {
    let mut center = tape.constant(rows(cubes.iter().map(Box3::center)));
    let mut radius = tape.constant(rows(cubes.iter().map(Box3::radius)));
    let last = net.layers.len() - 1;
    let mut bounds = None;
    for (l, &(w, b)) in net.layers.iter().enumerate() {
        let wt = tape.transpose(w)?;
        let abs_w = tape.abs(w)?;
        let abs_wt = tape.transpose(abs_w)?;
        let c = tape.matmul(center, wt)?;
        let c = tape.add_bias(c, b)?;
        let r = tape.matmul(radius, abs_wt)?;
        let lo = tape.sub(c, r)?;
        let hi = tape.add(c, r)?;
        let (lo, hi) = if l == last {
            (tape.sigmoid(lo)?, tape.sigmoid(hi)?)
        } else {
            (tape.relu(lo)?, tape.relu(hi)?)
        };
        if l == last {
            bounds = Some((lo, hi));
        } else {
            let sum = tape.add(hi, lo)?;
            let diff = tape.sub(hi, lo)?;
            center = tape.scale(sum, 0.5)?;
            radius = tape.scale(diff, 0.5)?;
        }
    }
    let (lo, hi) = bounds.expect("at least one layer");
    Ok((tape.reshape(lo, &[cubes.len()])?, tape.reshape(hi, &[cubes.len()])?))
}
