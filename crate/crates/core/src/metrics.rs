//! Voxel MSE, IoU, Chamfer distance and the per-dataset evaluation report.
//!
//! Stored values are raw. Only [`format_table`] applies the reporting scale
//! (MSE ×10³, IoU ×10², CD ×10⁴).

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{connected_components, marching_cubes, sample_surface, MeshError, DEFAULT_ISO};
use crate::nets::{field_eval_grid, FieldMode, HyperNetwork, NetError};
use crate::voxel::{ValueGrid, VoxelError, VoxelGrid};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("resolution mismatch: prediction {pred}, ground truth {gt}")]
    Resolution { pred: usize, gt: usize },
    #[error("extraction produced empty mesh")]
    EmptyPointSet,
    #[error("empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Voxel(#[from] VoxelError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

pub const MSE_SCALE: f64 = 1e3;
pub const IOU_SCALE: f64 = 1e2;
pub const CD_SCALE: f64 = 1e4;

fn check(pred: usize, gt: usize) -> Result<(), MetricsError> {
    if pred != gt {
        return Err(MetricsError::Resolution { pred, gt });
    }
    Ok(())
}

/// Mean over cells of `(pred - label)²`.
pub fn mse_grid(pred: &ValueGrid, gt: &VoxelGrid) -> Result<f64, MetricsError> {
    check(pred.resolution(), gt.resolution())?;
    let total: f64 = pred
        .values()
        .iter()
        .zip(gt.occupancy())
        .map(|(&p, &g)| (p - if g { 1.0 } else { 0.0 }).powi(2))
        .sum();
    Ok(total / gt.len() as f64)
}

/// Intersection over union of two occupancy grids; 1 when both are empty.
pub fn iou_voxels(a: &VoxelGrid, b: &VoxelGrid) -> Result<f64, MetricsError> {
    check(a.resolution(), b.resolution())?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.occupancy().iter().zip(b.occupancy()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// IoU of `pred > threshold` against `gt`.
pub fn iou(pred: &ValueGrid, gt: &VoxelGrid, threshold: f64) -> Result<f64, MetricsError> {
    check(pred.resolution(), gt.resolution())?;
    iou_voxels(&pred.threshold(threshold), gt)
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

fn directed(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    let mins: Vec<f64> = a
        .par_iter()
        .map(|p| b.iter().map(|q| dist2(p, q)).fold(f64::INFINITY, f64::min))
        .collect();
    mins.iter().sum::<f64>() / a.len() as f64
}

/// Sum of the two directed means of squared nearest-neighbour distances.
pub fn chamfer(a: &[[f64; 3]], b: &[[f64; 3]]) -> Result<f64, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::EmptyPointSet);
    }
    Ok(directed(a, b) + directed(b, a))
}

/// Anything that turns an input grid into an occupancy field at resolution `m`.
pub trait FieldSource: Sync {
    fn field(&self, input: &VoxelGrid, m: usize, mode: FieldMode) -> Result<ValueGrid, MetricsError>;
}

impl FieldSource for HyperNetwork {
    fn field(&self, input: &VoxelGrid, m: usize, mode: FieldMode) -> Result<ValueGrid, MetricsError> {
        let (_, theta) = self.forward(input)?;
        Ok(field_eval_grid(&theta, m, mode)?)
    }
}

/// Returns the ground-truth occupancy itself, resampled to `m`.
#[derive(Debug, Clone, Copy, Default)]
pub struct GroundTruthOracle;

impl FieldSource for GroundTruthOracle {
    fn field(&self, input: &VoxelGrid, m: usize, _mode: FieldMode) -> Result<ValueGrid, MetricsError> {
        Ok(input.resample(m)?.to_values())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub resolution: usize,
    pub samples: usize,
    pub mode: FieldMode,
    pub seed: u64,
    /// Record per-component triangle counts as well as the count.
    pub histograms: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            resolution: 32,
            samples: 4096,
            mode: FieldMode::PointAtCenter,
            seed: 0,
            histograms: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeEval {
    pub id: usize,
    pub mse: f64,
    pub iou: f64,
    /// `None` when either surface is empty; see `cd_missing`.
    pub cd: Option<f64>,
    pub cd_missing: bool,
    pub component_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub component_sizes: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mse: f64,
    pub iou: f64,
    /// Mean over shapes with a Chamfer distance.
    pub cd: Option<f64>,
    pub cd_missing: usize,
    pub component_count: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: String,
    pub resolution: usize,
    pub samples: usize,
    pub mode: FieldMode,
    pub seed: u64,
    pub shapes: Vec<ShapeEval>,
    pub mean: Aggregate,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl Aggregate {
    pub fn of(shapes: &[ShapeEval]) -> Self {
        Self {
            mse: mean(shapes.iter().map(|s| s.mse)).unwrap_or(0.0),
            iou: mean(shapes.iter().map(|s| s.iou)).unwrap_or(0.0),
            cd: mean(shapes.iter().filter_map(|s| s.cd)),
            cd_missing: shapes.iter().filter(|s| s.cd_missing).count(),
            component_count: mean(shapes.iter().map(|s| s.component_count as f64)).unwrap_or(0.0),
        }
    }
}

fn evaluate_one(
    model: &dyn FieldSource,
    id: usize,
    gt: &VoxelGrid,
    config: &EvalConfig,
) -> Result<ShapeEval, MetricsError> {
    let m = config.resolution;
    let gt_m = gt.resample(m)?;
    let values = model.field(gt, m, config.mode)?;
    let mse = mse_grid(&values, &gt_m)?;
    let iou = iou(&values, &gt_m, DEFAULT_ISO)?;
    let recon = marching_cubes(&values, DEFAULT_ISO)?;
    let truth = marching_cubes(&gt_m.to_values(), DEFAULT_ISO)?;
    let components = connected_components(&recon);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(id as u64);
    let cd = if recon.is_empty() || truth.is_empty() {
        None
    } else {
        let a = sample_surface(&recon, config.samples, &mut rng)?;
        let b = sample_surface(&truth, config.samples, &mut rng)?;
        Some(chamfer(&a, &b)?)
    };
    Ok(ShapeEval {
        id,
        mse,
        iou,
        cd,
        cd_missing: cd.is_none(),
        component_count: components.count,
        component_sizes: config.histograms.then_some(components.sizes),
    })
}

/// Scores `model` on every grid of `dataset` at `config.resolution`; shapes are
/// reported in dataset order.
pub fn evaluate(
    model: &dyn FieldSource,
    variant: &str,
    dataset: &[VoxelGrid],
    config: &EvalConfig,
) -> Result<EvalReport, MetricsError> {
    if dataset.is_empty() {
        return Err(MetricsError::EmptyDataset);
    }
    let shapes = dataset
        .par_iter()
        .enumerate()
        .map(|(id, gt)| evaluate_one(model, id, gt, config))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalReport {
        variant: variant.to_string(),
        resolution: config.resolution,
        samples: config.samples,
        mode: config.mode,
        seed: config.seed,
        mean: Aggregate::of(&shapes),
        shapes,
    })
}

/// A report row in display units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledRow {
    pub mse: f64,
    pub iou: f64,
    pub cd: Option<f64>,
}

impl ScaledRow {
    pub fn new(mse: f64, iou: f64, cd: Option<f64>) -> Self {
        Self {
            mse: mse * MSE_SCALE,
            iou: iou * IOU_SCALE,
            cd: cd.map(|c| c * CD_SCALE),
        }
    }
}

fn row(out: &mut String, label: &str, r: ScaledRow, components: String) {
    let cd = r.cd.map_or_else(|| "missing".to_string(), |c| format!("{c:.3}"));
    let _ = writeln!(out, "{label:<8} {:>10.3} {:>10.3} {:>10} {:>10}", r.mse, r.iou, cd, components);
}

/// Text table with MSE ×10³, IoU ×10² and CD ×10⁴.
pub fn format_table(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} model, m={}, mode {}",
        report.variant, report.resolution, report.mode
    );
    let _ = writeln!(out, "{:<8} {:>10} {:>10} {:>10} {:>10}", "shape", "MSE e3", "IoU e2", "CD e4", "comps");
    for s in &report.shapes {
        row(&mut out, &s.id.to_string(), ScaledRow::new(s.mse, s.iou, s.cd), s.component_count.to_string());
    }
    let m = &report.mean;
    row(&mut out, "mean", ScaledRow::new(m.mse, m.iou, m.cd), format!("{:.2}", m.component_count));
    if m.cd_missing > 0 {
        let _ = writeln!(out, "{} shape(s) produced an empty mesh; CD missing", m.cd_missing);
    }
    out
}
