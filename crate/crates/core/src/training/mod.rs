//! Optimizer, losses and the training loop for both variants.
//!
//! Each step picks one shape, emits `θ` through the hypernetwork, draws a
//! class-balanced batch of that shape's cubes and takes an Adam step on the
//! hypernetwork parameters.

mod adam;
mod config;

use std::io::{self, Write};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, NodeId, Tape, Tensor};
use crate::interval::{worst_case_output, IntervalError, IntervalVector, TrueLabel};
use crate::nets::graph::{interval_batch, point_batch, unpack_theta, TapeLayers};
use crate::nets::{HyperNetwork, NetError, TargetNetParams};
use crate::voxel::{sample_point, LabeledCube, VoxelGrid};

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use config::{Sampling, TrainConfig, Variant};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("shape {index} has resolution {got}, expected {expected}")]
    Resolution { index: usize, expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite gradient {value} in tensor {tensor} at index {index}")]
    NonFiniteGradient { tensor: usize, index: usize, value: f64 },
    #[error("training diverged at step {}: {}", .0.step, .0.reason)]
    Diverged(Box<Divergence>),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Interval(#[from] IntervalError),
}

/// State at the step whose loss or gradient went non-finite. `last_good` holds
/// the parameters before that step; its update was not applied.
#[derive(Debug)]
pub struct Divergence {
    pub epoch: usize,
    pub step: usize,
    pub reason: String,
    pub last_good: HyperNetwork,
    pub telemetry: Vec<EpochRecord>,
}

/// A point drawn from a cube, labelled with the cube's occupancy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSample {
    pub point: [f64; 3],
    pub inside: bool,
}

fn label(inside: bool) -> f64 {
    if inside {
        1.0
    } else {
        0.0
    }
}

/// Mean of `(f(p) - label)²` over the batch.
pub fn loss_point(theta: &TargetNetParams, batch: &[PointSample]) -> Result<f64, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let net = theta.net();
    let total: f64 = batch
        .iter()
        .map(|s| (net.point_forward(s.point) - label(s.inside)).powi(2))
        .sum();
    Ok(total / batch.len() as f64)
}

/// Mean of `(ŵ - label)²`, `ŵ` being the interval's lower end for inside cubes
/// and its upper end for outside cubes.
pub fn loss_interval(theta: &TargetNetParams, batch: &[LabeledCube]) -> Result<f64, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let net = theta.net();
    let mut total = 0.0;
    for c in batch {
        let iv = net.interval_forward(&c.cube);
        let w = worst_case_output(&IntervalVector::from_intervals(&[iv]), TrueLabel::Binary(c.inside))?;
        total += (w.data()[0] - label(c.inside)).powi(2);
    }
    Ok(total / batch.len() as f64)
}

fn labels_node(tape: &mut Tape, labels: impl Iterator<Item = bool>) -> NodeId {
    tape.constant(Tensor::vector(labels.map(label).collect()))
}

fn squared_error(tape: &mut Tape, pred: NodeId, target: NodeId) -> Result<NodeId, AutodiffError> {
    let d = tape.sub(pred, target)?;
    let sq = tape.mul(d, d)?;
    tape.mean(sq)
}

/// [`loss_point`] recorded on a tape.
pub fn loss_point_graph(tape: &mut Tape, net: &TapeLayers, batch: &[PointSample]) -> Result<NodeId, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let points: Vec<[f64; 3]> = batch.iter().map(|s| s.point).collect();
    let pred = point_batch(tape, net, &points)?;
    let target = labels_node(tape, batch.iter().map(|s| s.inside));
    Ok(squared_error(tape, pred, target)?)
}

/// [`loss_interval`] recorded on a tape.
pub fn loss_interval_graph(tape: &mut Tape, net: &TapeLayers, batch: &[LabeledCube]) -> Result<NodeId, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let cubes: Vec<_> = batch.iter().map(|c| c.cube).collect();
    let (lo, hi) = interval_batch(tape, net, &cubes)?;
    let inside = labels_node(tape, batch.iter().map(|c| c.inside));
    let outside = labels_node(tape, batch.iter().map(|c| !c.inside));
    let a = tape.mul(lo, inside)?;
    let b = tape.mul(hi, outside)?;
    let worst = tape.add(a, b)?;
    Ok(squared_error(tape, worst, inside)?)
}

/// Cell indices of one grid split by label.
#[derive(Debug, Clone)]
pub struct BalancedSampler {
    inside: Vec<usize>,
    outside: Vec<usize>,
}

impl BalancedSampler {
    pub fn new(grid: &VoxelGrid) -> Self {
        let (inside, outside) = (0..grid.len()).partition(|&i| grid.occupancy()[i]);
        Self { inside, outside }
    }

    /// Number of inside cells to draw for a batch of `batch` at `ratio`
    /// inside per outside. A class with no cells gets none.
    pub fn inside_count(&self, batch: usize, ratio: f64) -> usize {
        if self.inside.is_empty() {
            0
        } else if self.outside.is_empty() {
            batch
        } else {
            ((batch as f64 * ratio / (1.0 + ratio)).round() as usize).min(batch)
        }
    }

    /// Cell indices drawn uniformly with replacement from all cells.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<usize> {
        let total = self.inside.len() + self.outside.len();
        (0..batch)
            .map(|_| {
                let i = rng.gen_range(0..total);
                if i < self.inside.len() {
                    self.inside[i]
                } else {
                    self.outside[i - self.inside.len()]
                }
            })
            .collect()
    }

    /// Cell indices, inside cells first, drawn uniformly with replacement
    /// within each class.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, ratio: f64, rng: &mut R) -> Vec<usize> {
        let k = self.inside_count(batch, ratio);
        let mut out = Vec::with_capacity(batch);
        out.extend((0..k).map(|_| self.inside[rng.gen_range(0..self.inside.len())]));
        out.extend((k..batch).map(|_| self.outside[rng.gen_range(0..self.outside.len())]));
        out
    }
}

/// One line of training telemetry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Optimizer steps completed by the end of this epoch.
    pub step: usize,
    /// Mean step loss over the epoch.
    pub loss: f64,
    pub wall_ms: f64,
    /// Bytes held by the hypernetwork parameters, their gradients, the Adam
    /// moments and the largest tape of the epoch.
    pub mem_bytes: usize,
}

pub fn write_telemetry<W: Write>(records: &[EpochRecord], mut out: W) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: HyperNetwork,
    pub telemetry: Vec<EpochRecord>,
    /// Loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
}

struct Shape {
    input: Arc<Tensor>,
    cubes: Vec<LabeledCube>,
    sampler: BalancedSampler,
}

pub fn train(dataset: &[VoxelGrid], config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    train_with(dataset, config, |_| {})
}

/// [`train`], calling `on_epoch` after each epoch's telemetry is recorded.
pub fn train_with(
    dataset: &[VoxelGrid],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let first = dataset.first().ok_or(TrainError::EmptyDataset)?;
    let n = config.resolution.unwrap_or(first.resolution());
    if let Some((index, g)) = dataset.iter().enumerate().find(|(_, g)| g.resolution() != n) {
        return Err(TrainError::Resolution {
            index,
            expected: n,
            got: g.resolution(),
        });
    }

    let mut model = HyperNetwork::new(config.model.clone(), config.seed)?;
    let shapes = dataset
        .iter()
        .map(|g| {
            Ok(Shape {
                input: Arc::new(model.encoder_input(g)?),
                cubes: g.labeled_cubes(),
                sampler: BalancedSampler::new(g),
            })
        })
        .collect::<Result<Vec<_>, TrainError>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let adam = config.adam();
    let sampling = config.class_balance.resolve(config.variant);
    let mut state = OptimizerState::new(model.params().into_iter().map(|a| &**a));
    let param_bytes: usize = model.param_count() * std::mem::size_of::<f64>();
    let arch = model.target_arch().clone();

    let mut telemetry = Vec::with_capacity(config.epochs);
    let mut step_losses = Vec::with_capacity(config.epochs * shapes.len());
    let mut order: Vec<usize> = (0..shapes.len()).collect();
    for epoch in 0..config.epochs {
        let start = Instant::now();
        let mut epoch_loss = 0.0;
        let mut peak_tape = 0usize;
        order.shuffle(&mut rng);
        for &s in &order {
            let shape = &shapes[s];
            let cells = match sampling {
                Sampling::Balanced(ratio) => shape.sampler.sample(config.batch_cubes, ratio, &mut rng),
                _ => shape.sampler.sample_uniform(config.batch_cubes, &mut rng),
            };
            let mut tape = Tape::new();
            let graph = model.record(&mut tape, shape.input.clone())?;
            let layers = unpack_theta(&mut tape, graph.theta, &arch)?;
            let loss = match config.variant {
                Variant::Point => {
                    let batch: Vec<PointSample> = cells
                        .iter()
                        .map(|&i| {
                            let c = &shape.cubes[i];
                            PointSample {
                                point: sample_point(&c.cube, &mut rng),
                                inside: c.inside,
                            }
                        })
                        .collect();
                    loss_point_graph(&mut tape, &layers, &batch)?
                }
                Variant::Interval => {
                    let batch: Vec<LabeledCube> = cells.iter().map(|&i| shape.cubes[i]).collect();
                    loss_interval_graph(&mut tape, &layers, &batch)?
                }
            };
            let value = tape.value(loss).item();
            let step = step_losses.len();
            let diverged = |reason: String, model: HyperNetwork, telemetry: Vec<EpochRecord>| {
                TrainError::Diverged(Box::new(Divergence {
                    epoch,
                    step,
                    reason,
                    last_good: model,
                    telemetry,
                }))
            };
            if !value.is_finite() {
                return Err(diverged(format!("loss is {value}"), model, telemetry));
            }
            let mut grads = tape.backward(loss)?;
            peak_tape = peak_tape.max(tape.op_bytes());
            let grads: Vec<Tensor> = graph
                .params
                .iter()
                .zip(model.params())
                .map(|(&id, p)| grads.take(id).unwrap_or_else(|| Tensor::zeros(p.shape())))
                .collect();
            drop(tape);

            let mut params = model.params_mut();
            let mut refs: Vec<&mut Tensor> = params.iter_mut().map(|a| Arc::make_mut(a)).collect();
            match adam_step(&mut refs, &grads, &mut state, &adam) {
                Ok(()) => {}
                Err(TrainError::NonFiniteGradient { tensor, index, value }) => {
                    drop(refs);
                    drop(params);
                    return Err(diverged(
                        format!("gradient {value} in tensor {tensor} at index {index}"),
                        model,
                        telemetry,
                    ));
                }
                Err(e) => return Err(e),
            }
            step_losses.push(value);
            epoch_loss += value;
        }
        let record = EpochRecord {
            epoch,
            step: step_losses.len(),
            loss: epoch_loss / shapes.len() as f64,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            mem_bytes: 2 * param_bytes + state.bytes() + 2 * peak_tape,
        };
        on_epoch(&record);
        telemetry.push(record);
    }
    Ok(TrainOutcome {
        model,
        telemetry,
        step_losses,
    })
}
