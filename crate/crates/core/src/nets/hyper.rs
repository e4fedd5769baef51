use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::voxel::VoxelGrid;

use super::{NetError, TargetArch, TargetNetParams};

/// Weight and bias node of each dense layer.
type LayerNodes = Vec<(NodeId, NodeId)>;

/// Sizes of the hypernetwork and the target network it parameterizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HyperConfig {
    /// Input grids are majority-downsampled to this resolution and flattened.
    pub encoder_resolution: usize,
    pub encoder_hidden: Vec<usize>,
    pub latent_dim: usize,
    pub head_hidden: Vec<usize>,
    pub target: TargetArch,
}

impl Default for HyperConfig {
    fn default() -> Self {
        Self {
            encoder_resolution: 16,
            encoder_hidden: vec![256],
            latent_dim: 128,
            head_hidden: vec![256],
            target: TargetArch::with_hidden(&[64, 64]).expect("valid default"),
        }
    }
}

impl HyperConfig {
    pub fn input_dim(&self) -> usize {
        self.encoder_resolution.pow(3)
    }

    fn encoder_widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend_from_slice(&self.encoder_hidden);
        w.push(self.latent_dim);
        w
    }

    fn head_widths(&self) -> Vec<usize> {
        let mut w = vec![self.latent_dim];
        w.extend_from_slice(&self.head_hidden);
        w.push(self.target.param_count());
        w
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.encoder_resolution == 0 || self.latent_dim == 0 {
            return Err(NetError::Arch("encoder resolution and latent size must be positive".into()));
        }
        if self.encoder_hidden.contains(&0) || self.head_hidden.contains(&0) {
            return Err(NetError::Arch("zero-width hidden layer".into()));
        }
        Ok(())
    }
}

/// Weight `(fan_out, fan_in)` and bias `(fan_out,)` of one dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Arc<Tensor>,
    pub bias: Arc<Tensor>,
}

impl DenseLayer {
    fn init(fan_in: usize, fan_out: usize, gain: f64, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut draw = |len: usize| -> Vec<f64> {
            (0..len).map(|_| gain * rng.gen_range(-bound..=bound)).collect()
        };
        let w = draw(fan_in * fan_out);
        let b = draw(fan_out);
        Self {
            weight: Arc::new(Tensor::matrix(fan_out, fan_in, w).expect("sizes")),
            bias: Arc::new(Tensor::vector(b)),
        }
    }
}

/// Nodes recorded by [`HyperNetwork::record`].
#[derive(Debug, Clone)]
pub struct HyperGraph {
    /// One node per trainable tensor, in [`HyperNetwork::params`] order.
    pub params: Vec<NodeId>,
    pub latent: NodeId,
    pub theta: NodeId,
}

/// MLP encoder from a downsampled occupancy grid to a latent code, followed
/// by an MLP head from the latent code to the target network's `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperNetwork {
    config: HyperConfig,
    encoder: Vec<DenseLayer>,
    head: Vec<DenseLayer>,
}

/// Scale applied to the head's output weights at initialization. The output
/// bias is a standard draw of the target network's parameters, so every shape
/// starts from the same randomly initialized target network plus a small
/// shape-dependent offset.
const HEAD_OUTPUT_GAIN: f64 = 0.01;

fn target_init(arch: &TargetArch, rng: &mut ChaCha8Rng) -> Tensor {
    let mut theta = vec![0.0; arch.param_count()];
    for (i, l) in arch.layouts().into_iter().enumerate() {
        if i == 0 {
            // First-layer hyperplanes pass through uniform points of the unit cube.
            for r in 0..l.fan_out {
                let row = l.weight_offset + r * l.fan_in;
                let mut offset = 0.0;
                for k in 0..l.fan_in {
                    let w = rng.gen_range(-FIRST_LAYER_BOUND..=FIRST_LAYER_BOUND);
                    theta[row + k] = w;
                    offset += w * rng.gen::<f64>();
                }
                theta[l.bias_offset + r] = -offset;
            }
        } else {
            let bound = 1.0 / (l.fan_in as f64).sqrt();
            for v in &mut theta[l.weight_offset..l.bias_offset + l.fan_out] {
                *v = rng.gen_range(-bound..=bound);
            }
        }
    }
    Tensor::vector(theta)
}

/// Weight bound of the target network's first layer at initialization.
const FIRST_LAYER_BOUND: f64 = 4.0;

impl HyperNetwork {
    pub fn new(config: HyperConfig, seed: u64) -> Result<Self, NetError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enc = config.encoder_widths();
        let encoder = enc
            .windows(2)
            .map(|w| DenseLayer::init(w[0], w[1], 1.0, &mut rng))
            .collect();
        let head_w = config.head_widths();
        let last = head_w.len() - 2;
        let mut head: Vec<DenseLayer> = head_w
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let gain = if i == last { HEAD_OUTPUT_GAIN } else { 1.0 };
                DenseLayer::init(w[0], w[1], gain, &mut rng)
            })
            .collect();
        head[last].bias = Arc::new(target_init(&config.target, &mut rng));
        Ok(Self {
            config,
            encoder,
            head,
        })
    }

    /// Rebuilds a network from stored tensors in [`params`](Self::params) order.
    pub fn from_params(config: HyperConfig, params: Vec<Tensor>) -> Result<Self, NetError> {
        config.validate()?;
        let enc = config.encoder_widths();
        let head = config.head_widths();
        let expected = 2 * (enc.len() - 1 + head.len() - 1);
        if params.len() != expected {
            return Err(NetError::Arch(format!(
                "expected {expected} parameter tensors, got {}",
                params.len()
            )));
        }
        let mut it = params.into_iter();
        let mut take = |widths: &[usize]| -> Result<Vec<DenseLayer>, NetError> {
            widths
                .windows(2)
                .map(|w| {
                    let weight = it.next().expect("count checked");
                    let bias = it.next().expect("count checked");
                    if weight.shape() != [w[1], w[0]] || bias.shape() != [w[1]] {
                        return Err(NetError::Arch(format!(
                            "tensor shapes {:?}/{:?} do not match layer {}->{}",
                            weight.shape(),
                            bias.shape(),
                            w[0],
                            w[1]
                        )));
                    }
                    Ok(DenseLayer {
                        weight: Arc::new(weight),
                        bias: Arc::new(bias),
                    })
                })
                .collect()
        };
        let encoder = take(&enc)?;
        let head = take(&head)?;
        Ok(Self {
            config,
            encoder,
            head,
        })
    }

    pub fn config(&self) -> &HyperConfig {
        &self.config
    }

    pub fn target_arch(&self) -> &TargetArch {
        &self.config.target
    }

    /// Trainable tensors: encoder layers then head layers, weight before bias.
    pub fn params(&self) -> Vec<&Arc<Tensor>> {
        self.encoder
            .iter()
            .chain(&self.head)
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Arc<Tensor>> {
        self.encoder
            .iter_mut()
            .chain(self.head.iter_mut())
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Flattened occupancy of `grid` at the encoder resolution.
    pub fn encoder_input(&self, grid: &VoxelGrid) -> Result<Tensor, NetError> {
        let n = grid.resolution();
        let enc = self.config.encoder_resolution;
        if n < enc || !n.is_multiple_of(enc) {
            return Err(NetError::Resolution { grid: n, encoder: enc });
        }
        let small = grid.downsample(n / enc)?;
        Ok(Tensor::vector(
            small
                .occupancy()
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect(),
        ))
    }

    fn mlp(
        tape: &mut Tape,
        layers: &[(NodeId, NodeId)],
        mut x: NodeId,
    ) -> Result<NodeId, NetError> {
        let last = layers.len() - 1;
        for (i, &(w, b)) in layers.iter().enumerate() {
            let h = tape.matmul(w, x)?;
            let h = tape.add(h, b)?;
            x = if i == last { h } else { tape.relu(h)? };
        }
        Ok(x)
    }

    fn leaves(&self, tape: &mut Tape, trainable: bool) -> (Vec<NodeId>, LayerNodes, LayerNodes) {
        let mut ids = Vec::new();
        let mut push = |tape: &mut Tape, layers: &[DenseLayer]| -> Vec<(NodeId, NodeId)> {
            layers
                .iter()
                .map(|l| {
                    let (w, b) = if trainable {
                        (tape.param(l.weight.clone()), tape.param(l.bias.clone()))
                    } else {
                        (tape.constant(l.weight.clone()), tape.constant(l.bias.clone()))
                    };
                    ids.push(w);
                    ids.push(b);
                    (w, b)
                })
                .collect()
        };
        let enc = push(tape, &self.encoder);
        let head = push(tape, &self.head);
        (ids, enc, head)
    }

    /// Records encoder and head on `tape` with trainable parameter leaves.
    pub fn record(&self, tape: &mut Tape, input: impl Into<Arc<Tensor>>) -> Result<HyperGraph, NetError> {
        let (params, _, _) = self.leaves(tape, true);
        self.record_on(tape, &params, input)
    }

    /// Records encoder and head reading their weights from existing nodes,
    /// given in [`HyperNetwork::params`] order. Only the layer structure of
    /// `self` is used.
    pub fn record_on(
        &self,
        tape: &mut Tape,
        params: &[NodeId],
        input: impl Into<Arc<Tensor>>,
    ) -> Result<HyperGraph, NetError> {
        let expected = 2 * (self.encoder.len() + self.head.len());
        if params.len() != expected {
            return Err(NetError::Arch(format!(
                "expected {expected} parameter nodes, got {}",
                params.len()
            )));
        }
        let pairs: Vec<(NodeId, NodeId)> = params.chunks(2).map(|c| (c[0], c[1])).collect();
        let (enc, head) = pairs.split_at(self.encoder.len());
        let x = tape.constant(input);
        let latent = Self::mlp(tape, enc, x)?;
        let theta = Self::mlp(tape, head, latent)?;
        Ok(HyperGraph {
            params: params.to_vec(),
            latent,
            theta,
        })
    }

    /// Latent code of `grid`.
    pub fn encode(&self, grid: &VoxelGrid) -> Result<Tensor, NetError> {
        let input = self.encoder_input(grid)?;
        let mut tape = Tape::new();
        let (_, enc, _) = self.leaves(&mut tape, false);
        let x = tape.constant(input);
        let latent = Self::mlp(&mut tape, &enc, x)?;
        Ok(tape.value(latent).clone())
    }

    /// Target parameters emitted by the head for a latent code.
    pub fn decode(&self, latent: &Tensor) -> Result<TargetNetParams, NetError> {
        if latent.shape() != [self.config.latent_dim] {
            return Err(NetError::LatentLength {
                expected: self.config.latent_dim,
                got: latent.len(),
            });
        }
        let mut tape = Tape::new();
        let (_, _, head) = self.leaves(&mut tape, false);
        let x = tape.constant(latent.clone());
        let theta = Self::mlp(&mut tape, &head, x)?;
        TargetNetParams::new(self.config.target.clone(), tape.value(theta).clone())
    }

    /// Latent code and target parameters for `grid`.
    pub fn forward(&self, grid: &VoxelGrid) -> Result<(Tensor, TargetNetParams), NetError> {
        let latent = self.encode(grid)?;
        let theta = self.decode(&latent)?;
        Ok((latent, theta))
    }
}

/// Alias for [`HyperNetwork::forward`].
pub fn hyper_forward(net: &HyperNetwork, grid: &VoxelGrid) -> Result<(Tensor, TargetNetParams), NetError> {
    net.forward(grid)
}
