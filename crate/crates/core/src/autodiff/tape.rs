use std::sync::Arc;

use super::tensor::{matmul_nn, matmul_nt, matmul_tn};
use super::{AutodiffError, Tensor};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation kinds a tape can record. Scalar parameters travel with the kind.
#[derive(Debug, Clone, PartialEq)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    /// `(m,k) x (k,)` or `(m,k) x (k,n)`.
    MatMul,
    Transpose,
    /// `(rows,m) + (m,)`, bias broadcast over rows.
    AddBias,
    Abs,
    Relu,
    Sigmoid,
    Sum,
    Mean,
    Scale(f64),
    MinConst(f64),
    MaxConst(f64),
    /// Concatenation of one-dimensional inputs.
    Concat,
    /// Contiguous sub-range of a one-dimensional input.
    Slice { start: usize, len: usize },
    Reshape(Vec<usize>),
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::MatMul => "matmul",
            OpKind::Transpose => "transpose",
            OpKind::AddBias => "add_bias",
            OpKind::Abs => "abs",
            OpKind::Relu => "relu",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::Scale(_) => "scale",
            OpKind::MinConst(_) => "min_const",
            OpKind::MaxConst(_) => "max_const",
            OpKind::Concat => "concat",
            OpKind::Slice { .. } => "slice",
            OpKind::Reshape(_) => "reshape",
        }
    }
}

#[derive(Debug)]
enum Origin {
    Leaf,
    Op { kind: OpKind, inputs: Vec<NodeId> },
}

#[derive(Debug)]
struct Node {
    origin: Origin,
    value: Arc<Tensor>,
    requires_grad: bool,
}

/// Eagerly evaluated computation record for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so every node's inputs precede it.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    adjoints: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Adjoint of `id`, or `None` when the node does not influence the root
    /// through any differentiable path.
    pub fn wrt(&self, id: NodeId) -> Option<&Tensor> {
        self.adjoints.get(id.0).and_then(Option::as_ref)
    }

    /// Adjoint of `id`, taking ownership.
    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.adjoints.get_mut(id.0).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf; gradients flow into it.
    pub fn param(&mut self, value: impl Into<Arc<Tensor>>) -> NodeId {
        self.push_leaf(value.into(), true)
    }

    /// Constant leaf; excluded from gradient propagation.
    pub fn constant(&mut self, value: impl Into<Arc<Tensor>>) -> NodeId {
        self.push_leaf(value.into(), false)
    }

    fn push_leaf(&mut self, value: Arc<Tensor>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            origin: Origin::Leaf,
            value,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Bytes held by operation outputs, excluding leaves.
    pub fn op_bytes(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n.origin, Origin::Op { .. }))
            .map(|n| n.value.len() * std::mem::size_of::<f64>())
            .sum()
    }

    /// Records `kind` applied to `inputs`, computing its value immediately.
    pub fn record(&mut self, kind: OpKind, inputs: &[NodeId]) -> Result<NodeId, AutodiffError> {
        for id in inputs {
            if id.0 >= self.nodes.len() {
                return Err(AutodiffError::UnknownNode(id.0));
            }
        }
        let value = self.forward(&kind, inputs)?;
        let requires_grad = inputs.iter().any(|id| self.nodes[id.0].requires_grad);
        self.nodes.push(Node {
            origin: Origin::Op {
                kind,
                inputs: inputs.to_vec(),
            },
            value: Arc::new(value),
            requires_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn arity(kind: &OpKind, inputs: &[NodeId], expected: usize) -> Result<(), AutodiffError> {
        if inputs.len() != expected {
            return Err(AutodiffError::Arity {
                op: kind.name(),
                expected,
                got: inputs.len(),
            });
        }
        Ok(())
    }

    fn forward(&self, kind: &OpKind, inputs: &[NodeId]) -> Result<Tensor, AutodiffError> {
        let mismatch = |a: &Tensor, b: &Tensor| AutodiffError::ShapeMismatch {
            op: kind.name(),
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        };
        match kind {
            OpKind::Add | OpKind::Sub | OpKind::Mul => {
                Self::arity(kind, inputs, 2)?;
                let (a, b) = (self.value(inputs[0]), self.value(inputs[1]));
                if a.shape() != b.shape() {
                    return Err(mismatch(a, b));
                }
                Ok(match kind {
                    OpKind::Add => a.zip(b, |x, y| x + y),
                    OpKind::Sub => a.zip(b, |x, y| x - y),
                    _ => a.zip(b, |x, y| x * y),
                })
            }
            OpKind::MatMul => {
                Self::arity(kind, inputs, 2)?;
                let (a, b) = (self.value(inputs[0]), self.value(inputs[1]));
                match (a.shape(), b.shape()) {
                    (&[m, k], &[k2]) if k == k2 => {
                        let out = matmul_nn(a.data(), b.data(), m, k, 1);
                        Ok(Tensor::vector(out))
                    }
                    (&[m, k], &[k2, n]) if k == k2 => {
                        let out = matmul_nn(a.data(), b.data(), m, k, n);
                        Ok(Tensor::vector(out).with_shape(vec![m, n]))
                    }
                    _ => Err(mismatch(a, b)),
                }
            }
            OpKind::Transpose => {
                Self::arity(kind, inputs, 1)?;
                let a = self.value(inputs[0]);
                match *a.shape() {
                    [r, c] => Ok(Tensor::vector(transpose(a.data(), r, c)).with_shape(vec![c, r])),
                    _ => Err(AutodiffError::RankMismatch {
                        op: kind.name(),
                        shape: a.shape().to_vec(),
                    }),
                }
            }
            OpKind::AddBias => {
                Self::arity(kind, inputs, 2)?;
                let (a, b) = (self.value(inputs[0]), self.value(inputs[1]));
                match (a.shape(), b.shape()) {
                    (&[_, m], &[m2]) if m == m2 => {
                        let mut out = a.data().to_vec();
                        for row in out.chunks_mut(m.max(1)) {
                            for (o, &bv) in row.iter_mut().zip(b.data()) {
                                *o += bv;
                            }
                        }
                        Ok(Tensor::vector(out).with_shape(a.shape().to_vec()))
                    }
                    _ => Err(mismatch(a, b)),
                }
            }
            OpKind::Abs
            | OpKind::Relu
            | OpKind::Sigmoid
            | OpKind::Scale(_)
            | OpKind::MinConst(_)
            | OpKind::MaxConst(_) => {
                Self::arity(kind, inputs, 1)?;
                let a = self.value(inputs[0]);
                Ok(match *kind {
                    OpKind::Abs => a.map(f64::abs),
                    OpKind::Relu => a.map(|x| if x > 0.0 { x } else { 0.0 }),
                    OpKind::Sigmoid => a.map(sigmoid),
                    OpKind::Scale(c) => a.map(|x| x * c),
                    OpKind::MinConst(c) => a.map(|x| if x < c { x } else { c }),
                    OpKind::MaxConst(c) => a.map(|x| if x > c { x } else { c }),
                    _ => unreachable!(),
                })
            }
            OpKind::Sum | OpKind::Mean => {
                Self::arity(kind, inputs, 1)?;
                let a = self.value(inputs[0]);
                if a.is_empty() {
                    return Err(AutodiffError::EmptyReduction { op: kind.name() });
                }
                let total: f64 = a.data().iter().sum();
                Ok(Tensor::scalar(if matches!(kind, OpKind::Mean) {
                    total / a.len() as f64
                } else {
                    total
                }))
            }
            OpKind::Concat => {
                if inputs.is_empty() {
                    return Err(AutodiffError::Arity {
                        op: kind.name(),
                        expected: 1,
                        got: 0,
                    });
                }
                let mut out = Vec::new();
                for &id in inputs {
                    let t = self.value(id);
                    if t.shape().len() != 1 {
                        return Err(AutodiffError::RankMismatch {
                            op: kind.name(),
                            shape: t.shape().to_vec(),
                        });
                    }
                    out.extend_from_slice(t.data());
                }
                Ok(Tensor::vector(out))
            }
            OpKind::Slice { start, len } => {
                Self::arity(kind, inputs, 1)?;
                let a = self.value(inputs[0]);
                if a.shape().len() != 1 || start + len > a.len() {
                    return Err(AutodiffError::ShapeMismatch {
                        op: kind.name(),
                        lhs: a.shape().to_vec(),
                        rhs: vec![start + len],
                    });
                }
                Ok(Tensor::vector(a.data()[*start..start + len].to_vec()))
            }
            OpKind::Reshape(shape) => {
                Self::arity(kind, inputs, 1)?;
                let a = self.value(inputs[0]);
                if shape.iter().product::<usize>() != a.len() {
                    return Err(AutodiffError::ShapeMismatch {
                        op: kind.name(),
                        lhs: a.shape().to_vec(),
                        rhs: shape.clone(),
                    });
                }
                Ok(a.clone().with_shape(shape.clone()))
            }
        }
    }

    /// Reverse sweep from a scalar `root`.
    ///
    /// Subgradient convention at kinks: `abs'(0) = 0`, `relu'(0) = 0`, and
    /// min/max against a constant pass no gradient on ties.
    pub fn backward(&self, root: NodeId) -> Result<Gradients, AutodiffError> {
        let root_value = self
            .nodes
            .get(root.0)
            .ok_or(AutodiffError::UnknownNode(root.0))?
            .value
            .clone();
        if !root_value.is_scalar() {
            return Err(AutodiffError::NonScalarRoot {
                shape: root_value.shape().to_vec(),
            });
        }
        let mut adjoints: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        adjoints[root.0] = Some(Tensor::ones(&[]));

        for idx in (0..=root.0).rev() {
            let Some(grad) = adjoints[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if let Origin::Op { kind, inputs } = &node.origin {
                self.propagate(kind, inputs, &node.value, &grad, &mut adjoints);
            }
            adjoints[idx] = Some(grad);
        }
        // Only nodes on a differentiable path keep adjoints, apart from the root.
        for (idx, adj) in adjoints.iter_mut().enumerate() {
            if idx != root.0 && !self.nodes[idx].requires_grad {
                *adj = None;
            }
        }
        Ok(Gradients { adjoints })
    }

    fn propagate(
        &self,
        kind: &OpKind,
        inputs: &[NodeId],
        out: &Tensor,
        grad: &Tensor,
        adjoints: &mut [Option<Tensor>],
    ) {
        let wants = |id: NodeId| self.nodes[id.0].requires_grad;
        match kind {
            OpKind::Add => {
                for &id in inputs {
                    if wants(id) {
                        accumulate(adjoints, id, grad.clone());
                    }
                }
            }
            OpKind::Sub => {
                if wants(inputs[0]) {
                    accumulate(adjoints, inputs[0], grad.clone());
                }
                if wants(inputs[1]) {
                    accumulate(adjoints, inputs[1], grad.map(|g| -g));
                }
            }
            OpKind::Mul => {
                let (a, b) = (self.value(inputs[0]), self.value(inputs[1]));
                if wants(inputs[0]) {
                    accumulate(adjoints, inputs[0], grad.zip(b, |g, y| g * y));
                }
                if wants(inputs[1]) {
                    accumulate(adjoints, inputs[1], grad.zip(a, |g, x| g * x));
                }
            }
            OpKind::MatMul => {
                let (a, b) = (self.value(inputs[0]), self.value(inputs[1]));
                let (m, k) = (a.shape()[0], a.shape()[1]);
                let n = if b.shape().len() == 1 { 1 } else { b.shape()[1] };
                if wants(inputs[0]) {
                    // dA = G . B^T; B stored as (k,n) is already the row layout matmul_nt wants.
                    let da = matmul_nt(grad.data(), b.data(), m, n, k);
                    accumulate(adjoints, inputs[0], Tensor::vector(da).with_shape(vec![m, k]));
                }
                if wants(inputs[1]) {
                    let db = matmul_tn(a.data(), grad.data(), m, k, n);
                    accumulate(
                        adjoints,
                        inputs[1],
                        Tensor::vector(db).with_shape(b.shape().to_vec()),
                    );
                }
            }
            OpKind::Transpose => {
                if wants(inputs[0]) {
                    let (r, c) = (out.shape()[0], out.shape()[1]);
                    let g = transpose(grad.data(), r, c);
                    accumulate(adjoints, inputs[0], Tensor::vector(g).with_shape(vec![c, r]));
                }
            }
            OpKind::AddBias => {
                if wants(inputs[0]) {
                    accumulate(adjoints, inputs[0], grad.clone());
                }
                if wants(inputs[1]) {
                    let m = out.shape()[1];
                    let mut gb = vec![0.0; m];
                    for row in grad.data().chunks(m.max(1)) {
                        for (acc, &g) in gb.iter_mut().zip(row) {
                            *acc += g;
                        }
                    }
                    accumulate(adjoints, inputs[1], Tensor::vector(gb));
                }
            }
            OpKind::Abs
            | OpKind::Relu
            | OpKind::MinConst(_)
            | OpKind::MaxConst(_)
            | OpKind::Scale(_) => {
                if !wants(inputs[0]) {
                    return;
                }
                let a = self.value(inputs[0]);
                let ga = match *kind {
                    OpKind::Abs => grad.zip(a, |g, x| {
                        if x > 0.0 {
                            g
                        } else if x < 0.0 {
                            -g
                        } else {
                            0.0
                        }
                    }),
                    OpKind::Relu => grad.zip(a, |g, x| if x > 0.0 { g } else { 0.0 }),
                    OpKind::MinConst(c) => grad.zip(a, |g, x| if x < c { g } else { 0.0 }),
                    OpKind::MaxConst(c) => grad.zip(a, |g, x| if x > c { g } else { 0.0 }),
                    OpKind::Scale(c) => grad.map(|g| g * c),
                    _ => unreachable!(),
                };
                accumulate(adjoints, inputs[0], ga);
            }
            OpKind::Sigmoid => {
                if wants(inputs[0]) {
                    accumulate(adjoints, inputs[0], grad.zip(out, |g, s| g * s * (1.0 - s)));
                }
            }
            OpKind::Sum | OpKind::Mean => {
                if wants(inputs[0]) {
                    let a = self.value(inputs[0]);
                    let g = grad.item();
                    let g = if matches!(kind, OpKind::Mean) {
                        g / a.len() as f64
                    } else {
                        g
                    };
                    accumulate(adjoints, inputs[0], Tensor::filled(a.shape(), g));
                }
            }
            OpKind::Concat => {
                let mut offset = 0;
                for &id in inputs {
                    let len = self.value(id).len();
                    if wants(id) {
                        let part = grad.data()[offset..offset + len].to_vec();
                        accumulate(adjoints, id, Tensor::vector(part));
                    }
                    offset += len;
                }
            }
            OpKind::Slice { start, len } => {
                let src = inputs[0];
                if !wants(src) {
                    return;
                }
                let full = self.value(src).len();
                let slot = &mut adjoints[src.0];
                let target = slot.get_or_insert_with(|| Tensor::zeros(&[full]));
                for (t, &g) in target.data_mut()[*start..start + len]
                    .iter_mut()
                    .zip(grad.data())
                {
                    *t += g;
                }
            }
            OpKind::Reshape(_) => {
                let src = inputs[0];
                if wants(src) {
                    let shape = self.value(src).shape().to_vec();
                    accumulate(adjoints, src, grad.clone().with_shape(shape));
                }
            }
        }
    }

    // Convenience wrappers over `record` for the binary and unary kinds.

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.record(OpKind::Add, &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.record(OpKind::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.record(OpKind::Mul, &[a, b])
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.record(OpKind::MatMul, &[a, b])
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        self.record(OpKind::Transpose, &[a])
    }

    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId, AutodiffError> {
        self.record(OpKind::AddBias, &[a, bias])
    }

    pub fn abs(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        self.record(OpKind::Abs, &[a])
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        self.record(OpKind::Relu, &[a])
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        self.record(OpKind::Sigmoid, &[a])
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        self.record(OpKind::Sum, &[a])
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        self.record(OpKind::Mean, &[a])
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId, AutodiffError> {
        self.record(OpKind::Scale(factor), &[a])
    }

    pub fn slice(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId, AutodiffError> {
        self.record(OpKind::Slice { start, len }, &[a])
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId, AutodiffError> {
        self.record(OpKind::Reshape(shape.to_vec()), &[a])
    }
}

fn accumulate(adjoints: &mut [Option<Tensor>], id: NodeId, grad: Tensor) {
    match &mut adjoints[id.0] {
        Some(existing) => {
            for (e, g) in existing.data_mut().iter_mut().zip(grad.data()) {
                *e += g;
            }
        }
        slot @ None => *slot = Some(grad),
    }
}

fn transpose(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
