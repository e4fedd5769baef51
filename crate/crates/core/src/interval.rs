//! Closed-interval arithmetic and interval propagation through dense layers.
//!
//! Dense layers are propagated in center-radius form: with center `c` and
//! radius `r` of the input box, the output is `[W c + b - |W| r, W c + b + |W| r]`.
//! The endpoint form built from [`Interval`] products is kept alongside as an
//! exact reference; both give the tightest enclosure of an affine map over a box.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use thiserror::Error;

use crate::autodiff::{dot, sigmoid, Tensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntervalError {
    #[error("interval endpoints out of order: [{lo}, {hi}]")]
    Inverted { lo: f64, hi: f64 },
    #[error("interval endpoints must be finite: [{lo}, {hi}]")]
    NonFinite { lo: f64, hi: f64 },
    #[error("division by an interval containing or touching zero: [{lo}, {hi}]")]
    DivisionByZeroInterval { lo: f64, hi: f64 },
    #[error("{op}: shape mismatch, expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("label {label} out of range for {dim} outputs")]
    LabelOutOfRange { label: usize, dim: usize },
}

/// Closed real interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, IntervalError> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(IntervalError::NonFinite { lo, hi });
        }
        if lo > hi {
            return Err(IntervalError::Inverted { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    /// Interval spanning two values in either order.
    pub fn hull(a: f64, b: f64) -> Self {
        Self {
            lo: a.min(b),
            hi: a.max(b),
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn center(&self) -> f64 {
        (self.hi + self.lo) / 2.0
    }

    pub fn radius(&self) -> f64 {
        (self.hi - self.lo) / 2.0
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_with(&self, x: f64, tol: f64) -> bool {
        self.lo - tol <= x && x <= self.hi + tol
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn iadd(self, other: Interval) -> Interval {
        Interval {
            lo: self.lo + other.lo,
            hi: self.hi + other.hi,
        }
    }

    /// Sound subtraction `[a_lo - b_hi, a_hi - b_lo]`.
    pub fn isub(self, other: Interval) -> Interval {
        Interval {
            lo: self.lo - other.hi,
            hi: self.hi - other.lo,
        }
    }

    pub fn imul(self, other: Interval) -> Interval {
        let p = [
            self.lo * other.lo,
            self.lo * other.hi,
            self.hi * other.lo,
            self.hi * other.hi,
        ];
        Interval {
            lo: p.iter().copied().fold(f64::INFINITY, f64::min),
            hi: p.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Quotient; the divisor may not contain or touch zero.
    pub fn idiv(self, other: Interval) -> Result<Interval, IntervalError> {
        if other.lo <= 0.0 && other.hi >= 0.0 {
            return Err(IntervalError::DivisionByZeroInterval {
                lo: other.lo,
                hi: other.hi,
            });
        }
        let q = [
            self.lo / other.lo,
            self.lo / other.hi,
            self.hi / other.lo,
            self.hi / other.hi,
        ];
        Ok(Interval {
            lo: q.iter().copied().fold(f64::INFINITY, f64::min),
            hi: q.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }

    pub fn map_monotone(self, act: Activation) -> Interval {
        Interval {
            lo: act.apply(self.lo),
            hi: act.apply(self.hi),
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, rhs: Interval) -> Interval {
        self.iadd(rhs)
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, rhs: Interval) -> Interval {
        self.isub(rhs)
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, rhs: Interval) -> Interval {
        self.imul(rhs)
    }
}

/// Axis-aligned box `x × y × z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3 {
    pub x: Interval,
    pub y: Interval,
    pub z: Interval,
}

impl Box3 {
    pub fn new(x: Interval, y: Interval, z: Interval) -> Self {
        Self { x, y, z }
    }

    pub fn from_corners(lo: [f64; 3], hi: [f64; 3]) -> Result<Self, IntervalError> {
        Ok(Self {
            x: Interval::new(lo[0], hi[0])?,
            y: Interval::new(lo[1], hi[1])?,
            z: Interval::new(lo[2], hi[2])?,
        })
    }

    /// Zero-width box at `p`.
    pub fn point(p: [f64; 3]) -> Self {
        Self {
            x: Interval::point(p[0]),
            y: Interval::point(p[1]),
            z: Interval::point(p[2]),
        }
    }

    pub fn axes(&self) -> [Interval; 3] {
        [self.x, self.y, self.z]
    }

    pub fn lo(&self) -> [f64; 3] {
        [self.x.lo, self.y.lo, self.z.lo]
    }

    pub fn hi(&self) -> [f64; 3] {
        [self.x.hi, self.y.hi, self.z.hi]
    }

    pub fn center(&self) -> [f64; 3] {
        [self.x.center(), self.y.center(), self.z.center()]
    }

    pub fn radius(&self) -> [f64; 3] {
        [self.x.radius(), self.y.radius(), self.z.radius()]
    }

    pub fn volume(&self) -> f64 {
        self.x.width() * self.y.width() * self.z.width()
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        self.x.contains(p[0]) && self.y.contains(p[1]) && self.z.contains(p[2])
    }

    pub fn contains_box(&self, other: &Box3) -> bool {
        self.x.contains_interval(&other.x)
            && self.y.contains_interval(&other.y)
            && self.z.contains_interval(&other.z)
    }

    pub fn to_vector(&self) -> IntervalVector {
        IntervalVector {
            lo: self.lo().to_vec(),
            hi: self.hi().to_vec(),
        }
    }
}

/// Vector of intervals stored as separate lower and upper endpoint arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalVector {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl IntervalVector {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, IntervalError> {
        if lo.len() != hi.len() {
            return Err(IntervalError::ShapeMismatch {
                op: "interval_vector",
                expected: vec![lo.len()],
                got: vec![hi.len()],
            });
        }
        for (&l, &h) in lo.iter().zip(&hi) {
            Interval::new(l, h)?;
        }
        Ok(Self { lo, hi })
    }

    pub fn from_tensors(lo: &Tensor, hi: &Tensor) -> Result<Self, IntervalError> {
        if lo.shape() != hi.shape() || lo.shape().len() != 1 {
            return Err(IntervalError::ShapeMismatch {
                op: "interval_vector",
                expected: lo.shape().to_vec(),
                got: hi.shape().to_vec(),
            });
        }
        Self::new(lo.data().to_vec(), hi.data().to_vec())
    }

    pub fn from_point(p: &[f64]) -> Self {
        Self {
            lo: p.to_vec(),
            hi: p.to_vec(),
        }
    }

    pub fn from_intervals(items: &[Interval]) -> Self {
        Self {
            lo: items.iter().map(Interval::lo).collect(),
            hi: items.iter().map(Interval::hi).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn get(&self, i: usize) -> Interval {
        Interval {
            lo: self.lo[i],
            hi: self.hi[i],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Interval> + '_ {
        (0..self.dim()).map(|i| self.get(i))
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| (h + l) / 2.0)
            .collect()
    }

    pub fn radius(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| (h - l) / 2.0)
            .collect()
    }

    pub fn contains_point(&self, p: &[f64], tol: f64) -> bool {
        p.len() == self.dim() && self.iter().zip(p).all(|(iv, &x)| iv.contains_with(x, tol))
    }

    /// `self ⊇ other` coordinate-wise, with slack `tol`.
    pub fn encloses(&self, other: &IntervalVector, tol: f64) -> bool {
        self.dim() == other.dim()
            && self
                .iter()
                .zip(other.iter())
                .all(|(a, b)| a.lo - tol <= b.lo && b.hi <= a.hi + tol)
    }
}

/// Element-wise non-decreasing activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }
}

fn check_dense(w: &Tensor, b: &Tensor, dim: usize) -> Result<(usize, usize), IntervalError> {
    let (m, d) = match *w.shape() {
        [m, d] => (m, d),
        _ => {
            return Err(IntervalError::ShapeMismatch {
                op: "dense_interval",
                expected: vec![0, dim],
                got: w.shape().to_vec(),
            })
        }
    };
    if d != dim {
        return Err(IntervalError::ShapeMismatch {
            op: "dense_interval",
            expected: vec![m, dim],
            got: w.shape().to_vec(),
        });
    }
    if b.shape() != [m] {
        return Err(IntervalError::ShapeMismatch {
            op: "dense_interval",
            expected: vec![m],
            got: b.shape().to_vec(),
        });
    }
    Ok((m, d))
}

/// Affine map of an interval vector in center-radius form.
pub fn dense_interval(
    w: &Tensor,
    b: &Tensor,
    input: &IntervalVector,
) -> Result<IntervalVector, IntervalError> {
    let (m, d) = check_dense(w, b, input.dim())?;
    let center = input.center();
    let radius = input.radius();
    let mut lo = Vec::with_capacity(m);
    let mut hi = Vec::with_capacity(m);
    for (row, &bias) in w.data().chunks(d.max(1)).take(m).zip(b.data()) {
        let z = dot(row, &center) + bias;
        let r: f64 = row.iter().zip(&radius).map(|(wv, rv)| wv.abs() * rv).sum();
        lo.push(z - r);
        hi.push(z + r);
    }
    Ok(IntervalVector { lo, hi })
}

/// Affine map of an interval vector as a sum of endpoint products per row.
pub fn dense_interval_endpoint(
    w: &Tensor,
    b: &Tensor,
    input: &IntervalVector,
) -> Result<IntervalVector, IntervalError> {
    let (m, d) = check_dense(w, b, input.dim())?;
    let mut out = Vec::with_capacity(m);
    for (row, &bias) in w.data().chunks(d.max(1)).take(m).zip(b.data()) {
        let acc = row
            .iter()
            .zip(input.iter())
            .fold(Interval::point(bias), |acc, (&wv, x)| {
                acc.iadd(Interval::point(wv).imul(x))
            });
        out.push(acc);
    }
    Ok(IntervalVector::from_intervals(&out))
}

/// Maps both endpoints through a monotone activation.
pub fn activation_interval(act: Activation, input: &IntervalVector) -> IntervalVector {
    IntervalVector {
        lo: input.lo.iter().map(|&v| act.apply(v)).collect(),
        hi: input.hi.iter().map(|&v| act.apply(v)).collect(),
    }
}

/// Ground-truth label used to pick the worst-case logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrueLabel {
    /// Index of the true class among `N` logits.
    Class(usize),
    /// Single occupancy output: `true` means inside.
    Binary(bool),
}

/// Least favourable endpoint of each output given the true label.
///
/// With class logits the true class takes its lower bound and every other
/// class its upper bound. With a single occupancy output the lower bound is
/// returned for an inside label and the upper bound for an outside label.
pub fn worst_case_output(out: &IntervalVector, label: TrueLabel) -> Result<Tensor, IntervalError> {
    match label {
        TrueLabel::Class(y) => {
            if y >= out.dim() {
                return Err(IntervalError::LabelOutOfRange {
                    label: y,
                    dim: out.dim(),
                });
            }
            let v = (0..out.dim())
                .map(|i| if i == y { out.lo[i] } else { out.hi[i] })
                .collect();
            Ok(Tensor::vector(v))
        }
        TrueLabel::Binary(inside) => {
            if out.dim() != 1 {
                return Err(IntervalError::ShapeMismatch {
                    op: "worst_case_output",
                    expected: vec![1],
                    got: vec![out.dim()],
                });
            }
            let v = if inside { out.lo[0] } else { out.hi[0] };
            Ok(Tensor::vector(vec![v]))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    #[test]
    fn addition() {
        assert_eq!(iv(1.0, 2.0) + iv(3.0, 5.0), iv(4.0, 7.0));
        assert_eq!(Interval::point(0.0) + iv(-0.3, 0.8), iv(-0.3, 0.8));
        assert_eq!(iv(-1.0, 1.0) + iv(-2.0, 3.0), iv(-3.0, 4.0));
    }

    #[test]
    fn subtraction_is_sound() {
        assert_eq!(iv(3.0, 5.0) - iv(1.0, 2.0), iv(1.0, 4.0));
        assert_eq!(iv(0.0, 1.0) - iv(0.0, 1.0), iv(-1.0, 1.0));
        let a = iv(-0.7, 2.5);
        let d = a - a;
        assert!(d.contains(0.0));
        assert!(d.lo() <= d.hi());
    }

    #[test]
    fn multiplication() {
        assert_eq!(iv(1.0, 2.0) * iv(-1.0, 3.0), iv(-2.0, 6.0));
        assert_eq!(iv(-1.0, 2.0) * iv(-3.0, 4.0), iv(-6.0, 8.0));
        let z = Interval::point(0.0) * iv(-4.0, 9.0);
        assert_eq!((z.lo(), z.hi()), (0.0, 0.0));
    }

    #[test]
    fn division() {
        assert_eq!(iv(1.0, 2.0).idiv(iv(2.0, 4.0)).unwrap(), iv(0.25, 1.0));
        assert_eq!(iv(-4.0, -2.0).idiv(iv(1.0, 2.0)).unwrap(), iv(-4.0, -1.0));
        assert!(matches!(
            iv(1.0, 2.0).idiv(iv(-1.0, 1.0)),
            Err(IntervalError::DivisionByZeroInterval { .. })
        ));
        assert!(iv(1.0, 2.0).idiv(iv(0.0, 1.0)).is_err());
        assert!(iv(1.0, 2.0).idiv(iv(-1.0, 0.0)).is_err());
    }

    #[test]
    fn construction_checks() {
        assert!(matches!(
            Interval::new(2.0, 1.0),
            Err(IntervalError::Inverted { .. })
        ));
        assert!(Interval::new(f64::NAN, 1.0).is_err());
        assert!(Interval::new(0.0, f64::INFINITY).is_err());
        assert!(IntervalVector::new(vec![0.0], vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn dense_two_matrix_multiplies() {
        let w = Tensor::matrix(2, 2, vec![1.0, -1.0, 2.0, 0.0]).unwrap();
        let b = Tensor::vector(vec![0.0, 1.0]);
        let input = IntervalVector::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let out = dense_interval(&w, &b, &input).unwrap();
        assert_eq!(out.center(), vec![0.0, 2.0]);
        assert_eq!(out.radius(), vec![1.0, 1.0]);
        assert_eq!(out.lo(), &[-1.0, 1.0]);
        assert_eq!(out.hi(), &[1.0, 3.0]);
        assert_eq!(dense_interval_endpoint(&w, &b, &input).unwrap(), out);
    }

    #[test]
    fn dense_degenerate_input_is_affine_map() {
        let w = Tensor::matrix(2, 3, vec![0.3, -1.2, 0.5, 2.0, 0.1, -0.7]).unwrap();
        let b = Tensor::vector(vec![0.25, -0.5]);
        let p = [0.2, 0.9, -0.4];
        let out = dense_interval(&w, &b, &IntervalVector::from_point(&p)).unwrap();
        for i in 0..2 {
            let row = &w.data()[i * 3..i * 3 + 3];
            let v = dot(row, &p) + b.data()[i];
            assert_eq!(out.lo()[i], v);
            assert_eq!(out.hi()[i], v);
        }
    }

    #[test]
    fn dense_rejects_bad_shapes() {
        let w = Tensor::matrix(2, 3, vec![0.0; 6]).unwrap();
        let input = IntervalVector::from_point(&[0.0, 0.0]);
        assert!(dense_interval(&w, &Tensor::vector(vec![0.0; 2]), &input).is_err());
        let input = IntervalVector::from_point(&[0.0, 0.0, 0.0]);
        assert!(dense_interval(&w, &Tensor::vector(vec![0.0; 3]), &input).is_err());
    }

    #[test]
    fn monotone_activations() {
        let v = IntervalVector::new(vec![-1.0], vec![2.0]).unwrap();
        let r = activation_interval(Activation::Relu, &v);
        assert_eq!((r.lo()[0], r.hi()[0]), (0.0, 2.0));
        let s = activation_interval(Activation::Sigmoid, &IntervalVector::from_point(&[0.0]));
        assert_eq!((s.lo()[0], s.hi()[0]), (0.5, 0.5));
        let a = 1.37;
        let t = activation_interval(
            Activation::Tanh,
            &IntervalVector::new(vec![-a], vec![a]).unwrap(),
        );
        assert_eq!(t.lo()[0], -t.hi()[0]);
    }

    #[test]
    fn worst_case_selection() {
        let single = IntervalVector::new(vec![0.3], vec![0.9]).unwrap();
        let inside = worst_case_output(&single, TrueLabel::Binary(true)).unwrap();
        let outside = worst_case_output(&single, TrueLabel::Binary(false)).unwrap();
        assert_eq!(inside.data(), &[0.3]);
        assert_eq!(outside.data(), &[0.9]);

        let logits = IntervalVector::new(vec![1.0, 0.0], vec![2.0, 4.0]).unwrap();
        let z = worst_case_output(&logits, TrueLabel::Class(0)).unwrap();
        assert_eq!(z.data(), &[1.0, 4.0]);
        assert!(matches!(
            worst_case_output(&logits, TrueLabel::Class(2)),
            Err(IntervalError::LabelOutOfRange { .. })
        ));
        assert!(worst_case_output(&logits, TrueLabel::Binary(true)).is_err());
    }
}
