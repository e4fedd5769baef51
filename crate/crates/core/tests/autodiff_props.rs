use cubefield::autodiff::{check_gradient, AutodiffError, NodeId, OpKind, Tape, Tensor};
use proptest::prelude::*;

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-6;

/// Entries bounded away from zero so `abs`, `relu` and the clamp ops stay off their kinks.
fn entry() -> impl Strategy<Value = f64> {
    (0.05f64..2.0, any::<bool>()).prop_map(|(v, neg)| if neg { -v } else { v })
}

fn tensor(shape: Vec<usize>) -> impl Strategy<Value = Tensor> {
    let n = shape.iter().product::<usize>();
    prop::collection::vec(entry(), n).prop_map(move |d| Tensor::new(shape.clone(), d).unwrap())
}

fn matrix_pair() -> impl Strategy<Value = (Tensor, Tensor, Tensor)> {
    (1usize..5, 1usize..5, 1usize..5)
        .prop_flat_map(|(m, k, n)| (tensor(vec![m, k]), tensor(vec![k, n]), tensor(vec![k])))
}

/// Reduces any node to a scalar through a fixed random-ish weighting so every
/// output coordinate contributes a distinct gradient.
fn weigh(tape: &mut Tape, x: NodeId) -> Result<NodeId, AutodiffError> {
    let n = tape.value(x).len();
    let shape = tape.value(x).shape().to_vec();
    let w: Vec<f64> = (0..n).map(|i| 0.3 + 0.17 * ((i * 7) % 5) as f64).collect();
    let w = tape.constant(Tensor::new(shape, w)?);
    let y = tape.mul(x, w)?;
    tape.sum(y)
}

fn check_unary(kind: OpKind, x: &Tensor) -> f64 {
    check_gradient(
        |t, p| {
            let y = t.record(kind.clone(), &[p[0]])?;
            weigh(t, y)
        },
        std::slice::from_ref(x),
        STEP,
    )
    .unwrap()
}

fn check_binary(kind: OpKind, a: &Tensor, b: &Tensor) -> f64 {
    check_gradient(
        |t, p| {
            let y = t.record(kind.clone(), &[p[0], p[1]])?;
            weigh(t, y)
        },
        &[a.clone(), b.clone()],
        STEP,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn elementwise_binary_ops(a in tensor(vec![2, 3]), b in tensor(vec![2, 3])) {
        for kind in [OpKind::Add, OpKind::Sub, OpKind::Mul] {
            let err = check_binary(kind.clone(), &a, &b);
            prop_assert!(err < TOL, "{} {err}", kind.name());
        }
    }

    #[test]
    fn unary_ops(x in tensor(vec![3, 2])) {
        for kind in [
            OpKind::Abs,
            OpKind::Relu,
            OpKind::Sigmoid,
            OpKind::Transpose,
            OpKind::Scale(-1.7),
            OpKind::MinConst(0.01),
            OpKind::MaxConst(0.01),
            OpKind::Reshape(vec![6]),
            OpKind::Reshape(vec![2, 3]),
        ] {
            let err = check_unary(kind.clone(), &x);
            prop_assert!(err < TOL, "{} {err}", kind.name());
        }
    }

    #[test]
    fn reductions(x in tensor(vec![4, 2])) {
        for kind in [OpKind::Sum, OpKind::Mean] {
            let err = check_gradient(
                |t, p| {
                    let s = t.record(kind.clone(), &[p[0]])?;
                    t.mul(s, s)
                },
                std::slice::from_ref(&x),
                STEP,
            )
            .unwrap();
            prop_assert!(err < TOL, "{} {err}", kind.name());
        }
    }

    #[test]
    fn matmul_and_bias((a, b, v) in matrix_pair()) {
        prop_assert!(check_binary(OpKind::MatMul, &a, &b) < TOL);
        prop_assert!(check_binary(OpKind::MatMul, &a, &v) < TOL);
        let bias = Tensor::vector(b.data()[..b.shape()[1]].to_vec());
        let rows = a.shape()[0];
        let mat = Tensor::new(vec![rows, bias.len()], (0..rows * bias.len()).map(|i| 0.2 + i as f64 * 0.1).collect()).unwrap();
        prop_assert!(check_binary(OpKind::AddBias, &mat, &bias) < TOL);
    }

    #[test]
    fn concat_and_slice(a in tensor(vec![3]), b in tensor(vec![4]), start in 0usize..4, len in 1usize..4) {
        let err = check_binary(OpKind::Concat, &a, &b);
        prop_assert!(err < TOL);
        let err = check_unary(OpKind::Slice { start, len }, &Tensor::vector([a.data(), b.data()].concat()));
        prop_assert!(err < TOL);
    }

    #[test]
    fn composed_network(x in tensor(vec![5, 3]), w1 in tensor(vec![4, 3]), w2 in tensor(vec![1, 4]), b1 in tensor(vec![4])) {
        let pre: Vec<f64> = (0..5)
            .flat_map(|r| (0..4).map(move |j| (r, j)))
            .map(|(r, j)| (0..3).map(|k| x.data()[r * 3 + k] * w1.data()[j * 3 + k]).sum::<f64>() + b1.data()[j])
            .collect();
        prop_assume!(pre.iter().all(|h| h.abs() > 1e-3));
        let err = check_gradient(
            |t, p| {
                let wt = t.transpose(p[1])?;
                let h = t.matmul(p[0], wt)?;
                let h = t.add_bias(h, p[3])?;
                let h = t.relu(h)?;
                let w2t = t.transpose(p[2])?;
                let o = t.matmul(h, w2t)?;
                let o = t.sigmoid(o)?;
                let a = t.abs(o)?;
                let sq = t.mul(a, a)?;
                t.mean(sq)
            },
            &[x, w1, w2, b1],
            STEP,
        )
        .unwrap();
        prop_assert!(err < TOL, "{err}");
    }

    #[test]
    fn backward_is_linear(x in tensor(vec![6]), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let grad = |ca: f64, cb: f64| -> Vec<f64> {
            let mut t = Tape::new();
            let p = t.param(x.clone());
            let f = t.sigmoid(p).unwrap();
            let f = t.sum(f).unwrap();
            let g = t.mul(p, p).unwrap();
            let g = t.mean(g).unwrap();
            let fa = t.scale(f, ca).unwrap();
            let gb = t.scale(g, cb).unwrap();
            let root = t.add(fa, gb).unwrap();
            t.backward(root).unwrap().wrt(p).unwrap().data().to_vec()
        };
        let (gf, gg, both) = (grad(1.0, 0.0), grad(0.0, 1.0), grad(a, b));
        for i in 0..x.len() {
            let expect = a * gf[i] + b * gg[i];
            prop_assert!((both[i] - expect).abs() <= 1e-12 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn identical_tapes_agree_bitwise(x in tensor(vec![3, 3])) {
        let run = || {
            let mut t = Tape::new();
            let p = t.param(x.clone());
            let y = t.matmul(p, p).unwrap();
            let y = t.sigmoid(y).unwrap();
            let r = t.sum(y).unwrap();
            let v = t.value(r).item();
            (v.to_bits(), t.backward(r).unwrap().wrt(p).unwrap().data().iter().map(|g| g.to_bits()).collect::<Vec<_>>())
        };
        prop_assert_eq!(run(), run());
    }
}
