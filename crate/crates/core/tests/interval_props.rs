use cubefield::autodiff::Tensor;
use cubefield::interval::{
    activation_interval, dense_interval, dense_interval_endpoint, worst_case_output, Activation, Box3, Interval,
    IntervalVector, TrueLabel,
};
use cubefield::nets::{target_interval_forward, target_point_forward, TargetArch, TargetNetParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn interval() -> impl Strategy<Value = Interval> {
    (-5.0f64..5.0, 0.0f64..3.0).prop_map(|(lo, w)| Interval::new(lo, lo + w).unwrap())
}

fn sample(iv: Interval, u: f64) -> f64 {
    (iv.lo() + u * (iv.hi() - iv.lo())).clamp(iv.lo(), iv.hi())
}

fn theta(arch: &TargetArch, seed: u64, scale: f64) -> TargetNetParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..arch.param_count()).map(|_| rng.gen_range(-scale..scale)).collect();
    TargetNetParams::new(arch.clone(), Tensor::vector(data)).unwrap()
}

fn random_box(rng: &mut impl Rng) -> Box3 {
    let lo: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.0..0.9));
    let side = rng.gen_range(0.0..0.3);
    Box3::from_corners(lo, lo.map(|v| (v + side).min(1.0))).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn arithmetic_is_sound(a in interval(), b in interval(), u in 0.0f64..1.0, v in 0.0f64..1.0) {
        let (x, y) = (sample(a, u), sample(b, v));
        prop_assert!(a.iadd(b).contains_with(x + y, 1e-12));
        prop_assert!(a.isub(b).contains_with(x - y, 1e-12));
        prop_assert!(a.imul(b).contains_with(x * y, 1e-12));
        for act in [Activation::Relu, Activation::Sigmoid, Activation::Tanh] {
            prop_assert!(a.map_monotone(act).contains_with(act.apply(x), 1e-12));
        }
    }

    #[test]
    fn subtraction_of_self_contains_zero(a in interval()) {
        prop_assert!(a.isub(a).contains(0.0));
    }

    #[test]
    fn center_radius_matches_endpoints(seed in any::<u64>(), m in 1usize..12, d in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Tensor::matrix(m, d, (0..m * d).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        let b = Tensor::vector((0..m).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let lo: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let hi: Vec<f64> = lo.iter().map(|l| l + rng.gen_range(0.0..1.0)).collect();
        let x = IntervalVector::new(lo, hi).unwrap();
        let cr = dense_interval(&w, &b, &x).unwrap();
        let ep = dense_interval_endpoint(&w, &b, &x).unwrap();
        for i in 0..m {
            prop_assert!((cr.lo()[i] - ep.lo()[i]).abs() < 1e-12);
            prop_assert!((cr.hi()[i] - ep.hi()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_radius_collapses_to_point(seed in any::<u64>(), p in prop::array::uniform3(0.0f64..1.0)) {
        let arch = TargetArch::with_hidden(&[7, 5]).unwrap();
        let th = theta(&arch, seed, 1.5);
        let point = target_point_forward(&th, p);
        let out = target_interval_forward(&th, &Box3::point(p));
        prop_assert!((out.lo() - point).abs() < 1e-12 && (out.hi() - point).abs() < 1e-12);
    }

    #[test]
    fn network_is_sound_and_isotonic(seed in any::<u64>()) {
        let arch = TargetArch::with_hidden(&[8, 8]).unwrap();
        let th = theta(&arch, seed, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let outer = random_box(&mut rng);
        let out = target_interval_forward(&th, &outer);
        let (lo, hi) = (outer.lo(), outer.hi());
        let inner_lo: [f64; 3] = std::array::from_fn(|k| rng.gen_range(lo[k]..=hi[k]));
        let inner_hi: [f64; 3] = std::array::from_fn(|k| rng.gen_range(inner_lo[k]..=hi[k]));
        let inner = Box3::from_corners(inner_lo, inner_hi).unwrap();
        let inner_out = target_interval_forward(&th, &inner);
        prop_assert!(outer.contains_box(&inner));
        prop_assert!(out.lo() <= inner_out.lo() + 1e-12 && inner_out.hi() <= out.hi() + 1e-12);
        for _ in 0..32 {
            let p: [f64; 3] = std::array::from_fn(|k| rng.gen_range(lo[k]..=hi[k]));
            let v = target_point_forward(&th, p);
            prop_assert!(out.contains_with(v, 1e-9), "{v} outside [{}, {}]", out.lo(), out.hi());
        }
    }

    #[test]
    fn layer_stacks_are_sound(seed in any::<u64>(), widths in prop::collection::vec(1usize..6, 2..5)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d0 = widths[0];
        let lo: Vec<f64> = (0..d0).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let hi: Vec<f64> = lo.iter().map(|l| l + rng.gen_range(0.0..0.5)).collect();
        let mut x = IntervalVector::new(lo.clone(), hi.clone()).unwrap();
        let mut points: Vec<Vec<f64>> = (0..16)
            .map(|_| lo.iter().zip(&hi).map(|(l, h)| rng.gen_range(*l..=*h)).collect())
            .collect();
        for pair in widths.windows(2) {
            let (d, m) = (pair[0], pair[1]);
            let w = Tensor::matrix(m, d, (0..m * d).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
            let b = Tensor::vector((0..m).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let act = if rng.gen() { Activation::Relu } else { Activation::Sigmoid };
            x = activation_interval(act, &dense_interval(&w, &b, &x).unwrap());
            for p in &mut points {
                *p = w
                    .data()
                    .chunks(d)
                    .zip(b.data())
                    .map(|(row, bias)| act.apply(row.iter().zip(p.iter()).map(|(a, c)| a * c).sum::<f64>() + bias))
                    .collect();
            }
        }
        for p in &points {
            prop_assert!(x.contains_point(p, 1e-9));
        }
    }

    #[test]
    fn worst_case_dominates_points(seed in any::<u64>(), inside in any::<bool>()) {
        let arch = TargetArch::with_hidden(&[6]).unwrap();
        let th = theta(&arch, seed, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(!seed);
        let cube = random_box(&mut rng);
        let out = target_interval_forward(&th, &cube);
        let worst = worst_case_output(&IntervalVector::from_intervals(&[out]), TrueLabel::Binary(inside)).unwrap().data()[0];
        for _ in 0..32 {
            let p: [f64; 3] = std::array::from_fn(|k| rng.gen_range(cube.lo()[k]..=cube.hi()[k]));
            let v = target_point_forward(&th, p);
            if inside {
                prop_assert!(worst <= v + 1e-12);
            } else {
                prop_assert!(worst >= v - 1e-12);
            }
        }
    }
}
