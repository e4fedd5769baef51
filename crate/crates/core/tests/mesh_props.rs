use std::collections::{BTreeSet, HashMap};

use cubefield::mesh::{connected_components, marching_cubes, parse_obj, write_obj, TriangleMesh};
use cubefield::voxel::ValueGrid;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Key = [i64; 3];

fn key(v: [f64; 3]) -> Key {
    v.map(|c| (c * 1e9).round() as i64)
}

fn vertex_keys(mesh: &TriangleMesh) -> BTreeSet<Key> {
    mesh.vertices.iter().map(|&v| key(v)).collect()
}

/// Triangles by vertex position, rotated so the smallest key leads.
fn faces(mesh: &TriangleMesh) -> BTreeSet<[Key; 3]> {
    mesh.triangles
        .iter()
        .map(|t| {
            let k = t.map(|i| key(mesh.vertices[i]));
            let lead = (0..3).min_by_key(|&i| k[i]).unwrap();
            [k[lead], k[(lead + 1) % 3], k[(lead + 2) % 3]]
        })
        .collect()
}

/// Values in [0, 1] that never sit exactly on the iso level.
fn noise(m: usize, seed: u64) -> ValueGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..m * m * m)
        .map(|_| {
            let v: f64 = rng.gen();
            if v == 0.5 { 0.25 } else { v }
        })
        .collect();
    ValueGrid::new(m, values).unwrap()
}

fn blob(m: usize, center: [f64; 3], r: f64) -> ValueGrid {
    ValueGrid::from_fn(m, |p| {
        let d = (0..3).map(|k| (p[k] - center[k]).powi(2)).sum::<f64>().sqrt();
        1.0 / (1.0 + (8.0 * (d - r) / r).exp())
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn complement_shares_vertices(m in 2usize..7, seed in any::<u64>()) {
        let g = noise(m, seed);
        let a = marching_cubes(&g, 0.5).unwrap();
        let b = marching_cubes(&g.map(|v| 1.0 - v), 0.5).unwrap();
        prop_assert_eq!(vertex_keys(&a), vertex_keys(&b));
    }

    #[test]
    fn complement_of_smooth_field_reverses_faces(
        c in prop::array::uniform3(0.4f64..0.6),
        r in 0.15f64..0.3,
        m in 8usize..20,
    ) {
        let g = blob(m, c, r);
        let a = marching_cubes(&g, 0.5).unwrap();
        let b = marching_cubes(&g.map(|v| 1.0 - v), 0.5).unwrap();
        prop_assert!(!a.is_empty());
        prop_assert_eq!(faces(&a.flipped()), faces(&b));
        prop_assert!((a.signed_volume() + b.signed_volume()).abs() < 1e-9);
    }

    #[test]
    fn closed_fields_are_watertight(
        c in prop::array::uniform3(0.35f64..0.65),
        r in 0.1f64..0.28,
        m in 10usize..28,
    ) {
        let mesh = marching_cubes(&blob(m, c, r), 0.5).unwrap();
        prop_assert!(mesh.is_watertight());
        prop_assert!(mesh.edge_use_counts().values().all(|&n| n == 2));
        prop_assert_eq!(connected_components(&mesh).count, 1);
        prop_assert!(mesh.signed_volume() > 0.0);
    }

    #[test]
    fn vertices_lie_in_unit_cube(m in 2usize..9, seed in any::<u64>(), iso in 0.05f64..0.95) {
        let mesh = marching_cubes(&noise(m, seed), iso).unwrap();
        for v in &mesh.vertices {
            prop_assert!(v.iter().all(|c| (0.0..=1.0).contains(c)));
        }
        for t in 0..mesh.triangles.len() {
            prop_assert!(mesh.area(t) > 0.0);
        }
    }

    #[test]
    fn obj_round_trip(m in 2usize..6, seed in any::<u64>()) {
        let mesh = marching_cubes(&noise(m, seed), 0.5).unwrap();
        let mut text = Vec::new();
        write_obj(&mesh, &mut text).unwrap();
        let back = parse_obj(std::str::from_utf8(&text).unwrap()).unwrap();
        prop_assert_eq!(&back.triangles, &mesh.triangles);
        for (a, b) in back.vertices.iter().zip(&mesh.vertices) {
            for k in 0..3 {
                prop_assert!((a[k] - b[k]).abs() <= 1e-8 * b[k].abs().max(1e-300));
            }
        }
    }
}

#[test]
fn complement_counts_match_on_fixtures() {
    let mut by_case: HashMap<bool, usize> = HashMap::new();
    for seed in 0..20 {
        let g = noise(4, seed);
        let a = marching_cubes(&g, 0.5).unwrap();
        let b = marching_cubes(&g.map(|v| 1.0 - v), 0.5).unwrap();
        *by_case.entry(a.vertices.len() == b.vertices.len()).or_default() += 1;
    }
    assert_eq!(by_case.get(&false), None);
}
