use std::collections::HashMap;

use crate::voxel::ValueGrid;

use super::tables::{CORNERS, EDGE_CORNERS, EDGE_TABLE, TRI_TABLE};
use super::{MeshError, TriangleMesh};

pub const DEFAULT_ISO: f64 = 0.5;

/// Extracts the `iso` level set of `values` with linear edge interpolation.
///
/// Samples sit at cell centers `(i + 0.5) / m`, so the lattice spans
/// `[0.5/m, 1 - 0.5/m]³`. Vertices on a lattice edge are shared by every cell
/// using that edge, and faces point from values above `iso` toward values at
/// or below it.
pub fn marching_cubes(values: &ValueGrid, iso: f64) -> Result<TriangleMesh, MeshError> {
    let m = values.resolution();
    if m < 2 {
        return Err(MeshError::TooSmall(m));
    }
    if let Some((index, &value)) = values.values().iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(MeshError::NonFinite { index, value });
    }
    if !iso.is_finite() {
        return Err(MeshError::NonFinite { index: usize::MAX, value: iso });
    }

    let p = m;
    let at = |x: usize, y: usize, z: usize| (x * p + y) * p + z;
    let mut lattice = vec![0.0; p * p * p];
    for x in 0..p {
        for y in 0..p {
            for z in 0..p {
                lattice[at(x, y, z)] = values.get(x, y, z);
            }
        }
    }

    let coord = |i: usize| (i as f64 + 0.5) / m as f64;
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut welded: HashMap<usize, usize> = HashMap::new();

    for x in 0..p - 1 {
        for y in 0..p - 1 {
            for z in 0..p - 1 {
                let corner = |c: usize| [x + CORNERS[c][0], y + CORNERS[c][1], z + CORNERS[c][2]];
                let mut case = 0usize;
                for c in 0..8 {
                    let [cx, cy, cz] = corner(c);
                    if lattice[at(cx, cy, cz)] <= iso {
                        case |= 1 << c;
                    }
                }
                let edges = EDGE_TABLE[case];
                if edges == 0 {
                    continue;
                }
                let mut local = [usize::MAX; 12];
                for (e, slot) in local.iter_mut().enumerate() {
                    if edges & (1 << e) == 0 {
                        continue;
                    }
                    let (ca, cb) = EDGE_CORNERS[e];
                    let (a, b) = {
                        let (a, b) = (corner(ca), corner(cb));
                        if a <= b {
                            (a, b)
                        } else {
                            (b, a)
                        }
                    };
                    let axis = (0..3).find(|&k| a[k] != b[k]).expect("edge spans one axis");
                    let key = at(a[0], a[1], a[2]) * 3 + axis;
                    *slot = *welded.entry(key).or_insert_with(|| {
                        let va = lattice[at(a[0], a[1], a[2])];
                        let vb = lattice[at(b[0], b[1], b[2])];
                        let t = (iso - va) / (vb - va);
                        let mut pos = [coord(a[0]), coord(a[1]), coord(a[2])];
                        pos[axis] += t / m as f64;
                        vertices.push(pos);
                        vertices.len() - 1
                    });
                }
                for tri in TRI_TABLE[case].chunks(3).take_while(|t| t[0] >= 0) {
                    let [i, j, k] = [tri[0], tri[1], tri[2]].map(|e| local[e as usize]);
                    triangles.push([i, j, k]);
                }
            }
        }
    }

    let mut mesh = TriangleMesh { vertices, triangles };
    mesh.triangles.retain(|&[a, b, c]| a != b && b != c && a != c);
    let keep: Vec<bool> = (0..mesh.triangles.len()).map(|t| mesh.area(t) > 0.0).collect();
    let mut it = keep.iter();
    mesh.triangles.retain(|_| *it.next().expect("one flag per face"));
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::connected_components;

    fn field(m: usize, f: impl Fn([f64; 3]) -> f64) -> ValueGrid {
        ValueGrid::from_fn(m, f).unwrap()
    }

    fn ball(m: usize, center: [f64; 3], r: f64) -> ValueGrid {
        field(m, |p| {
            let d: f64 = (0..3).map(|k| (p[k] - center[k]).powi(2)).sum::<f64>().sqrt();
            r - d + 0.5
        })
    }

    #[test]
    fn constant_fields_are_empty() {
        for v in [0.0, 1.0, 0.5] {
            let mesh = marching_cubes(&field(4, |_| v), 0.5).unwrap();
            assert!(mesh.is_empty());
        }
    }

    #[test]
    fn single_hot_sample_is_an_octahedron() {
        let g = field(3, |p| if p == [0.5; 3] { 1.0 } else { 0.0 });
        let mesh = marching_cubes(&g, 0.5).unwrap();
        assert_eq!(mesh.triangles.len(), 8);
        assert_eq!(mesh.vertices.len(), 6);
        assert_eq!(connected_components(&mesh).count, 1);
        assert!(mesh.is_watertight());
        assert!(mesh.signed_volume() > 0.0);
        for v in &mesh.vertices {
            let d: f64 = (0..3).map(|k| (v[k] - 0.5).abs()).sum();
            assert!((d - 1.0 / 6.0).abs() < 1e-12, "{v:?}");
        }
    }

    #[test]
    fn sphere_vertices_near_radius() {
        let m = 32;
        let r = 0.3;
        let mesh = marching_cubes(&ball(m, [0.5; 3], r), 0.5).unwrap();
        assert!(!mesh.is_empty());
        for v in &mesh.vertices {
            let d = (0..3).map(|k| (v[k] - 0.5).powi(2)).sum::<f64>().sqrt();
            assert!((d - r).abs() < 1.0 / m as f64);
        }
        assert!(mesh.is_watertight());
        assert_eq!(connected_components(&mesh).count, 1);
        let expected = 4.0 / 3.0 * std::f64::consts::PI * r.powi(3);
        assert!((mesh.signed_volume() - expected).abs() / expected < 0.02);
    }

    #[test]
    fn vertices_stay_in_lattice_bounds() {
        let m = 6;
        let g = field(m, |p| if p[0] < 0.5 { 1.0 } else { 0.0 });
        let mesh = marching_cubes(&g, 0.5).unwrap();
        assert!(!mesh.is_empty());
        let (lo, hi) = (0.5 / m as f64, 1.0 - 0.5 / m as f64);
        for v in &mesh.vertices {
            assert!(v.iter().all(|c| (lo - 1e-12..=hi + 1e-12).contains(c)));
            assert!((v[0] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn two_balls_two_components() {
        let g = field(24, |p| {
            let d = |c: [f64; 3]| (0..3).map(|k| (p[k] - c[k]).powi(2)).sum::<f64>().sqrt();
            (0.18 - d([0.27; 3])).max(0.2 - d([0.7; 3])) + 0.5
        });
        let mesh = marching_cubes(&g, 0.5).unwrap();
        assert_eq!(connected_components(&mesh).count, 2);
        assert!(mesh.is_watertight());
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(marching_cubes(&field(1, |_| 1.0), 0.5), Err(MeshError::TooSmall(1))));
        let mut v = vec![0.0; 8];
        v[3] = f64::NAN;
        let g = ValueGrid::new(2, v).unwrap();
        assert!(matches!(marching_cubes(&g, 0.5), Err(MeshError::NonFinite { index: 3, .. })));
    }
}
