//! Iso-surface extraction, OBJ output, component counting and surface sampling.

mod marching;
mod obj;
mod tables;

use std::collections::HashMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use thiserror::Error;

pub use marching::{marching_cubes, DEFAULT_ISO};
pub use obj::{export_obj, parse_obj, write_obj};

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("marching cubes needs at least 2 samples per axis, got {0}")]
    TooSmall(usize),
    #[error("non-finite value {value} at grid index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("triangle {triangle} references vertex {vertex} of {count}")]
    IndexOutOfRange { triangle: usize, vertex: usize, count: usize },
    #[error("extraction produced empty mesh")]
    Empty,
    #[error("sample count must be at least 1")]
    NoSamples,
    #[error("OBJ line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Indexed triangle mesh with counter-clockwise faces seen from outside.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

impl TriangleMesh {
    pub fn new(vertices: Vec<[f64; 3]>, triangles: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&v) = tri.iter().find(|&&v| v >= vertices.len()) {
                return Err(MeshError::IndexOutOfRange {
                    triangle: t,
                    vertex: v,
                    count: vertices.len(),
                });
            }
        }
        Ok(Self { vertices, triangles })
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn corners(&self, t: usize) -> [[f64; 3]; 3] {
        self.triangles[t].map(|i| self.vertices[i])
    }

    /// Unnormalized normal; its length is twice the triangle's area.
    pub fn face_normal(&self, t: usize) -> [f64; 3] {
        let [a, b, c] = self.corners(t);
        cross(sub(b, a), sub(c, a))
    }

    pub fn area(&self, t: usize) -> f64 {
        0.5 * norm(self.face_normal(t))
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.area(t)).sum()
    }

    /// Volume enclosed by a closed mesh; positive when faces point outward.
    pub fn signed_volume(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.corners(t);
                let n = cross(b, c);
                (a[0] * n[0] + a[1] * n[1] + a[2] * n[2]) / 6.0
            })
            .sum()
    }

    /// Number of faces using each undirected edge.
    pub fn edge_use_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut counts = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Every edge is shared by exactly two faces.
    pub fn is_watertight(&self) -> bool {
        self.edge_use_counts().values().all(|&c| c == 2)
    }

    /// Same surface with every face's orientation reversed.
    pub fn flipped(&self) -> Self {
        Self {
            vertices: self.vertices.clone(),
            triangles: self.triangles.iter().map(|&[a, b, c]| [a, c, b]).collect(),
        }
    }
}

/// Number of connected pieces and their triangle counts, largest first.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Components {
    pub count: usize,
    pub sizes: Vec<usize>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Triangles sharing a vertex belong to the same component.
pub fn connected_components(mesh: &TriangleMesh) -> Components {
    let mut parent: Vec<usize> = (0..mesh.vertices.len()).collect();
    for &[a, b, c] in &mesh.triangles {
        for v in [b, c] {
            let (ra, rv) = (find(&mut parent, a), find(&mut parent, v));
            if ra != rv {
                parent[ra.max(rv)] = ra.min(rv);
            }
        }
    }
    let mut sizes: HashMap<usize, usize> = HashMap::new();
    for tri in &mesh.triangles {
        *sizes.entry(find(&mut parent, tri[0])).or_insert(0) += 1;
    }
    let mut sizes: Vec<usize> = sizes.into_values().collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    Components {
        count: sizes.len(),
        sizes,
    }
}

/// `k` points drawn uniformly by area over the surface, each with the index
/// of the triangle it lies on.
pub fn sample_surface_indexed<R: Rng + ?Sized>(
    mesh: &TriangleMesh,
    k: usize,
    rng: &mut R,
) -> Result<Vec<(usize, [f64; 3])>, MeshError> {
    if k == 0 {
        return Err(MeshError::NoSamples);
    }
    let areas: Vec<f64> = (0..mesh.triangles.len()).map(|t| mesh.area(t)).collect();
    let pick = WeightedIndex::new(&areas).map_err(|_| MeshError::Empty)?;
    Ok((0..k)
        .map(|_| {
            let t = pick.sample(rng);
            let [a, b, c] = mesh.corners(t);
            let u = rng.gen::<f64>().sqrt();
            let v: f64 = rng.gen();
            let (wa, wb, wc) = (1.0 - u, u * (1.0 - v), u * v);
            let p = [0, 1, 2].map(|i| wa * a[i] + wb * b[i] + wc * c[i]);
            (t, p)
        })
        .collect())
}

pub fn sample_surface<R: Rng + ?Sized>(mesh: &TriangleMesh, k: usize, rng: &mut R) -> Result<Vec<[f64; 3]>, MeshError> {
    Ok(sample_surface_indexed(mesh, k, rng)?.into_iter().map(|(_, p)| p).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn tetrahedron(offset: f64) -> (Vec<[f64; 3]>, Vec<[usize; 3]>) {
        let v = vec![
            [offset, 0.0, 0.0],
            [offset + 1.0, 0.0, 0.0],
            [offset, 1.0, 0.0],
            [offset, 0.0, 1.0],
        ];
        (v, vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
    }

    #[test]
    fn tetrahedron_is_closed_and_outward() {
        let (v, t) = tetrahedron(0.0);
        let mesh = TriangleMesh::new(v, t).unwrap();
        assert!(mesh.is_watertight());
        assert!((mesh.signed_volume() - 1.0 / 6.0).abs() < 1e-15);
        assert!((mesh.flipped().signed_volume() + 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_indices() {
        assert!(matches!(
            TriangleMesh::new(vec![[0.0; 3]; 2], vec![[0, 1, 2]]),
            Err(MeshError::IndexOutOfRange { vertex: 2, .. })
        ));
    }

    #[test]
    fn component_counts() {
        assert_eq!(connected_components(&TriangleMesh::default()), Components { count: 0, sizes: vec![] });
        let (mut v, mut t) = tetrahedron(0.0);
        let (v2, t2) = tetrahedron(5.0);
        t.extend(t2.iter().map(|tri| tri.map(|i| i + v.len())));
        v.extend(v2);
        let c = connected_components(&TriangleMesh::new(v, t).unwrap());
        assert_eq!(c, Components { count: 2, sizes: vec![4, 4] });
    }

    #[test]
    fn single_triangle_samples_lie_inside() {
        let mesh = TriangleMesh::new(vec![[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 1.0, 0.5]], vec![[0, 1, 2]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = mesh.face_normal(0);
        let len = norm(n);
        for p in sample_surface(&mesh, 2000, &mut rng).unwrap() {
            let plane = (p[0] * n[0] + p[1] * n[1] + p[2] * n[2]) / len;
            assert!(plane.abs() < 1e-9);
            // Barycentric coordinates recovered from the x and y axes.
            let b = p[0] / 2.0;
            let c = p[1];
            let a = 1.0 - b - c;
            for w in [a, b, c] {
                assert!((-1e-12..=1.0 + 1e-12).contains(&w));
            }
        }
    }

    #[test]
    fn selection_follows_area() {
        // Areas 1 and 3.
        let mesh = TriangleMesh::new(
            vec![[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 5.0], [6.0, 0.0, 5.0], [0.0, 1.0, 5.0]],
            vec![[0, 1, 2], [3, 4, 5]],
        )
        .unwrap();
        let k = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let first = sample_surface_indexed(&mesh, k, &mut rng)
            .unwrap()
            .iter()
            .filter(|(t, _)| *t == 0)
            .count() as f64;
        let sigma = (k as f64 * 0.25 * 0.75).sqrt();
        assert!((first - 0.25 * k as f64).abs() < 5.0 * sigma, "{first}");
    }

    #[test]
    fn sampling_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(sample_surface(&TriangleMesh::default(), 4, &mut rng), Err(MeshError::Empty)));
        let (v, t) = tetrahedron(0.0);
        let mesh = TriangleMesh::new(v, t).unwrap();
        assert!(matches!(sample_surface(&mesh, 0, &mut rng), Err(MeshError::NoSamples)));
    }
}
