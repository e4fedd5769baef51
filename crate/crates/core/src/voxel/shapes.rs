//! Procedural solids used as desk-scale training data.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{VoxelError, VoxelGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeKind {
    Sphere,
    Box,
    Torus,
    UnionOfTwoSpheres,
    Frame,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 5] = [
        ShapeKind::Sphere,
        ShapeKind::Box,
        ShapeKind::Torus,
        ShapeKind::UnionOfTwoSpheres,
        ShapeKind::Frame,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Sphere => "sphere",
            ShapeKind::Box => "box",
            ShapeKind::Torus => "torus",
            ShapeKind::UnionOfTwoSpheres => "union-of-two-spheres",
            ShapeKind::Frame => "frame",
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeKind {
    type Err = VoxelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sphere" => Ok(ShapeKind::Sphere),
            "box" => Ok(ShapeKind::Box),
            "torus" => Ok(ShapeKind::Torus),
            "union-of-two-spheres" | "two-spheres" => Ok(ShapeKind::UnionOfTwoSpheres),
            "frame" => Ok(ShapeKind::Frame),
            other => Err(VoxelError::InvalidParams(format!("unknown shape kind {other:?}"))),
        }
    }
}

/// Analytic solid with an inside predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ShapeSpec {
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    Box {
        min: [f64; 3],
        max: [f64; 3],
    },
    /// Ring around the z axis through `center`.
    Torus {
        center: [f64; 3],
        major: f64,
        minor: f64,
    },
    UnionOfTwoSpheres {
        a_center: [f64; 3],
        a_radius: f64,
        b_center: [f64; 3],
        b_radius: f64,
    },
    /// The twelve edge bars of a box, each `thickness` wide.
    Frame {
        min: [f64; 3],
        max: [f64; 3],
        thickness: f64,
    },
}

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum()
}

impl ShapeSpec {
    pub fn kind(&self) -> ShapeKind {
        match self {
            ShapeSpec::Sphere { .. } => ShapeKind::Sphere,
            ShapeSpec::Box { .. } => ShapeKind::Box,
            ShapeSpec::Torus { .. } => ShapeKind::Torus,
            ShapeSpec::UnionOfTwoSpheres { .. } => ShapeKind::UnionOfTwoSpheres,
            ShapeSpec::Frame { .. } => ShapeKind::Frame,
        }
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        match *self {
            ShapeSpec::Sphere { center, radius } => dist2(p, center) <= radius * radius,
            ShapeSpec::Box { min, max } => (0..3).all(|i| min[i] <= p[i] && p[i] <= max[i]),
            ShapeSpec::Torus {
                center,
                major,
                minor,
            } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                let ring = (dx * dx + dy * dy).sqrt() - major;
                let dz = p[2] - center[2];
                ring * ring + dz * dz <= minor * minor
            }
            ShapeSpec::UnionOfTwoSpheres {
                a_center,
                a_radius,
                b_center,
                b_radius,
            } => {
                dist2(p, a_center) <= a_radius * a_radius
                    || dist2(p, b_center) <= b_radius * b_radius
            }
            ShapeSpec::Frame {
                min,
                max,
                thickness,
            } => {
                if !(0..3).all(|i| min[i] <= p[i] && p[i] <= max[i]) {
                    return false;
                }
                let near_faces = (0..3)
                    .filter(|&i| p[i] - min[i] <= thickness || max[i] - p[i] <= thickness)
                    .count();
                near_faces >= 2
            }
        }
    }

    /// Axis-aligned bounds of the solid.
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let ball = |c: [f64; 3], r: f64| (c.map(|v| v - r), c.map(|v| v + r));
        match *self {
            ShapeSpec::Sphere { center, radius } => ball(center, radius),
            ShapeSpec::Box { min, max } | ShapeSpec::Frame { min, max, .. } => (min, max),
            ShapeSpec::Torus {
                center,
                major,
                minor,
            } => {
                let r = major + minor;
                (
                    [center[0] - r, center[1] - r, center[2] - minor],
                    [center[0] + r, center[1] + r, center[2] + minor],
                )
            }
            ShapeSpec::UnionOfTwoSpheres {
                a_center,
                a_radius,
                b_center,
                b_radius,
            } => {
                let (alo, ahi) = ball(a_center, a_radius);
                let (blo, bhi) = ball(b_center, b_radius);
                (
                    [0, 1, 2].map(|i| alo[i].min(blo[i])),
                    [0, 1, 2].map(|i| ahi[i].max(bhi[i])),
                )
            }
        }
    }

    pub fn validate(&self) -> Result<(), VoxelError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(VoxelError::InvalidParams(format!("{name} must be positive, got {v}")))
            }
        };
        match *self {
            ShapeSpec::Sphere { radius, .. } => positive("radius", radius)?,
            ShapeSpec::Box { min, max } => {
                if (0..3).any(|i| min[i] >= max[i]) {
                    return Err(VoxelError::InvalidParams("box min must be below max".into()));
                }
            }
            ShapeSpec::Torus { major, minor, .. } => {
                positive("major radius", major)?;
                positive("minor radius", minor)?;
                if minor >= major {
                    return Err(VoxelError::InvalidParams(
                        "torus minor radius must be below the major radius".into(),
                    ));
                }
            }
            ShapeSpec::UnionOfTwoSpheres {
                a_radius, b_radius, ..
            } => {
                positive("radius", a_radius)?;
                positive("radius", b_radius)?;
            }
            ShapeSpec::Frame {
                min,
                max,
                thickness,
            } => {
                positive("thickness", thickness)?;
                if (0..3).any(|i| max[i] - min[i] <= 2.0 * thickness) {
                    return Err(VoxelError::InvalidParams(
                        "frame bars overlap; box is too small for the thickness".into(),
                    ));
                }
            }
        }
        let (lo, hi) = self.bounds();
        if lo.iter().chain(&hi).any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(VoxelError::OutOfUnitCube(format!(
                "bounds {lo:?}..{hi:?}"
            )));
        }
        Ok(())
    }

    /// Labels every cell by its center against the inside predicate.
    pub fn voxelize(&self, n: usize) -> Result<VoxelGrid, VoxelError> {
        if n < 4 {
            return Err(VoxelError::ResolutionTooSmall(n));
        }
        self.validate()?;
        let nf = n as f64;
        VoxelGrid::from_fn(n, |x, y, z| {
            self.contains([
                (x as f64 + 0.5) / nf,
                (y as f64 + 0.5) / nf,
                (z as f64 + 0.5) / nf,
            ])
        })
    }

    /// Random instance of `kind` that fits the unit cube with a margin.
    pub fn random<R: Rng + ?Sized>(kind: ShapeKind, rng: &mut R) -> ShapeSpec {
        let jitter = |rng: &mut R, spread: f64| -> [f64; 3] {
            [0, 1, 2].map(|_| 0.5 + rng.gen_range(-spread..=spread))
        };
        match kind {
            ShapeKind::Sphere => ShapeSpec::Sphere {
                center: jitter(rng, 0.08),
                radius: rng.gen_range(0.2..0.32),
            },
            ShapeKind::Box => {
                let c = jitter(rng, 0.06);
                let half = [0, 1, 2].map(|_| rng.gen_range(0.14..0.3));
                ShapeSpec::Box {
                    min: [0, 1, 2].map(|i| c[i] - half[i]),
                    max: [0, 1, 2].map(|i| c[i] + half[i]),
                }
            }
            ShapeKind::Torus => ShapeSpec::Torus {
                center: jitter(rng, 0.05),
                major: rng.gen_range(0.24..0.3),
                minor: rng.gen_range(0.1..0.13),
            },
            ShapeKind::UnionOfTwoSpheres => {
                let ra = rng.gen_range(0.14..0.2);
                let rb = rng.gen_range(0.14..0.2);
                let a = [rng.gen_range(0.24..0.32), rng.gen_range(0.3..0.4), rng.gen_range(0.4..0.6)];
                let b = [rng.gen_range(0.68..0.76), rng.gen_range(0.6..0.7), rng.gen_range(0.4..0.6)];
                ShapeSpec::UnionOfTwoSpheres {
                    a_center: a,
                    a_radius: ra,
                    b_center: b,
                    b_radius: rb,
                }
            }
            ShapeKind::Frame => {
                let half = rng.gen_range(0.26..0.32);
                let c = jitter(rng, 0.04);
                ShapeSpec::Frame {
                    min: c.map(|v| v - half),
                    max: c.map(|v| v + half),
                    thickness: rng.gen_range(0.11..0.14),
                }
            }
        }
    }
}

/// Eight fixed solids covering every shape kind.
pub fn desk_dataset() -> Vec<ShapeSpec> {
    vec![
        ShapeSpec::Sphere {
            center: [0.5, 0.5, 0.5],
            radius: 0.3,
        },
        ShapeSpec::Sphere {
            center: [0.42, 0.55, 0.46],
            radius: 0.22,
        },
        ShapeSpec::Box {
            min: [0.2, 0.25, 0.3],
            max: [0.8, 0.7, 0.75],
        },
        ShapeSpec::Box {
            min: [0.15, 0.4, 0.15],
            max: [0.85, 0.62, 0.85],
        },
        ShapeSpec::Torus {
            center: [0.5, 0.5, 0.5],
            major: 0.27,
            minor: 0.12,
        },
        ShapeSpec::UnionOfTwoSpheres {
            a_center: [0.3, 0.35, 0.5],
            a_radius: 0.17,
            b_center: [0.68, 0.65, 0.5],
            b_radius: 0.2,
        },
        ShapeSpec::Frame {
            min: [0.2, 0.2, 0.2],
            max: [0.8, 0.8, 0.8],
            thickness: 0.13,
        },
        ShapeSpec::Box {
            min: [0.3, 0.15, 0.2],
            max: [0.62, 0.85, 0.55],
        },
    ]
}
