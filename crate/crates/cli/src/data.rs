use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use cubefield::voxel::{desk_dataset, load_binvox, save_binvox, ShapeKind, ShapeSpec, VoxelGrid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DataKind {
    Sphere,
    Box,
    Torus,
    TwoSpheres,
    Frame,
    /// Random shapes cycling through every kind.
    Mixed,
    /// The fixed eight-shape desk set, repeated if `count` exceeds it.
    Desk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub spec: ShapeSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub resolution: usize,
    pub seed: u64,
    pub kind: String,
    pub shapes: Vec<ManifestEntry>,
}

fn specs(kind: DataKind, count: usize, seed: u64) -> Vec<ShapeSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fixed = |k: ShapeKind| -> Vec<ShapeKind> { vec![k; count] };
    let kinds = match kind {
        DataKind::Desk => {
            let desk = desk_dataset();
            return (0..count).map(|i| desk[i % desk.len()].clone()).collect();
        }
        DataKind::Mixed => (0..count).map(|i| ShapeKind::ALL[i % ShapeKind::ALL.len()]).collect(),
        DataKind::Sphere => fixed(ShapeKind::Sphere),
        DataKind::Box => fixed(ShapeKind::Box),
        DataKind::Torus => fixed(ShapeKind::Torus),
        DataKind::TwoSpheres => fixed(ShapeKind::UnionOfTwoSpheres),
        DataKind::Frame => fixed(ShapeKind::Frame),
    };
    kinds.into_iter().map(|k| ShapeSpec::random(k, &mut rng)).collect()
}

pub fn generate(kind: DataKind, n: usize, count: usize, seed: u64, out_dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut shapes = Vec::with_capacity(count);
    for (i, spec) in specs(kind, count, seed).into_iter().enumerate() {
        let file = format!("shape_{i:04}.binvox");
        let grid = spec.voxelize(n)?;
        save_binvox(&grid, out_dir.join(&file)).with_context(|| format!("writing {file}"))?;
        shapes.push(ManifestEntry { file, spec });
    }
    let manifest = Manifest {
        resolution: n,
        seed,
        kind: kind.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default(),
        shapes,
    };
    let path = out_dir.join(MANIFEST);
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(manifest)
}

/// Reads the manifest and every grid it lists; all grids must share one resolution.
pub fn load_dataset(dir: &Path) -> Result<(Manifest, Vec<VoxelGrid>)> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let manifest: Manifest = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if manifest.shapes.is_empty() {
        bail!("{} lists no shapes", path.display());
    }
    let mut grids = Vec::with_capacity(manifest.shapes.len());
    for entry in &manifest.shapes {
        let p = dir.join(&entry.file);
        let grid = load_binvox(&p).with_context(|| format!("reading {}", p.display()))?;
        if let Some(first) = grids.first().map(VoxelGrid::resolution) {
            if grid.resolution() != first {
                bail!(
                    "{} has resolution {}, earlier shapes have {first}",
                    entry.file,
                    grid.resolution()
                );
            }
        }
        grids.push(grid);
    }
    Ok((manifest, grids))
}
