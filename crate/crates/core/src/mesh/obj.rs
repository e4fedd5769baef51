use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use super::{MeshError, TriangleMesh};

/// Shortest decimal that reproduces `v` rounded to 9 significant digits.
fn fmt9(v: f64) -> String {
    let r: f64 = format!("{v:.8e}").parse().expect("formatted float");
    if r == 0.0 {
        "0".to_string()
    } else {
        r.to_string()
    }
}

/// `v x y z` lines then `f i j k` lines with 1-based indices.
pub fn write_obj<W: Write>(mesh: &TriangleMesh, mut out: W) -> io::Result<()> {
    writeln!(out, "# cubefield triangle mesh")?;
    writeln!(out, "# {} vertices, {} faces", mesh.vertices.len(), mesh.triangles.len())?;
    for v in &mesh.vertices {
        writeln!(out, "v {} {} {}", fmt9(v[0]), fmt9(v[1]), fmt9(v[2]))?;
    }
    for t in &mesh.triangles {
        writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    Ok(())
}

pub fn export_obj(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_obj(mesh, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Reads the `v` and triangular `f` records of an OBJ file. Face entries may
/// carry `/texture/normal` suffixes, which are ignored.
pub fn parse_obj(text: &str) -> Result<TriangleMesh, MeshError> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let err = |message: String| MeshError::Parse { line: i + 1, message };
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let coords: Vec<f64> = parts
                    .map(|p| p.parse().map_err(|_| err(format!("bad coordinate {p:?}"))))
                    .collect::<Result<_, _>>()?;
                if coords.len() < 3 {
                    return Err(err("vertex needs three coordinates".into()));
                }
                vertices.push([coords[0], coords[1], coords[2]]);
            }
            Some("f") => {
                let idx: Vec<usize> = parts
                    .map(|p| {
                        let head = p.split('/').next().unwrap_or(p);
                        match head.parse::<usize>() {
                            Ok(k) if k >= 1 => Ok(k - 1),
                            _ => Err(err(format!("bad face index {p:?}"))),
                        }
                    })
                    .collect::<Result<_, _>>()?;
                if idx.len() != 3 {
                    return Err(err(format!("expected a triangle, got {} indices", idx.len())));
                }
                triangles.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, triangles)
}
