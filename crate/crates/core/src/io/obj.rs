//! Wavefront OBJ subset: `v x y z [r g b]` and triangular `f` lines.

use crate::geometry::{TriMesh, V3};
use crate::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

pub fn write_obj(path: &Path, mesh: &TriMesh) -> Result<()> {
    let mut out = String::with_capacity(mesh.vertices.len() * 40);
    let colored = !mesh.colors.is_empty();
    for (i, v) in mesh.vertices.iter().enumerate() {
        if colored {
            let c = mesh.colors[i];
            writeln!(
                out,
                "v {:.9} {:.9} {:.9} {:.6} {:.6} {:.6}",
                v.x, v.y, v.z, c[0], c[1], c[2]
            )
            .unwrap();
        } else {
            writeln!(out, "v {:.9} {:.9} {:.9}", v.x, v.y, v.z).unwrap();
        }
    }
    for f in &mesh.faces {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_obj(path: &Path) -> Result<TriMesh> {
    let text = std::fs::read_to_string(path)?;
    let perr = |msg: String| Error::Parse {
        path: path.display().to_string(),
        message: msg,
    };
    let mut vertices = Vec::new();
    let mut colors = Vec::new();
    let mut faces = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let nums: Vec<f64> = tok
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| perr(format!("line {}: bad vertex", ln + 1)))?;
                if nums.len() != 3 && nums.len() != 6 {
                    return Err(perr(format!("line {}: vertex needs 3 or 6 numbers", ln + 1)));
                }
                vertices.push(V3::new(nums[0], nums[1], nums[2]));
                if nums.len() == 6 {
                    colors.push([nums[3], nums[4], nums[5]]);
                }
            }
            Some("f") => {
                // Tolerate `a/b/c` forms; only the vertex index is used.
                let idx: Vec<usize> = tok
                    .map(|t| {
                        t.split('/')
                            .next()
                            .unwrap()
                            .parse::<usize>()
                            .map_err(|_| perr(format!("line {}: bad face index", ln + 1)))
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(perr(format!("line {}: only triangles supported", ln + 1)));
                }
                if idx.iter().any(|&i| i == 0) {
                    return Err(perr(format!("line {}: obj indices are 1-based", ln + 1)));
                }
                faces.push([idx[0] - 1, idx[1] - 1, idx[2] - 1]);
            }
            // vn/vt/usemtl and friends are ignored.
            _ => {}
        }
    }
    if !colors.is_empty() && colors.len() != vertices.len() {
        return Err(perr("some vertices have colors, some do not".into()));
    }
    let mesh = TriMesh {
        vertices,
        colors,
        faces,
    };
    mesh.validate()?;
    Ok(mesh)
}
