//! Built-in watertight object templates with procedural vertex colors.

use crate::geometry::{TriMesh, V3};
use crate::{Error, Result};
use std::collections::HashMap;

/// Smooth, view-independent color pattern; keeps values in [0.05, 0.95] so
/// shading stays distinguishable from the black background.
fn paint(p: &V3, scale: f64) -> [f64; 3] {
    let q = p / scale;
    [
        0.5 + 0.42 * (5.0 * q.x + 1.3 * q.y).sin(),
        0.5 + 0.42 * (4.0 * q.y - 2.1 * q.z + 1.0).sin(),
        0.5 + 0.42 * (3.0 * q.z + 2.7 * q.x - 0.5).sin(),
    ]
}

fn painted(mut mesh: TriMesh, scale: f64) -> TriMesh {
    mesh.colors = mesh.vertices.iter().map(|v| paint(v, scale)).collect();
    mesh
}

/// Icosphere of the given radius; `subdivisions` quadruple the face count
/// each time (0 -> 20 faces, 2 -> 320 faces).
pub fn icosphere(radius: f64, subdivisions: usize) -> TriMesh {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut vertices: Vec<V3> = vec![
        V3::new(-1.0, phi, 0.0),
        V3::new(1.0, phi, 0.0),
        V3::new(-1.0, -phi, 0.0),
        V3::new(1.0, -phi, 0.0),
        V3::new(0.0, -1.0, phi),
        V3::new(0.0, 1.0, phi),
        V3::new(0.0, -1.0, -phi),
        V3::new(0.0, 1.0, -phi),
        V3::new(phi, 0.0, -1.0),
        V3::new(phi, 0.0, 1.0),
        V3::new(-phi, 0.0, -1.0),
        V3::new(-phi, 0.0, 1.0),
    ]
    .into_iter()
    .map(|v| v.normalize() * radius)
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mid = [0usize; 3];
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                mid[k] = *midpoint.entry(key).or_insert_with(|| {
                    vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize() * radius);
                    vertices.len() - 1
                });
            }
            next.push([f[0], mid[0], mid[2]]);
            next.push([f[1], mid[1], mid[0]]);
            next.push([f[2], mid[2], mid[1]]);
            next.push([mid[0], mid[1], mid[2]]);
        }
        faces = next;
    }
    painted(
        TriMesh {
            vertices,
            colors: Vec::new(),
            faces,
        },
        radius,
    )
}

/// Axis-aligned cuboid centered at the origin, consistent outward winding.
pub fn cuboid(half: V3) -> TriMesh {
    let v = vec![
        V3::new(-half.x, -half.y, -half.z),
        V3::new(half.x, -half.y, -half.z),
        V3::new(half.x, half.y, -half.z),
        V3::new(-half.x, half.y, -half.z),
        V3::new(-half.x, -half.y, half.z),
        V3::new(half.x, -half.y, half.z),
        V3::new(half.x, half.y, half.z),
        V3::new(-half.x, half.y, half.z),
    ];
    let f = vec![
        [0, 2, 1],
        [0, 3, 2],
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [1, 2, 6],
        [1, 6, 5],
        [2, 3, 7],
        [2, 7, 6],
        [3, 0, 4],
        [3, 4, 7],
    ];
    let scale = half.norm();
    painted(
        TriMesh {
            vertices: v,
            colors: Vec::new(),
            faces: f,
        },
        scale,
    )
}

/// Template lookup by id. `size` is the radius (sphere) or half-extent scale.
pub fn template_by_id(id: &str, size: f64) -> Result<TriMesh> {
    match id {
        "icosphere" => Ok(icosphere(size, 2)),
        "icosphere_fine" => Ok(icosphere(size, 3)),
        "cube" => Ok(cuboid(V3::repeat(size))),
        "box" => Ok(cuboid(V3::new(size, size * 0.6, size * 0.8))),
        other => Err(Error::Config(format!("unknown template id '{other}'"))),
    }
}
