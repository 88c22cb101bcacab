//! Triangle meshes and watertight inside/outside queries.

use super::intersect::{point_triangle_distance, ray_triangle};
use super::{Aabb, MeshHit, Ray, RigidPose, GEOM_EPS, V3};
use crate::{Error, Result};
use std::collections::HashMap;

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<V3>,
    /// Per-vertex RGB in [0,1]; empty when the mesh is uncolored.
    pub colors: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn new(vertices: Vec<V3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let m = TriMesh {
            vertices,
            colors: Vec::new(),
            faces,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (i, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&v| v >= n) {
                return Err(Error::Mesh(format!("face {i} references vertex out of range")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::Mesh(format!("face {i} is degenerate")));
            }
        }
        if !self.colors.is_empty() && self.colors.len() != n {
            return Err(Error::Mesh("color count != vertex count".into()));
        }
        Ok(())
    }

    pub fn aabb(&self) -> Aabb {
        let mut b = Aabb::empty();
        for v in &self.vertices {
            b.expand_point(v);
        }
        b
    }

    pub fn transformed(&self, pose: &RigidPose) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|v| pose.apply(v)).collect(),
            colors: self.colors.clone(),
            faces: self.faces.clone(),
        }
    }

    pub fn face_vertices(&self, i: usize) -> (&V3, &V3, &V3) {
        let f = self.faces[i];
        (&self.vertices[f[0]], &self.vertices[f[1]], &self.vertices[f[2]])
    }

    pub fn face_normal(&self, i: usize) -> V3 {
        let (a, b, c) = self.face_vertices(i);
        (b - a).cross(&(c - a)).normalize()
    }

    /// Every directed edge must appear exactly once and be paired with its
    /// reverse: 2-manifold, consistently oriented, closed.
    pub fn is_watertight(&self) -> bool {
        self.watertight_violation().is_none()
    }

    pub fn watertight_violation(&self) -> Option<String> {
        let mut directed: HashMap<(usize, usize), u32> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let e = (f[k], f[(k + 1) % 3]);
                *directed.entry(e).or_insert(0) += 1;
            }
        }
        for (&(a, b), &count) in &directed {
            if count != 1 {
                return Some(format!("directed edge ({a},{b}) appears {count} times"));
            }
            if directed.get(&(b, a)) != Some(&1) {
                return Some(format!("edge ({a},{b}) has no reverse pairing"));
            }
        }
        None
    }

    /// Nearest forward intersection; exact depth ties broken by lowest face
    /// index (faces are scanned in ascending order and only a strictly
    /// closer hit replaces the incumbent).
    pub fn first_hit(&self, ray: &Ray) -> Option<MeshHit> {
        let mut best: Option<MeshHit> = None;
        for (i, _) in self.faces.iter().enumerate() {
            let (a, b, c) = self.face_vertices(i);
            if let Some((t, u, v)) = ray_triangle(ray, a, b, c) {
                let tie = 1e-12 * (1.0 + t.abs());
                let better = match &best {
                    None => true,
                    Some(h) => t < h.t - tie,
                };
                if better {
                    best = Some(MeshHit {
                        t,
                        face: i,
                        point: ray.at(t),
                        bary: [1.0 - u - v, u, v],
                    });
                }
            }
        }
        best
    }

    /// Distance from `p` to the surface.
    pub fn surface_distance(&self, p: &V3) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.faces.len() {
            let (a, b, c) = self.face_vertices(i);
            best = best.min(point_triangle_distance(p, a, b, c));
        }
        best
    }
}

/// Watertight inside/outside oracle: crossing parity along a probe ray with
/// deterministic jittered re-probes when a crossing is edge-degenerate or
/// plane-parallel. Points within [`GEOM_EPS`] of the surface count as inside.
///
/// This is the single source of truth for occupancy; the template
/// regularizers build on it.
pub struct InsideTester {
    mesh: TriMesh,
    /// Unit normal and plane offset per face, for a cheap surface-band reject.
    planes: Vec<(V3, f64)>,
}

/// Probes tried before giving up on a pathological mesh/point combination.
const MAX_PROBES: usize = 64;

fn probe_dir(k: u64) -> V3 {
    let u = crate::rng::splitmix64(k.wrapping_mul(2) + 1) as f64 / u64::MAX as f64;
    let v = crate::rng::splitmix64(k.wrapping_mul(2) + 2) as f64 / u64::MAX as f64;
    let z = 2.0 * u - 1.0;
    let r = (1.0 - z * z).max(0.0).sqrt();
    let phi = 2.0 * std::f64::consts::PI * v;
    V3::new(r * phi.cos(), r * phi.sin(), z).normalize()
}

impl InsideTester {
    pub fn new(mesh: &TriMesh) -> Result<Self> {
        mesh.validate()?;
        if let Some(v) = mesh.watertight_violation() {
            return Err(Error::Mesh(format!("inside test needs a watertight mesh: {v}")));
        }
        let planes = (0..mesh.faces.len())
            .map(|i| {
                let n = mesh.face_normal(i);
                let (a, _, _) = mesh.face_vertices(i);
                (n, n.dot(a))
            })
            .collect();
        Ok(InsideTester {
            mesh: mesh.clone(),
            planes,
        })
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn contains(&self, p: &V3) -> bool {
        // Surface band: plane distance is a lower bound on triangle distance,
        // so the exact test only runs for candidate faces.
        for (i, (n, d)) in self.planes.iter().enumerate() {
            if (n.dot(p) - d).abs() <= GEOM_EPS {
                let (a, b, c) = self.mesh.face_vertices(i);
                if point_triangle_distance(p, a, b, c) <= GEOM_EPS {
                    return true;
                }
            }
        }
        for probe in 0..MAX_PROBES {
            if let Some(odd) = self.parity(p, &probe_dir(probe as u64)) {
                return odd;
            }
        }
        // Watertight mesh + jittered probes: unreachable in practice.
        false
    }

    /// Crossing parity along `dir`; `None` when any crossing is ambiguous.
    fn parity(&self, p: &V3, dir: &V3) -> Option<bool> {
        let ray = Ray::new(*p, *dir);
        let mut crossings = 0usize;
        for (i, (n, d)) in self.planes.iter().enumerate() {
            let cos = dir.dot(n);
            if cos.abs() < 1e-9 {
                // Near-parallel: ambiguous only if the probe runs inside the
                // face's plane band.
                if (n.dot(p) - d).abs() < 1e-7 {
                    let (a, b, c) = self.mesh.face_vertices(i);
                    if point_triangle_distance(p, a, b, c) < 1e-3 {
                        return None;
                    }
                }
                continue;
            }
            let (a, b, c) = self.mesh.face_vertices(i);
            if let Some((_, u, v)) = ray_triangle(&ray, a, b, c) {
                let w = 1.0 - u - v;
                let edge_margin = 1e-9;
                if u < edge_margin || v < edge_margin || w < edge_margin {
                    return None;
                }
                crossings += 1;
            }
        }
        Some(crossings % 2 == 1)
    }
}

/// Convenience wrapper; construction cost is O(faces), so hold an
/// [`InsideTester`] for repeated queries.
pub fn point_inside_mesh(p: &V3, mesh: &TriMesh) -> Result<bool> {
    Ok(InsideTester::new(mesh)?.contains(p))
}
