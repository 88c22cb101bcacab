//! Ray-triangle and closest-point primitives.

use super::{Ray, GEOM_EPS, V3};

#[derive(Debug, Clone, Copy)]
pub struct MeshHit {
    pub t: f64,
    pub face: usize,
    pub point: V3,
    /// Barycentric coordinates (w0, w1, w2) of the hit.
    pub bary: [f64; 3],
}

/// Moeller-Trumbore with inclusive boundaries: hits within `GEOM_EPS` of an
/// edge still count, so rays grazing a shared edge register on both faces
/// and the caller can tie-break. Returns `(t, u, v)`; forward hits only
/// (`t > GEOM_EPS`).
pub fn ray_triangle(ray: &Ray, v0: &V3, v1: &V3, v2: &V3) -> Option<(f64, f64, f64)> {
    let e1 = v1 - v0;
    let e2 = v2 - v0;
    let p = ray.dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv_det = 1.0 / det;
    let s = ray.origin - v0;
    let u = s.dot(&p) * inv_det;
    if u < -GEOM_EPS || u > 1.0 + GEOM_EPS {
        return None;
    }
    let q = s.cross(&e1);
    let v = ray.dir.dot(&q) * inv_det;
    if v < -GEOM_EPS || u + v > 1.0 + GEOM_EPS {
        return None;
    }
    let t = e2.dot(&q) * inv_det;
    if t <= GEOM_EPS {
        return None;
    }
    Some((t, u, v))
}

/// Closest distance from `p` to segment [a, b].
pub fn point_segment_distance(p: &V3, a: &V3, b: &V3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 < 1e-30 {
        return (p - a).norm();
    }
    let s = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * s)).norm()
}

/// Closest point on triangle (Ericson, Real-Time Collision Detection 5.1.5).
pub fn closest_point_on_triangle(p: &V3, a: &V3, b: &V3, c: &V3) -> V3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

pub fn point_triangle_distance(p: &V3, a: &V3, b: &V3, c: &V3) -> f64 {
    (p - closest_point_on_triangle(p, a, b, c)).norm()
}
