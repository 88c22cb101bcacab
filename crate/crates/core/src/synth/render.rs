//! Deterministic ray-cast renderer for ground-truth frames: Lambertian
//! shading with one directional light, per-vertex colored object template,
//! per-bone colored capsules, black background. Masks come from hit ids,
//! never from brightness.

use super::body::Capsule;
use crate::geometry::{Aabb, Ray, TriMesh, V3};
use crate::image::{ImageRgb, Mask};
use rayon::prelude::*;

pub const AMBIENT: f64 = 0.2;
pub const DIFFUSE: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subset {
    All,
    HumanOnly,
    ObjectOnly,
}

pub struct SceneGeometry<'a> {
    pub capsules: &'a [Capsule],
    pub bone_colors: &'a [[f64; 3]],
    /// Posed, vertex-colored, watertight.
    pub object: &'a TriMesh,
    pub object_aabb: Aabb,
    /// Unit vector toward the light.
    pub light: V3,
}

#[derive(Debug, Clone, Copy)]
pub enum Hit {
    Human { t: f64, capsule: usize, normal: V3 },
    Object { t: f64, face: usize, bary: [f64; 3] },
}

impl Hit {
    pub fn t(&self) -> f64 {
        match self {
            Hit::Human { t, .. } | Hit::Object { t, .. } => *t,
        }
    }
}

/// Smallest forward intersection with a capsule: side cylinder plus both
/// spherical caps.
pub fn ray_capsule(ray: &Ray, c: &Capsule) -> Option<f64> {
    let mut best: Option<f64> = None;
    let mut consider = |t: f64| {
        if t > 1e-9 && best.map_or(true, |b| t < b) {
            best = Some(t);
        }
    };
    let ab = c.b - c.a;
    let len = ab.norm();
    if len > 1e-12 {
        let axis = ab / len;
        let m = ray.origin - c.a;
        let dp = ray.dir - axis * ray.dir.dot(&axis);
        let mp = m - axis * m.dot(&axis);
        let a2 = dp.norm_squared();
        if a2 > 1e-15 {
            let b1 = mp.dot(&dp);
            let c0 = mp.norm_squared() - c.radius * c.radius;
            let disc = b1 * b1 - a2 * c0;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                for t in [(-b1 - sq) / a2, (-b1 + sq) / a2] {
                    let s = (m + ray.dir * t).dot(&axis);
                    if (0.0..=len).contains(&s) {
                        consider(t);
                    }
                }
            }
        }
    }
    for center in [c.a, c.b] {
        let m = ray.origin - center;
        let b1 = m.dot(&ray.dir);
        let c0 = m.norm_squared() - c.radius * c.radius;
        let disc = b1 * b1 - c0;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            consider(-b1 - sq);
            consider(-b1 + sq);
        }
    }
    best
}

pub fn capsule_normal(p: &V3, c: &Capsule) -> V3 {
    let ab = c.b - c.a;
    let len2 = ab.norm_squared();
    let s = if len2 > 1e-24 {
        ((p - c.a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (c.a + ab * s)).normalize()
}

pub fn cast(geom: &SceneGeometry, ray: &Ray, subset: Subset) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    if subset != Subset::ObjectOnly {
        for (i, c) in geom.capsules.iter().enumerate() {
            if let Some(t) = ray_capsule(ray, c) {
                if best.as_ref().map_or(true, |h| t < h.t()) {
                    best = Some(Hit::Human {
                        t,
                        capsule: i,
                        normal: capsule_normal(&ray.at(t), c),
                    });
                }
            }
        }
    }
    if subset != Subset::HumanOnly && geom.object_aabb.ray_intersect(ray).is_some() {
        if let Some(h) = geom.object.first_hit(ray) {
            if best.as_ref().map_or(true, |b| h.t < b.t()) {
                best = Some(Hit::Object {
                    t: h.t,
                    face: h.face,
                    bary: h.bary,
                });
            }
        }
    }
    best
}

/// Lambertian: albedo * (ambient + diffuse * max(0, n . l)).
pub fn shade_lambert(albedo: [f64; 3], normal: &V3, light: &V3) -> [f64; 3] {
    let lum = AMBIENT + DIFFUSE * normal.dot(light).max(0.0);
    [albedo[0] * lum, albedo[1] * lum, albedo[2] * lum]
}

/// Shaded color of a hit, shared by the ground-truth renderer and the
/// analytic-field test oracles.
pub fn shade_hit(geom: &SceneGeometry, ray: &Ray, hit: &Hit) -> [f64; 3] {
    match hit {
        Hit::Human { capsule, normal, .. } => {
            let albedo = geom.bone_colors[geom.capsules[*capsule].bone];
            shade_lambert(albedo, normal, &geom.light)
        }
        Hit::Object { face, bary, .. } => {
            let f = geom.object.faces[*face];
            let c0 = geom.object.colors[f[0]];
            let c1 = geom.object.colors[f[1]];
            let c2 = geom.object.colors[f[2]];
            let albedo = [
                bary[0] * c0[0] + bary[1] * c1[0] + bary[2] * c2[0],
                bary[0] * c0[1] + bary[1] * c1[1] + bary[2] * c2[1],
                bary[0] * c0[2] + bary[1] * c1[2] + bary[2] * c2[2],
            ];
            let mut n = geom.object.face_normal(*face);
            if n.dot(&ray.dir) > 0.0 {
                n = -n;
            }
            shade_lambert(albedo, &n, &geom.light)
        }
    }
}

pub struct RenderedView {
    pub image: ImageRgb,
    pub human_mask: Mask,
    pub object_mask: Mask,
    pub union_mask: Mask,
}

/// Renders one camera. Pixels are independent and rows are assembled in
/// order, so output is bit-identical for any worker count.
pub fn render_view(geom: &SceneGeometry, cam: &crate::geometry::Camera, subset: Subset) -> RenderedView {
    let (w, h) = (cam.width, cam.height);
    let rows: Vec<(Vec<[f64; 3]>, Vec<u8>)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut colors = vec![[0.0; 3]; w];
            let mut ids = vec![0u8; w];
            for x in 0..w {
                let ray = cam.pixel_ray(x as f64 + 0.5, y as f64 + 0.5);
                if let Some(hit) = cast(geom, &ray, subset) {
                    colors[x] = shade_hit(geom, &ray, &hit);
                    ids[x] = match hit {
                        Hit::Human { .. } => 1,
                        Hit::Object { .. } => 2,
                    };
                }
            }
            (colors, ids)
        })
        .collect();
    let mut image = ImageRgb::new(w, h);
    let mut human_mask = Mask::new(w, h);
    let mut object_mask = Mask::new(w, h);
    let mut union_mask = Mask::new(w, h);
    for (y, (colors, ids)) in rows.into_iter().enumerate() {
        for x in 0..w {
            image.set(x, y, colors[x]);
            human_mask.set(x, y, ids[x] == 1);
            object_mask.set(x, y, ids[x] == 2);
            union_mask.set(x, y, ids[x] != 0);
        }
    }
    RenderedView {
        image,
        human_mask,
        object_mask,
        union_mask,
    }
}
