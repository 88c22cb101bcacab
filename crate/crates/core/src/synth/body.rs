//! Capsule-skeleton body proxy and forward kinematics.
//!
//! Joint j's local transform is x -> t_j + R(theta_j) x with t_j the rest
//! offset from its parent scaled by shape[j]. A bone is the segment from a
//! joint's parent to the joint, wrapped in a capsule; bone-local points are
//! coordinates in the parent joint's post-rotation frame, so they move
//! rigidly with the parent's global transform.

use crate::geometry::{axis_angle_to_matrix, Aabb, M3, V3};
use crate::tracking::BodyParams;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    /// Offset from the parent joint, in the parent's frame, at shape = 1.
    pub rest_offset: V3,
    /// Capsule radius of the bone parent -> this joint (root: unused).
    pub radius: f64,
    /// Render color of that bone.
    pub color: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BodyProxy {
    pub joints: Vec<Joint>,
}

impl BodyProxy {
    /// Default 8-joint humanoid: pelvis, spine, chest, head, and two-bone
    /// arms on each side. Parents must precede children.
    pub fn default_humanoid() -> Self {
        let j = |name: &str, parent: Option<usize>, off: (f64, f64, f64), radius: f64, color: (f64, f64, f64)| Joint {
            name: name.to_string(),
            parent,
            rest_offset: V3::new(off.0, off.1, off.2),
            radius,
            color: [color.0, color.1, color.2],
        };
        BodyProxy {
            joints: vec![
                j("pelvis", None, (0.0, 0.0, 0.0), 0.0, (0.5, 0.5, 0.5)),
                j("spine", Some(0), (0.0, 0.25, 0.0), 0.10, (0.20, 0.35, 0.80)),
                j("chest", Some(1), (0.0, 0.25, 0.0), 0.10, (0.25, 0.55, 0.75)),
                j("head", Some(2), (0.0, 0.22, 0.0), 0.07, (0.85, 0.65, 0.50)),
                j("l_upper_arm", Some(2), (0.32, 0.14, 0.0), 0.05, (0.75, 0.30, 0.30)),
                j("l_lower_arm", Some(4), (0.28, 0.0, 0.0), 0.04, (0.85, 0.45, 0.25)),
                j("r_upper_arm", Some(2), (-0.32, 0.14, 0.0), 0.05, (0.30, 0.65, 0.35)),
                j("r_lower_arm", Some(6), (-0.28, 0.0, 0.0), 0.04, (0.45, 0.75, 0.30)),
            ],
        }
    }

    pub fn num_joints(&self) -> usize {
        self.joints.len()
    }

    /// Bones are the non-root joints, in joint order.
    pub fn bones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.joints.len()).filter(|&i| self.joints[i].parent.is_some())
    }

    pub fn validate(&self) -> crate::Result<()> {
        for (i, j) in self.joints.iter().enumerate() {
            match j.parent {
                None if i != 0 => {
                    return Err(crate::Error::Tracking(format!(
                        "joint {i} has no parent but is not the root"
                    )))
                }
                Some(p) if p >= i => {
                    return Err(crate::Error::Tracking(format!(
                        "joint {i} parent {p} does not precede it"
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Global transforms per joint: world = rot[j] * local + pos[j].
#[derive(Debug, Clone)]
pub struct Fk {
    pub rot: Vec<M3>,
    pub pos: Vec<V3>,
}

impl Fk {
    pub fn joint_positions(&self) -> &[V3] {
        &self.pos
    }
}

pub fn fk(proxy: &BodyProxy, params: &BodyParams) -> Fk {
    assert_eq!(proxy.num_joints(), params.num_joints(), "joint count mismatch");
    let n = proxy.num_joints();
    let mut rot = Vec::with_capacity(n);
    let mut pos = Vec::with_capacity(n);
    for j in 0..n {
        let local_r = axis_angle_to_matrix(params.pose[j]);
        let offset = proxy.joints[j].rest_offset * params.shape[j];
        match proxy.joints[j].parent {
            None => {
                rot.push(local_r);
                pos.push(params.translation + offset);
            }
            Some(p) => {
                let (pr, pp): (M3, V3) = (rot[p], pos[p]);
                rot.push(pr * local_r);
                pos.push(pp + pr * offset);
            }
        }
    }
    Fk { rot, pos }
}

/// Posed capsule of one bone.
#[derive(Debug, Clone, Copy)]
pub struct Capsule {
    pub a: V3,
    pub b: V3,
    pub radius: f64,
    /// Joint index of the bone (the child end).
    pub bone: usize,
}

pub fn capsules(proxy: &BodyProxy, f: &Fk) -> Vec<Capsule> {
    proxy
        .bones()
        .map(|j| Capsule {
            a: f.pos[proxy.joints[j].parent.unwrap()],
            b: f.pos[j],
            radius: proxy.joints[j].radius,
            bone: j,
        })
        .collect()
}

/// World AABB of the posed capsules, dilated by `margin`.
pub fn body_aabb(proxy: &BodyProxy, f: &Fk, margin: f64) -> Aabb {
    let mut b = Aabb::empty();
    for c in capsules(proxy, f) {
        b.expand_point(&(c.a - V3::repeat(c.radius)));
        b.expand_point(&(c.a + V3::repeat(c.radius)));
        b.expand_point(&(c.b - V3::repeat(c.radius)));
        b.expand_point(&(c.b + V3::repeat(c.radius)));
    }
    b.dilated(margin)
}

/// A body surface point: fraction `u` along bone `bone`, pushed out by the
/// capsule radius along a fixed lateral direction in the parent frame.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceSite {
    pub bone: usize,
    pub u: f64,
    /// Unit vector orthogonal to the bone's rest direction, parent frame.
    pub lateral: V3,
}

/// Deterministic ring sites on every bone (`us` fractions x `phis` angles).
pub fn surface_sites(proxy: &BodyProxy, us: &[f64], phis: &[f64]) -> Vec<SurfaceSite> {
    let mut sites = Vec::new();
    for j in proxy.bones() {
        let o = proxy.joints[j].rest_offset;
        let dir = o.normalize();
        // Stable orthonormal pair.
        let helper = if dir.x.abs() < 0.9 { V3::x() } else { V3::y() };
        let n1 = dir.cross(&helper).normalize();
        let n2 = dir.cross(&n1);
        for &u in us {
            for &phi in phis {
                sites.push(SurfaceSite {
                    bone: j,
                    u,
                    lateral: n1 * phi.cos() + n2 * phi.sin(),
                });
            }
        }
    }
    sites
}

/// Bone-local coordinates of a site (parent post-rotation frame). Depends on
/// the bone's shape scale.
pub fn site_local(proxy: &BodyProxy, params: &BodyParams, site: &SurfaceSite) -> V3 {
    let j = site.bone;
    proxy.joints[j].rest_offset * (params.shape[j] * site.u)
        + site.lateral * proxy.joints[j].radius
}

/// World position of a site under the given FK.
pub fn site_world(proxy: &BodyProxy, params: &BodyParams, f: &Fk, site: &SurfaceSite) -> V3 {
    let parent = proxy.joints[site.bone].parent.unwrap();
    f.pos[parent] + f.rot[parent] * site_local(proxy, params, site)
}
