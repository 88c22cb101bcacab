//! Rigid poses and rotation calculus.

use super::{M3, V3};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Tolerance on orthonormality and determinant for a valid rotation.
pub const ROTATION_TOL: f64 = 1e-6;

/// Rigid transform `x -> R x + t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidPose {
    pub rotation: M3,
    pub translation: V3,
}

impl RigidPose {
    pub fn identity() -> Self {
        RigidPose {
            rotation: M3::identity(),
            translation: V3::zeros(),
        }
    }

    /// Validates orthonormality and det = +1 within [`ROTATION_TOL`].
    pub fn new(rotation: M3, translation: V3) -> Result<Self> {
        let p = RigidPose {
            rotation,
            translation,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn from_axis_angle(axis_angle: V3, translation: V3) -> Self {
        RigidPose {
            rotation: axis_angle_to_matrix(axis_angle),
            translation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.rotation;
        let should_be_identity = r.transpose() * r;
        let ortho_err = (should_be_identity - M3::identity()).norm();
        let det_err = (r.determinant() - 1.0).abs();
        if ortho_err > ROTATION_TOL || det_err > ROTATION_TOL {
            return Err(Error::InvalidRotation(format!(
                "orthonormality error {ortho_err:.2e}, det error {det_err:.2e}"
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn apply(&self, p: &V3) -> V3 {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn apply_vector(&self, v: &V3) -> V3 {
        self.rotation * v
    }

    /// `self.compose(&other)` applies `other` first: `x -> self(other(x))`.
    pub fn compose(&self, other: &RigidPose) -> RigidPose {
        RigidPose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidPose {
        let rt = self.rotation.transpose();
        RigidPose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Nearest rotation via SVD; guards against drift in long compose chains.
    pub fn orthonormalized(&self) -> RigidPose {
        let svd = self.rotation.svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut r = u * vt;
        if r.determinant() < 0.0 {
            let mut u = u;
            u.column_mut(2).neg_mut();
            r = u * vt;
        }
        RigidPose {
            rotation: r,
            translation: self.translation,
        }
    }
}

/// Rodrigues formula. `axis_angle` is axis times angle in radians.
pub fn axis_angle_to_matrix(axis_angle: V3) -> M3 {
    nalgebra::Rotation3::from_scaled_axis(axis_angle).into_inner()
}

/// Inverse Rodrigues; returns the representative with magnitude in [0, pi].
pub fn matrix_to_axis_angle(r: &M3) -> V3 {
    nalgebra::Rotation3::from_matrix_unchecked(*r).scaled_axis()
}

/// Geodesic angle between two rotations, in radians.
pub fn geodesic_angle(a: &M3, b: &M3) -> f64 {
    let m = a.transpose() * b;
    let c = ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    c.acos()
}

#[inline]
fn skew(v: &V3) -> M3 {
    M3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Partial derivatives of `R(v)` w.r.t. the three axis-angle components.
///
/// Exact formula for |v| >= 1e-4; second-order series below that, so the
/// result stays smooth through v = 0.
pub fn rotation_jacobian(axis_angle: V3) -> [M3; 3] {
    let theta2 = axis_angle.norm_squared();
    let e = [V3::x(), V3::y(), V3::z()];
    if theta2 < 1e-8 {
        let vx = skew(&axis_angle);
        let mut out = [M3::zeros(); 3];
        for i in 0..3 {
            let ei = skew(&e[i]);
            out[i] = ei + (ei * vx + vx * ei) * 0.5;
        }
        out
    } else {
        let r = axis_angle_to_matrix(axis_angle);
        let mut out = [M3::zeros(); 3];
        for i in 0..3 {
            let w = axis_angle.cross(&((M3::identity() - r) * e[i]));
            out[i] = ((skew(&axis_angle) * axis_angle[i] + skew(&w)) / theta2) * r;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn random_axis_angle(seed: u64) -> V3 {
        use rand::Rng;
        let mut rng = crate::rng::stream(seed, crate::rng::Stage::Eval, 0);
        V3::new(
            rng.gen_range(-1.5..1.5),
            rng.gen_range(-1.5..1.5),
            rng.gen_range(-1.5..1.5),
        )
    }

    #[test]
    fn compose_inverse_is_identity() {
        for s in 0..20 {
            let p = RigidPose::from_axis_angle(
                random_axis_angle(s),
                V3::new(s as f64 * 0.1, -0.3, 0.7),
            );
            let id = p.compose(&p.inverse());
            assert_abs_diff_eq!(id.rotation, M3::identity(), epsilon = 1e-12);
            assert_abs_diff_eq!(id.translation, V3::zeros(), epsilon = 1e-12);
            let q = p.inverse().compose(&p);
            assert_abs_diff_eq!(q.rotation, M3::identity(), epsilon = 1e-12);
        }
    }

    #[test]
    fn axis_angle_round_trip() {
        for s in 0..20 {
            let v = random_axis_angle(s);
            let r = axis_angle_to_matrix(v);
            let v2 = matrix_to_axis_angle(&r);
            assert_abs_diff_eq!(v, v2, epsilon = 1e-9);
        }
    }

    #[test]
    fn rejects_non_rotation() {
        let m = M3::new(1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0);
        assert!(RigidPose::new(m, V3::zeros()).is_err());
    }

    #[test]
    fn geodesic_angle_matches_construction() {
        let a = axis_angle_to_matrix(V3::new(0.0, 0.0, 0.0));
        let b = axis_angle_to_matrix(V3::new(0.0, 0.7, 0.0));
        assert_abs_diff_eq!(geodesic_angle(&a, &b), 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(geodesic_angle(&b, &b), 0.0, epsilon = 1e-7);
    }

    #[test]
    fn rotation_jacobian_matches_central_differences() {
        let h = 1e-6;
        for s in 0..10 {
            let v = if s == 0 {
                V3::new(1e-6, -2e-6, 5e-7) // near-zero branch
            } else {
                random_axis_angle(s)
            };
            let jac = rotation_jacobian(v);
            for i in 0..3 {
                let mut vp = v;
                let mut vm = v;
                vp[i] += h;
                vm[i] -= h;
                let fd = (axis_angle_to_matrix(vp) - axis_angle_to_matrix(vm)) / (2.0 * h);
                let err = (jac[i] - fd).norm();
                assert!(err < 1e-7, "seed {s} comp {i}: err {err:.3e}");
            }
        }
    }
}
