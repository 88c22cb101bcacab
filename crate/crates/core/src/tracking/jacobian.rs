//! Exact derivatives of forward kinematics with respect to joint rotations,
//! bone scales, and root translation, via the chain rule down the joint tree.

use crate::geometry::{rotation_jacobian, M3, V3};
use crate::synth::body::{fk, BodyProxy, Fk, SurfaceSite};
use crate::tracking::BodyParams;

/// Gradient of a scalar energy with respect to the body state.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyGrad {
    pub theta: Vec<V3>,
    pub shape: Vec<f64>,
    pub translation: V3,
}

impl BodyGrad {
    pub fn zeros(num_joints: usize) -> Self {
        BodyGrad {
            theta: vec![V3::zeros(); num_joints],
            shape: vec![0.0; num_joints],
            translation: V3::zeros(),
        }
    }

    pub fn axpy(&mut self, a: f64, other: &BodyGrad) {
        for (t, o) in self.theta.iter_mut().zip(&other.theta) {
            *t += a * o;
        }
        for (s, o) in self.shape.iter_mut().zip(&other.shape) {
            *s += a * o;
        }
        self.translation += a * other.translation;
    }

    pub fn norm(&self) -> f64 {
        let mut acc = self.translation.norm_squared();
        for t in &self.theta {
            acc += t.norm_squared();
        }
        for s in &self.shape {
            acc += s * s;
        }
        acc.sqrt()
    }
}

/// Gradient of a scalar energy with respect to an object pose expressed as
/// axis-angle rotation plus translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectGrad {
    pub r: V3,
    pub t: V3,
}

impl ObjectGrad {
    pub fn zeros() -> Self {
        ObjectGrad {
            r: V3::zeros(),
            t: V3::zeros(),
        }
    }

    pub fn axpy(&mut self, a: f64, other: &ObjectGrad) {
        self.r += a * other.r;
        self.t += a * other.t;
    }

    pub fn norm(&self) -> f64 {
        (self.r.norm_squared() + self.t.norm_squared()).sqrt()
    }
}

/// FK state together with dense per-joint derivative tables.
pub struct FkJac {
    pub fk: Fk,
    /// [j][k]: d p_j / d theta_k, column i is the derivative along axis i.
    dp_dth: Vec<Vec<M3>>,
    /// [j][k][i]: d R_j / d theta_k^(i).
    dr_dth: Vec<Vec<[M3; 3]>>,
    /// [j][k]: d p_j / d shape_k.
    dp_ds: Vec<Vec<V3>>,
}

impl FkJac {
    pub fn new(proxy: &BodyProxy, params: &BodyParams) -> Self {
        let n = proxy.num_joints();
        let f = fk(proxy, params);
        let mut dp_dth = vec![vec![M3::zeros(); n]; n];
        let mut dr_dth = vec![vec![[M3::zeros(); 3]; n]; n];
        let mut dp_ds = vec![vec![V3::zeros(); n]; n];
        for j in 0..n {
            let local_jac = rotation_jacobian(params.pose[j]);
            let offset = proxy.joints[j].rest_offset;
            match proxy.joints[j].parent {
                None => {
                    for i in 0..3 {
                        dr_dth[j][j][i] = local_jac[i];
                    }
                    dp_ds[j][j] = offset;
                }
                Some(p) => {
                    let local_r = f.rot[p].transpose() * f.rot[j];
                    let scaled = offset * params.shape[j];
                    for k in 0..n {
                        for i in 0..3 {
                            let drp = dr_dth[p][k][i];
                            if k == j {
                                dr_dth[j][j][i] = f.rot[p] * local_jac[i];
                            } else {
                                dr_dth[j][k][i] = drp * local_r;
                            }
                            let mut col = dp_dth[p][k].column(i).into_owned();
                            col += drp * scaled;
                            dp_dth[j][k].set_column(i, &col);
                        }
                        dp_ds[j][k] = dp_ds[p][k];
                    }
                    dp_ds[j][j] += f.rot[p] * offset;
                }
            }
        }
        FkJac {
            fk: f,
            dp_dth,
            dr_dth,
            dp_ds,
        }
    }

    /// Accumulates `g . d(joint j)/d(params)` into `grad`.
    pub fn accumulate_joint(&self, j: usize, g: &V3, grad: &mut BodyGrad) {
        for k in 0..grad.theta.len() {
            grad.theta[k] += self.dp_dth[j][k].transpose() * g;
            grad.shape[k] += self.dp_ds[j][k].dot(g);
        }
        grad.translation += g;
    }

    /// World position of a surface site and gradient accumulation for it.
    /// The site rides bone `site.bone` under that bone's parent frame.
    pub fn site_world(&self, proxy: &BodyProxy, params: &BodyParams, site: &SurfaceSite) -> V3 {
        crate::synth::body::site_world(proxy, params, &self.fk, site)
    }

    pub fn accumulate_site(
        &self,
        proxy: &BodyProxy,
        params: &BodyParams,
        site: &SurfaceSite,
        g: &V3,
        grad: &mut BodyGrad,
    ) {
        let b = site.bone;
        let p = proxy.joints[b].parent.expect("site on root");
        let local =
            proxy.joints[b].rest_offset * (params.shape[b] * site.u) + site.lateral * proxy.joints[b].radius;
        for k in 0..grad.theta.len() {
            let mut dth = self.dp_dth[p][k].transpose() * g;
            for i in 0..3 {
                dth[i] += (self.dr_dth[p][k][i] * local).dot(g);
            }
            grad.theta[k] += dth;
            grad.shape[k] += self.dp_ds[p][k].dot(g);
        }
        grad.shape[b] += (self.fk.rot[p] * (proxy.joints[b].rest_offset * site.u)).dot(g);
        grad.translation += g;
    }
}
