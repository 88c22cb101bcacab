//! Projected gradient descent with backtracking line search, shared by the
//! body-only initialization fit and the joint refinement blocks.

use super::jacobian::{BodyGrad, FkJac, ObjectGrad};
use super::BodyParams;
use crate::geometry::V3;
use crate::synth::body::BodyProxy;
use std::f64::consts::{PI, TAU};

pub const ARMIJO_C1: f64 = 1e-4;
pub const ALPHA_INIT: f64 = 1e-2;
pub const ALPHA_GROW: f64 = 1.6;
pub const ALPHA_MIN: f64 = 1e-18;

/// Per-block adaptive step memory.
#[derive(Debug, Clone, Copy)]
pub struct GdState {
    pub alpha: f64,
}

impl Default for GdState {
    fn default() -> Self {
        GdState { alpha: ALPHA_INIT }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Accepted { energy: f64 },
    /// Gradient numerically zero; nothing to do.
    ZeroGrad,
    /// No step length achieved sufficient decrease.
    Failed,
}

/// Backtracking line search along the negative gradient. `eval_at` must
/// return the energy of the projected candidate at the given step length.
pub fn line_search(
    e_cur: f64,
    grad_norm_sq: f64,
    st: &mut GdState,
    mut eval_at: impl FnMut(f64) -> f64,
) -> StepOutcome {
    if grad_norm_sq < 1e-28 {
        return StepOutcome::ZeroGrad;
    }
    let mut alpha = st.alpha * ALPHA_GROW;
    while alpha >= ALPHA_MIN {
        let e_new = eval_at(alpha);
        if e_new.is_finite() && e_new <= e_cur - ARMIJO_C1 * alpha * grad_norm_sq {
            st.alpha = alpha;
            return StepOutcome::Accepted { energy: e_new };
        }
        alpha *= 0.5;
    }
    StepOutcome::Failed
}

/// Wraps an axis-angle vector into magnitude < pi without changing the
/// rotation it encodes.
pub fn wrap_axis_angle(v: &mut V3) {
    let mut n = v.norm();
    while n >= PI {
        *v *= (n - TAU) / n;
        let n2 = v.norm();
        if n2 >= n {
            // Exactly pi (or numerically stuck): nudge inside the open ball.
            *v *= 1.0 - 1e-12;
            break;
        }
        n = n2;
    }
}

/// Projection onto the feasible body set: rotations wrapped below pi, shapes
/// clamped into (0.5, 2), root shape pinned to 1.
pub fn project_body(params: &mut BodyParams) {
    for v in params.pose.iter_mut() {
        wrap_axis_angle(v);
    }
    for s in params.shape.iter_mut() {
        *s = s.clamp(0.5 + 1e-9, 2.0 - 1e-9);
    }
    params.shape[0] = 1.0;
}

/// Projected candidate `params - alpha * grad`.
pub fn body_candidate(params: &BodyParams, grad: &BodyGrad, alpha: f64) -> BodyParams {
    let mut c = params.clone();
    for (p, g) in c.pose.iter_mut().zip(&grad.theta) {
        *p -= alpha * g;
    }
    for (s, g) in c.shape.iter_mut().zip(&grad.shape) {
        *s -= alpha * g;
    }
    c.translation -= alpha * grad.translation;
    project_body(&mut c);
    c
}

/// Projected candidate for the object pose block.
pub fn object_candidate(r: &V3, t: &V3, grad: &ObjectGrad, alpha: f64) -> (V3, V3) {
    let mut nr = r - alpha * grad.r;
    wrap_axis_angle(&mut nr);
    (nr, t - alpha * grad.t)
}

#[derive(Debug, Clone)]
pub struct BodyFit {
    pub params: BodyParams,
    /// RMS joint residual over the valid target joints.
    pub residual_rms: f64,
    pub energy: f64,
    /// False when the iteration cap was reached while still improving.
    pub converged: bool,
}

/// Fits body parameters to triangulated joints by minimizing the joint
/// least-squares energy from `init` (rest pose for frame 0, the previous
/// frame's solution afterwards).
pub fn fit_body_init(
    proxy: &BodyProxy,
    joints: &[Option<V3>],
    init: &BodyParams,
    max_iters: usize,
) -> BodyFit {
    let valid = joints.iter().flatten().count().max(1);
    let mut params = init.clone();
    project_body(&mut params);
    let eval = |p: &BodyParams| super::energy::e_smpl(&crate::synth::body::fk(proxy, p), joints);
    let mut e = eval(&params);
    let mut st = GdState::default();
    let mut converged = false;
    let mut stall = 0usize;
    for _ in 0..max_iters {
        let jac = FkJac::new(proxy, &params);
        let mut grad = BodyGrad::zeros(proxy.num_joints());
        super::energy::e_smpl_grad(&jac, joints, &mut grad, 1.0);
        grad.shape[0] = 0.0;
        let g2 = grad.norm().powi(2);
        match line_search(e, g2, &mut st, |alpha| {
            eval(&body_candidate(&params, &grad, alpha))
        }) {
            StepOutcome::Accepted { energy } => {
                let drop = e - energy;
                params = body_candidate(&params, &grad, st.alpha);
                e = energy;
                if drop <= 1e-14 * (1.0 + e) {
                    stall += 1;
                    if stall >= 3 {
                        converged = true;
                        break;
                    }
                } else {
                    stall = 0;
                }
            }
            StepOutcome::ZeroGrad | StepOutcome::Failed => {
                converged = true;
                break;
            }
        }
    }
    BodyFit {
        residual_rms: (e / valid as f64).sqrt(),
        energy: e,
        params,
        converged,
    }
}
