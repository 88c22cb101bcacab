//! Bias-corrected first/second-moment updates, one state per parameter group.

use crate::field::Real;

use super::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Real> {
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Real> AdamState<T> {
    pub fn zeros(n: usize) -> Self {
        AdamState {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
        }
    }
}

/// One update over a parameter group. `step` is the number of completed
/// steps, so the first call passes 0. A non-finite gradient anywhere in the
/// group leaves parameters and moments untouched and returns false.
pub fn adam_step<T: Real>(
    params: &mut [T],
    grads: &[T],
    state: &mut AdamState<T>,
    step: u64,
    cfg: &TrainConfig,
) -> bool {
    assert_eq!(params.len(), grads.len(), "parameter/gradient shape mismatch");
    assert_eq!(params.len(), state.m.len(), "parameter/moment shape mismatch");
    if grads.iter().any(|g| !g.is_finite()) {
        log::warn!("skipping a moment update at step {step}: non-finite gradient");
        return false;
    }
    let t = step as i32 + 1;
    let lr = cfg.lr(step);
    let b1 = T::fr(cfg.beta1);
    let b2 = T::fr(cfg.beta2);
    let one = T::one();
    let corr1 = T::fr(1.0 / (1.0 - cfg.beta1.powi(t)));
    let corr2 = T::fr(1.0 / (1.0 - cfg.beta2.powi(t)));
    let lr_t = T::fr(lr);
    let eps = T::fr(cfg.eps);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (one - b1) * g;
        state.v[i] = b2 * state.v[i] + (one - b2) * g * g;
        let m_hat = state.m[i] * corr1;
        let v_hat = state.v[i] * corr2;
        params[i] = params[i] - lr_t * m_hat / (v_hat.sqrt() + eps);
    }
    true
}
