//! Emission-absorption compositing over merged samples, with per-layer alpha
//! partitioning and an exact reverse pass.
//!
//! Color, alpha, and label integrals all share one weight computation, and
//! alpha is always formed as the same `human + object` sum, so the label
//! components sum to alpha bit-for-bit and an empty layer changes nothing.

use super::Entity;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositeSample {
    pub sigma: f64,
    pub delta: f64,
    pub entity: Entity,
    pub rgb: [f64; 3],
}

/// Per-sample weights T_i(1 - e^{-sigma_i delta_i}) and per-entity weight
/// sums [human, object].
pub fn composite_weights(samples: &[CompositeSample]) -> (Vec<f64>, [f64; 2]) {
    let mut t = 1.0f64;
    let mut weights = Vec::with_capacity(samples.len());
    let mut sums = [0.0f64; 2];
    for s in samples {
        let e = (-s.sigma * s.delta).exp();
        let w = t * (1.0 - e);
        sums[s.entity as usize] += w;
        weights.push(w);
        t *= e;
    }
    (weights, sums)
}

/// Color, alpha, and label integrals in one pass over shared weights. Alpha
/// is always the final `human + object` addition of the two partial sums, so
/// every caller sees the same partition identity.
pub fn composite_full(samples: &[CompositeSample]) -> ([f64; 3], f64, [f64; 2]) {
    let mut t = 1.0f64;
    let mut rgb = [0.0f64; 3];
    let mut sums = [0.0f64; 2];
    for s in samples {
        let e = (-s.sigma * s.delta).exp();
        let w = t * (1.0 - e);
        sums[s.entity as usize] += w;
        for i in 0..3 {
            rgb[i] += w * s.rgb[i];
        }
        t *= e;
    }
    // Accumulated rounding can push the weight sum a few ulps past 1. Trim
    // the larger component by an exact Sterbenz subtraction so the partition
    // still sums to alpha bit-for-bit while alpha stays in [0, 1].
    if sums[0] + sums[1] > 1.0 {
        if sums[0] >= 1.0 {
            sums = [1.0, 0.0];
        } else if sums[1] >= 1.0 {
            sums = [0.0, 1.0];
        } else if sums[0] >= 0.5 {
            sums[1] = 1.0 - sums[0];
        } else {
            sums[0] = 1.0 - sums[1];
        }
    }
    (rgb, sums[0] + sums[1], sums)
}

pub fn composite_color(samples: &[CompositeSample]) -> ([f64; 3], f64) {
    let (rgb, alpha, _) = composite_full(samples);
    (rgb, alpha)
}

/// Label vector [human, object]; its components sum to the alpha of
/// [`composite_color`] exactly because both are the same two partial sums.
pub fn composite_label(samples: &[CompositeSample]) -> [f64; 2] {
    let (_, _, sums) = composite_full(samples);
    sums
}

/// Reverse pass: gradients of `L = d_rgb . C + d_alpha * alpha + d_label . s`
/// with respect to every sample's sigma and color.
///
/// With v_i = d_rgb . c_i + d_alpha + d_label[entity_i], the loss is
/// sum_i w_i v_i, and dL/dsigma_i = delta_i (T_i e_i v_i - sum_{k>i} w_k v_k).
pub fn composite_backward(
    samples: &[CompositeSample],
    d_rgb: &[f64; 3],
    d_alpha: f64,
    d_label: &[f64; 2],
) -> Vec<(f64, [f64; 3])> {
    let n = samples.len();
    let mut t = 1.0f64;
    let mut trans = Vec::with_capacity(n);
    let mut es = Vec::with_capacity(n);
    let mut wv = Vec::with_capacity(n);
    for s in samples {
        let e = (-s.sigma * s.delta).exp();
        let w = t * (1.0 - e);
        let v = d_rgb[0] * s.rgb[0]
            + d_rgb[1] * s.rgb[1]
            + d_rgb[2] * s.rgb[2]
            + d_alpha
            + d_label[s.entity as usize];
        trans.push(t);
        es.push(e);
        wv.push((w, v));
        t *= e;
    }
    let mut out = vec![(0.0, [0.0; 3]); n];
    let mut suffix = 0.0f64;
    for i in (0..n).rev() {
        let (w, v) = wv[i];
        let d_sigma = samples[i].delta * (trans[i] * es[i] * v - suffix);
        let d_c = [d_rgb[0] * w, d_rgb[1] * w, d_rgb[2] * w];
        out[i] = (d_sigma, d_c);
        suffix += w * v;
    }
    out
}
