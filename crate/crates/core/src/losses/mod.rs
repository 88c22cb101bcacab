//! Training objectives: photometric reconstruction, template occupancy and
//! sparsity, contact-aware deformation control, pseudo-label semantics, and
//! the pseudo-segmentation pass that supplies those labels.
//!
//! Each loss returns its unweighted value and accumulates gradients already
//! scaled by the caller's weight, so one gradient buffer per field collects
//! the whole objective. Sample-set losses reduce in fixed chunk order, which
//! keeps results identical across worker counts.

mod pseudo;
mod ray;

pub use pseudo::{generate_pseudo_segmentation, load_pseudo_seg, save_pseudo_seg, PseudoSegMap};
pub use ray::{backward_ray, forward_ray, RayForward};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::field::{
    HumanField, HumanFrameCtx, HumanGrads, HumanSample, ObjectField, ObjectGrads, ObjectSample,
    Real,
};
use crate::geometry::{Aabb, InsideTester, V3};
use crate::{Error, Result};

/// Label target for rays in the pseudo object set: (human, object) one-hot.
pub const OBJECT_LABEL: [f64; 2] = [0.0, 1.0];

/// Samples per parallel reduction chunk.
const CHUNK: usize = 128;

/// Per-term weights plus the knobs of the pseudo-segmentation pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub w_c: f64,
    pub w_o: f64,
    pub w_h: f64,
    pub w_s: f64,
    /// Mean absolute per-channel difference below which a rendered pixel
    /// counts as matching the captured one.
    pub tau_s: f64,
    /// Template-box samples per step for the object occupancy term.
    pub object_samples: usize,
    /// Body-box samples per step for the contact term.
    pub human_samples: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_c: 1.0,
            w_o: 0.1,
            w_h: 0.1,
            w_s: 0.05,
            tau_s: 0.05,
            object_samples: 1024,
            human_samples: 1024,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("w_c", self.w_c),
            ("w_o", self.w_o),
            ("w_h", self.w_h),
            ("w_s", self.w_s),
            ("tau_s", self.tau_s),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("loss weight {name} = {v} must be >= 0")));
            }
        }
        Ok(())
    }
}

/// Unweighted per-term values for one step; the weighted total is
/// [`LossBreakdown::total`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_c: f64,
    pub l_o: f64,
    pub l_h: f64,
    pub l_s: f64,
}

impl LossBreakdown {
    pub fn total(&self, w: &LossWeights) -> f64 {
        w.w_c * self.l_c + w.w_o * self.l_o + w.w_h * self.l_h + w.w_s * self.l_s
    }
}

/// Squared color error summed over a batch of rays; returns the loss and its
/// gradient with respect to each rendered color.
pub fn loss_photometric(rendered: &[[f64; 3]], observed: &[[f64; 3]]) -> (f64, Vec<[f64; 3]>) {
    assert_eq!(rendered.len(), observed.len(), "batch ordering mismatch");
    let mut total = 0.0;
    let mut d = Vec::with_capacity(rendered.len());
    for (c, o) in rendered.iter().zip(observed) {
        let mut dc = [0.0; 3];
        for i in 0..3 {
            let r = c[i] - o[i];
            total += r * r;
            dc[i] = 2.0 * r;
        }
        d.push(dc);
    }
    (total, d)
}

/// Squared label error over the pseudo-labeled rays; returns the loss and
/// its gradient with respect to each rendered label pair. An empty batch is
/// worth zero but logged, since it usually means the pseudo maps are blank.
pub fn loss_semantic(rendered: &[[f64; 2]], pseudo: &[[f64; 2]]) -> (f64, Vec<[f64; 2]>) {
    assert_eq!(rendered.len(), pseudo.len(), "batch ordering mismatch");
    if rendered.is_empty() {
        log::warn!("semantic loss over an empty pseudo-labeled ray set");
        return (0.0, Vec::new());
    }
    let mut total = 0.0;
    let mut d = Vec::with_capacity(rendered.len());
    for (s, t) in rendered.iter().zip(pseudo) {
        let mut ds = [0.0; 2];
        for i in 0..2 {
            let r = s[i] - t[i];
            total += r * r;
            ds[i] = 2.0 * r;
        }
        d.push(ds);
    }
    (total, d)
}

/// Occupancy/sparsity integrand and its density derivative: inside points
/// pay e^{-2 sigma} for staying empty, outside points pay sigma^2 for stray
/// mass.
pub fn template_term(sigma: f64, inside: bool) -> (f64, f64) {
    if inside {
        let e = (-2.0 * sigma).exp();
        (e, -2.0 * e)
    } else {
        (sigma * sigma, 2.0 * sigma)
    }
}

/// Contact integrand: squared human density inside the posed template.
pub fn contact_term(sigma: f64) -> (f64, f64) {
    (sigma * sigma, 2.0 * sigma)
}

/// Object occupancy + sparsity over a canonical-box sample set. `tester`
/// must wrap the canonical template. Gradients are scaled by `weight`.
pub fn loss_object_template<T: Real>(
    field: &ObjectField<T>,
    tester: &InsideTester,
    samples: &[V3],
    weight: f64,
    g: &mut ObjectGrads<T>,
) -> f64 {
    let parts: Vec<(f64, ObjectGrads<T>)> = samples
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut s = ObjectSample::default();
            let mut pg = ObjectGrads::zeros(field);
            let mut total = 0.0;
            for p in chunk {
                let sigma = field.density_canonical(p, &mut s).f64();
                let (v, dv) = template_term(sigma, tester.contains(p));
                total += v;
                field.backward_density(&mut s, T::fr(weight * dv), &mut pg);
            }
            (total, pg)
        })
        .collect();
    let mut total = 0.0;
    for (t, pg) in &parts {
        total += t;
        g.add(pg);
    }
    total
}

/// Penalizes human density inside the frame-posed template. `tester` must
/// wrap the posed template for `frame`. Gradients are scaled by `weight`.
pub fn loss_human_contact<T: Real>(
    field: &HumanField<T>,
    ctx: &HumanFrameCtx<T>,
    frame: usize,
    tester: &InsideTester,
    samples: &[V3],
    weight: f64,
    g: &mut HumanGrads<T>,
) -> f64 {
    let parts: Vec<(f64, HumanGrads<T>)> = samples
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut s = HumanSample::default();
            let mut pg = HumanGrads::zeros(field);
            let mut total = 0.0;
            for p in chunk {
                if !tester.contains(p) {
                    continue;
                }
                let sigma = field.density_at(ctx, frame, p, &mut s).f64();
                let (v, dv) = contact_term(sigma);
                total += v;
                field.backward_density(&mut s, T::fr(weight * dv), &mut pg);
            }
            (total, pg)
        })
        .collect();
    let mut total = 0.0;
    for (t, pg) in &parts {
        total += t;
        g.add(pg);
    }
    total
}

/// Uniform points in a box, for the template and contact sample sets.
pub fn sample_points(aabb: &Aabb, n: usize, rng: &mut ChaCha8Rng) -> Vec<V3> {
    (0..n)
        .map(|_| {
            V3::new(
                rng.gen_range(aabb.min.x..=aabb.max.x),
                rng.gen_range(aabb.min.y..=aabb.max.y),
                rng.gen_range(aabb.min.z..=aabb.max.z),
            )
        })
        .collect()
}
