//! Differentiable ray evaluation: the forward pass keeps every field cache
//! alive so upstream color/alpha/label gradients can flow back into both
//! fields' parameters through the compositor.

use crate::field::{
    HumanField, HumanFrameCtx, HumanSample, ObjectField, ObjectFrameCtx, ObjectSample, Real,
};
use crate::geometry::Ray;
use crate::render::{
    composite_backward, composite_full, CompositeSample, Entity, MergedSample,
};

#[derive(Debug, Clone)]
enum SampleCache<T: Real> {
    Human(HumanSample<T>),
    Object(ObjectSample<T>),
}

impl<T: Real> SampleCache<T> {
    fn fresh(entity: Entity) -> Self {
        match entity {
            Entity::Human => SampleCache::Human(HumanSample::default()),
            Entity::Object => SampleCache::Object(ObjectSample::default()),
        }
    }

    fn matches(&self, entity: Entity) -> bool {
        matches!(
            (self, entity),
            (SampleCache::Human(_), Entity::Human) | (SampleCache::Object(_), Entity::Object)
        )
    }
}

/// One ray's forward record. Reusable across rays; buffers grow to the
/// largest sample count seen.
#[derive(Debug, Clone, Default)]
pub struct RayForward<T: Real> {
    caches: Vec<SampleCache<T>>,
    comps: Vec<CompositeSample>,
    pub rgb: [f64; 3],
    pub alpha: f64,
    pub label: [f64; 2],
}

impl<T: Real> RayForward<T> {
    pub fn num_samples(&self) -> usize {
        self.comps.len()
    }
}

/// Evaluates both fields at every merged sample and composites the ray.
/// `dir_encoded` is the ray direction through the fields' shared direction
/// encoding.
#[allow(clippy::too_many_arguments)]
pub fn forward_ray<T: Real>(
    human: &HumanField<T>,
    object: &ObjectField<T>,
    hctx: &HumanFrameCtx<T>,
    octx: &ObjectFrameCtx,
    frame: usize,
    ray: &Ray,
    merged: &[MergedSample],
    dir_encoded: &[T],
    fwd: &mut RayForward<T>,
) {
    fwd.comps.clear();
    fwd.caches.truncate(merged.len());
    for (i, m) in merged.iter().enumerate() {
        if i == fwd.caches.len() {
            fwd.caches.push(SampleCache::fresh(m.entity));
        } else if !fwd.caches[i].matches(m.entity) {
            fwd.caches[i] = SampleCache::fresh(m.entity);
        }
        let x = ray.origin + ray.dir * m.depth;
        let (sigma, rgb) = match &mut fwd.caches[i] {
            SampleCache::Human(s) => human.eval(hctx, frame, &x, dir_encoded, s),
            SampleCache::Object(s) => object.eval(octx, frame, &x, dir_encoded, s),
        };
        fwd.comps.push(CompositeSample {
            sigma: sigma.f64(),
            delta: m.delta,
            entity: m.entity,
            rgb: [rgb[0].f64(), rgb[1].f64(), rgb[2].f64()],
        });
    }
    let (rgb, alpha, label) = composite_full(&fwd.comps);
    fwd.rgb = rgb;
    fwd.alpha = alpha;
    fwd.label = label;
}

/// Pushes upstream gradients on the composited color, alpha, and labels back
/// into both fields' parameter gradients.
#[allow(clippy::too_many_arguments)]
pub fn backward_ray<T: Real>(
    human: &HumanField<T>,
    object: &ObjectField<T>,
    fwd: &mut RayForward<T>,
    d_rgb: &[f64; 3],
    d_alpha: f64,
    d_label: &[f64; 2],
    hg: &mut crate::field::HumanGrads<T>,
    og: &mut crate::field::ObjectGrads<T>,
) {
    let per_sample = composite_backward(&fwd.comps, d_rgb, d_alpha, d_label);
    for (cache, (d_sigma, d_c)) in fwd.caches.iter_mut().zip(per_sample) {
        let d_rgb_t = [T::fr(d_c[0]), T::fr(d_c[1]), T::fr(d_c[2])];
        match cache {
            SampleCache::Human(s) => human.backward(s, T::fr(d_sigma), d_rgb_t, hg),
            SampleCache::Object(s) => object.backward(s, T::fr(d_sigma), d_rgb_t, og),
        }
    }
}
