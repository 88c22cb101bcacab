//! Layered volume rendering: per-entity ray segments, stratified depths,
//! depth-sorted merging, and emission-absorption compositing of color and
//! per-layer labels.

pub mod composite;
pub mod sampling;

pub use composite::{
    composite_backward, composite_color, composite_full, composite_label, composite_weights,
    CompositeSample,
};
pub use sampling::{
    capsules_aabb, merge_samples, segment_rays, stratified_sample, MergedSample, RaySampleSet,
    RaySegment,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::field::{
    HumanField, HumanFrameCtx, HumanSample, ObjectField, ObjectFrameCtx, ObjectSample, Real,
};
use crate::geometry::{Aabb, Camera, Ray, TriMesh};
use crate::image::{ImageGray, ImageRgb};
use crate::rng::{stream2, Stage};

/// Layer identity; the discriminant doubles as the depth-tie rank and the
/// label-vector index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Entity {
    Human = 0,
    Object = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RenderMode {
    Full,
    HumanOnly,
    ObjectOnly,
    Labels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub human_bins: usize,
    pub object_bins: usize,
    /// Half-width of the sampling window around the first object hit.
    pub object_halfwidth: f64,
    /// Spacing assigned to the last merged sample.
    pub far_delta: f64,
    /// Dilation applied to posed capsule bounds before segmenting rays.
    pub human_margin: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            human_bins: 32,
            object_bins: 8,
            object_halfwidth: 0.02,
            far_delta: 0.01,
            human_margin: 0.05,
        }
    }
}

/// Per-frame geometry the sampler needs: human bounds (callers dilate them so
/// grazing surfaces stay interior) and the posed object template.
pub struct FrameBounds<'a> {
    pub human_aabb: Aabb,
    pub object: &'a TriMesh,
    pub object_aabb: Aabb,
}

impl<'a> FrameBounds<'a> {
    pub fn new(human_aabb: Aabb, object: &'a TriMesh) -> Self {
        let mut bb = Aabb::empty();
        for v in &object.vertices {
            bb.expand_point(v);
        }
        FrameBounds {
            human_aabb,
            object,
            object_aabb: bb,
        }
    }
}

/// A queryable pair of layer fields. `Scratch` carries whatever per-worker
/// state evaluation reuses, so rendering stays pure and parallel.
pub trait SampleField: Sync {
    type Scratch: Default + Send;
    /// (sigma, rgb) of `entity`'s layer at depth `t` along `ray`.
    fn eval(
        &self,
        scratch: &mut Self::Scratch,
        entity: Entity,
        frame: usize,
        ray: &Ray,
        t: f64,
    ) -> (f64, [f64; 3]);
}

pub struct NeuralSampleField<'a, T: Real> {
    pub human: &'a HumanField<T>,
    pub object: &'a ObjectField<T>,
    pub human_ctxs: &'a [HumanFrameCtx<T>],
    pub object_ctxs: &'a [ObjectFrameCtx],
}

impl<'a, T: Real> NeuralSampleField<'a, T> {
    pub fn new(
        human: &'a HumanField<T>,
        object: &'a ObjectField<T>,
        human_ctxs: &'a [HumanFrameCtx<T>],
        object_ctxs: &'a [ObjectFrameCtx],
    ) -> Self {
        assert_eq!(human.dir_enc.levels, object.dir_enc.levels);
        NeuralSampleField {
            human,
            object,
            human_ctxs,
            object_ctxs,
        }
    }
}

pub struct NeuralScratch<T: Real> {
    human: HumanSample<T>,
    object: ObjectSample<T>,
    dir_key: Option<[u64; 3]>,
    dir_enc: Vec<T>,
}

impl<T: Real> Default for NeuralScratch<T> {
    fn default() -> Self {
        NeuralScratch {
            human: HumanSample::default(),
            object: ObjectSample::default(),
            dir_key: None,
            dir_enc: Vec::new(),
        }
    }
}

impl<'a, T: Real> SampleField for NeuralSampleField<'a, T> {
    type Scratch = NeuralScratch<T>;

    fn eval(
        &self,
        scratch: &mut Self::Scratch,
        entity: Entity,
        frame: usize,
        ray: &Ray,
        t: f64,
    ) -> (f64, [f64; 3]) {
        let key = [
            ray.dir.x.to_bits(),
            ray.dir.y.to_bits(),
            ray.dir.z.to_bits(),
        ];
        if scratch.dir_key != Some(key) {
            let d = [T::fr(ray.dir.x), T::fr(ray.dir.y), T::fr(ray.dir.z)];
            self.human.dir_enc.encode(&d, &mut scratch.dir_enc);
            scratch.dir_key = Some(key);
        }
        let x = ray.at(t);
        let (sigma, rgb) = match entity {
            Entity::Human => self.human.eval(
                &self.human_ctxs[frame],
                frame,
                &x,
                &scratch.dir_enc,
                &mut scratch.human,
            ),
            Entity::Object => self.object.eval(
                &self.object_ctxs[frame],
                frame,
                &x,
                &scratch.dir_enc,
                &mut scratch.object,
            ),
        };
        (sigma.f64(), [rgb[0].f64(), rgb[1].f64(), rgb[2].f64()])
    }
}

pub struct LayeredRender {
    pub color: ImageRgb,
    pub alpha: ImageGray,
    pub label_human: ImageGray,
    pub label_object: ImageGray,
}

/// Evaluates one ray end to end; shared by image rendering and tests.
pub fn render_ray<F: SampleField>(
    field: &F,
    scratch: &mut F::Scratch,
    ray: &Ray,
    frame: usize,
    bounds: &FrameBounds,
    cfg: &RenderConfig,
    mode: RenderMode,
    rng: Option<&mut rand_chacha::ChaCha8Rng>,
) -> ([f64; 3], f64, [f64; 2]) {
    let segments = segment_rays(ray, &bounds.human_aabb, bounds.object, &bounds.object_aabb, cfg);
    let mut lists: Vec<(Entity, Vec<f64>)> = Vec::with_capacity(segments.len());
    let mut rng = rng;
    for seg in &segments {
        let keep = match mode {
            RenderMode::Full | RenderMode::Labels => true,
            RenderMode::HumanOnly => seg.entity == Entity::Human,
            RenderMode::ObjectOnly => seg.entity == Entity::Object,
        };
        if !keep {
            continue;
        }
        let depths = stratified_sample(seg, rng.as_deref_mut());
        lists.push((seg.entity, depths));
    }
    if lists.is_empty() {
        return ([0.0; 3], 0.0, [0.0; 2]);
    }
    let merged = merge_samples(&lists, cfg.far_delta);
    let samples: Vec<CompositeSample> = merged
        .samples
        .iter()
        .map(|m| {
            let (sigma, rgb) = field.eval(scratch, m.entity, frame, ray, m.depth);
            CompositeSample {
                sigma,
                delta: m.delta,
                entity: m.entity,
                rgb,
            }
        })
        .collect();
    composite_full(&samples)
}

/// Renders a full view. `jitter: None` uses deterministic bin midpoints;
/// `Some(seed)` draws per-pixel counter-based streams, so the result is
/// identical for any worker count either way.
#[allow(clippy::too_many_arguments)]
pub fn render_view<F: SampleField>(
    field: &F,
    cam: &Camera,
    frame: usize,
    bounds: &FrameBounds,
    cfg: &RenderConfig,
    mode: RenderMode,
    jitter: Option<u64>,
) -> LayeredRender {
    let (w, h) = (cam.width, cam.height);
    let rows: Vec<Vec<([f64; 3], f64, [f64; 2])>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut scratch = F::Scratch::default();
            let mut row = Vec::with_capacity(w);
            for x in 0..w {
                let ray = cam.pixel_ray(x as f64 + 0.5, y as f64 + 0.5);
                let mut rng = jitter.map(|seed| {
                    stream2(seed, Stage::Render, frame as u64, (y * w + x) as u64)
                });
                row.push(render_ray(
                    field,
                    &mut scratch,
                    &ray,
                    frame,
                    bounds,
                    cfg,
                    mode,
                    rng.as_mut(),
                ));
            }
            row
        })
        .collect();
    let mut out = LayeredRender {
        color: ImageRgb::new(w, h),
        alpha: ImageGray::new(w, h),
        label_human: ImageGray::new(w, h),
        label_object: ImageGray::new(w, h),
    };
    for (y, row) in rows.into_iter().enumerate() {
        for (x, (rgb, alpha, label)) in row.into_iter().enumerate() {
            out.color.set(x, y, rgb);
            out.alpha.set(x, y, alpha);
            out.label_human.set(x, y, label[0]);
            out.label_object.set(x, y, label[1]);
        }
    }
    out
}

/// Human bounds for a posed body: capsule bounds dilated by a safety margin
/// so first hits never sit on the sampled interval's boundary.
pub fn human_bounds(capsules: &[crate::synth::body::Capsule], margin: f64) -> Aabb {
    capsules_aabb(capsules).dilated(margin)
}
