//! Ray segmentation and depth sampling: a wide stratified segment through the
//! human bounds and a narrow window around the first object surface hit,
//! merged into one depth-sorted list.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Entity, RenderConfig};
use crate::geometry::{Aabb, Ray, TriMesh, V3};
use crate::synth::body::Capsule;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaySegment {
    pub entity: Entity,
    pub d_near: f64,
    pub d_far: f64,
    pub bins: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergedSample {
    pub depth: f64,
    pub entity: Entity,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RaySampleSet {
    pub samples: Vec<MergedSample>,
}

/// Tight bounds of the posed capsules; callers usually dilate by a margin so
/// grazing hits stay strictly inside the sampled interval.
pub fn capsules_aabb(capsules: &[Capsule]) -> Aabb {
    let mut bb = Aabb::empty();
    for c in capsules {
        for p in [c.a, c.b] {
            bb.expand_point(&(p - V3::new(c.radius, c.radius, c.radius)));
            bb.expand_point(&(p + V3::new(c.radius, c.radius, c.radius)));
        }
    }
    bb
}

pub fn segment_rays(
    ray: &Ray,
    human_bounds: &Aabb,
    object: &TriMesh,
    object_bounds: &Aabb,
    cfg: &RenderConfig,
) -> Vec<RaySegment> {
    let mut segs = Vec::with_capacity(2);
    if !human_bounds.is_empty() {
        if let Some((t0, t1)) = human_bounds.ray_intersect(ray) {
            let d_near = t0.max(0.0);
            if t1 > d_near {
                segs.push(RaySegment {
                    entity: Entity::Human,
                    d_near,
                    d_far: t1,
                    bins: cfg.human_bins,
                });
            }
        }
    }
    if object_bounds.ray_intersect(ray).is_some() {
        if let Some(hit) = object.first_hit(ray) {
            segs.push(RaySegment {
                entity: Entity::Object,
                d_near: (hit.t - cfg.object_halfwidth).max(0.0),
                d_far: hit.t + cfg.object_halfwidth,
                bins: cfg.object_bins,
            });
        }
    }
    segs
}

/// One depth per bin; `rng: None` lands on bin midpoints for deterministic
/// rendering, otherwise uniform within each bin.
pub fn stratified_sample(seg: &RaySegment, rng: Option<&mut ChaCha8Rng>) -> Vec<f64> {
    let n = seg.bins;
    let span = seg.d_far - seg.d_near;
    let mut out = Vec::with_capacity(n);
    match rng {
        None => {
            for j in 0..n {
                out.push(seg.d_near + span * (j as f64 + 0.5) / n as f64);
            }
        }
        Some(rng) => {
            for j in 0..n {
                let u: f64 = rng.gen();
                out.push(seg.d_near + span * (j as f64 + u) / n as f64);
            }
        }
    }
    out
}

/// Merges per-segment sorted depth lists into one globally sorted list,
/// breaking exact depth ties human-first, and recomputes spacings; the last
/// sample gets the fixed far cap.
pub fn merge_samples(lists: &[(Entity, Vec<f64>)], far_delta: f64) -> RaySampleSet {
    let total: usize = lists.iter().map(|(_, v)| v.len()).sum();
    let mut samples: Vec<MergedSample> = Vec::with_capacity(total);
    let mut idx = vec![0usize; lists.len()];
    for _ in 0..total {
        let mut pick = usize::MAX;
        let mut pick_depth = f64::INFINITY;
        let mut pick_rank = u8::MAX;
        for (li, (entity, depths)) in lists.iter().enumerate() {
            if idx[li] >= depths.len() {
                continue;
            }
            let d = depths[idx[li]];
            let rank = *entity as u8;
            if d < pick_depth || (d == pick_depth && rank < pick_rank) {
                pick = li;
                pick_depth = d;
                pick_rank = rank;
            }
        }
        samples.push(MergedSample {
            depth: pick_depth,
            entity: lists[pick].0,
            delta: 0.0,
        });
        idx[pick] += 1;
    }
    for i in 0..samples.len() {
        samples[i].delta = if i + 1 < samples.len() {
            samples[i + 1].depth - samples[i].depth
        } else {
            far_delta
        };
    }
    RaySampleSet { samples }
}
