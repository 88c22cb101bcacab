//! Renderer contracts against the ray-cast ground truth: segment placement,
//! mode identities, and full-image reproduction with analytic opaque fields.

mod common;

use common::{psnr, scene, AnalyticField, AnalyticScratch, FrameGeom};
use layercap_core::geometry::{Aabb, Ray, V3};
use layercap_core::render::{
    human_bounds, render_view, segment_rays, Entity, FrameBounds, RenderConfig, RenderMode,
    SampleField,
};
use layercap_core::synth::render::{cast, Subset};

#[test]
fn rays_missing_everything_get_no_segments() {
    let data = scene();
    let fg = FrameGeom::new(&data, 0);
    let bounds = FrameBounds::new(human_bounds(&fg.caps, 0.05), &fg.posed);
    let cfg = RenderConfig::default();
    let away = Ray::new(V3::new(0.0, 5.0, 4.0), V3::new(0.0, 1.0, 0.0));
    assert!(segment_rays(&away, &bounds.human_aabb, bounds.object, &bounds.object_aabb, &cfg).is_empty());
}

#[test]
fn object_window_brackets_the_hit_depth() {
    let data = scene();
    let fg = FrameGeom::new(&data, 0);
    let cfg = RenderConfig::default();
    let empty_human = Aabb::empty();
    let target = fg.posed.aabb().center();
    let origin = target + V3::new(0.0, 0.0, 2.0);
    let ray = Ray::new(origin, (target - origin).normalize());
    let t_true = fg.posed.first_hit(&ray).expect("ray at bbox center hits").t;
    let segs = segment_rays(&ray, &empty_human, &fg.posed, &fg.posed.aabb(), &cfg);
    assert_eq!(segs.len(), 1);
    assert_eq!(segs[0].entity, Entity::Object);
    assert!((segs[0].d_near - (t_true - 0.02)).abs() < 1e-12);
    assert!((segs[0].d_far - (t_true + 0.02)).abs() < 1e-12);
    assert_eq!(segs[0].bins, cfg.object_bins);
}

#[test]
fn object_segment_contains_the_surface_depth_on_mask_pixels() {
    let data = scene();
    let cfg = RenderConfig::default();
    let mut checked = 0;
    'outer: for frame in 0..data.frames.len() {
        let fg = FrameGeom::new(&data, frame);
        let geom = fg.geometry();
        let bounds = FrameBounds::new(human_bounds(&fg.caps, 0.05), &fg.posed);
        for (ci, cam) in data.cameras.iter().enumerate() {
            let mask = &data.frames[frame].object_masks[ci];
            for y in 0..cam.height {
                for x in 0..cam.width {
                    if !mask.get(x, y) {
                        continue;
                    }
                    let ray = cam.pixel_ray(x as f64 + 0.5, y as f64 + 0.5);
                    let t_true = match cast(&geom, &ray, Subset::ObjectOnly) {
                        Some(h) => h.t(),
                        None => continue,
                    };
                    let segs =
                        segment_rays(&ray, &bounds.human_aabb, bounds.object, &bounds.object_aabb, &cfg);
                    let seg = segs
                        .iter()
                        .find(|s| s.entity == Entity::Object)
                        .expect("mask pixel must produce an object segment");
                    assert!(
                        seg.d_near <= t_true && t_true <= seg.d_far,
                        "depth {t_true} outside [{}, {}]",
                        seg.d_near,
                        seg.d_far
                    );
                    checked += 1;
                    if checked >= 1000 {
                        break 'outer;
                    }
                }
            }
        }
    }
    assert!(checked >= 1000, "only {checked} object rays checked");
}

#[test]
fn analytic_opaque_fields_reproduce_the_ground_truth_image() {
    let data = scene();
    let fg = FrameGeom::new(&data, 0);
    let field = AnalyticField { geom: fg.geometry() };
    let bounds = FrameBounds::new(human_bounds(&fg.caps, 0.1), &fg.posed);
    let cfg = RenderConfig {
        human_bins: 128,
        object_bins: 32,
        ..RenderConfig::default()
    };
    let cam = &data.cameras[0];
    let out = render_view(&field, cam, 0, &bounds, &cfg, RenderMode::Full, None);
    let db = psnr(&out.color, &data.frames[0].images[0]);
    assert!(db > 40.0, "analytic render PSNR {db:.2} dB <= 40");
}

#[test]
fn object_only_matches_full_render_away_from_the_human() {
    let data = scene();
    let fg = FrameGeom::new(&data, 1);
    let field = AnalyticField { geom: fg.geometry() };
    let bounds = FrameBounds::new(human_bounds(&fg.caps, 0.05), &fg.posed);
    let cfg = RenderConfig::default();
    let cam = &data.cameras[3];
    let full = render_view(&field, cam, 1, &bounds, &cfg, RenderMode::Full, None);
    let obj = render_view(&field, cam, 1, &bounds, &cfg, RenderMode::ObjectOnly, None);
    let human_mask = &data.frames[1].human_masks[3];
    let mut compared = 0;
    for y in 0..cam.height {
        for x in 0..cam.width {
            if human_mask.get(x, y) {
                continue;
            }
            let a = full.color.get(x, y);
            let b = obj.color.get(x, y);
            for c in 0..3 {
                assert_eq!(a[c].to_bits(), b[c].to_bits(), "pixel ({x},{y}) channel {c}");
            }
            compared += 1;
        }
    }
    assert!(compared > 1000);
}

/// Wraps the analytic field but reports zero density for one entity.
struct Muted<'a> {
    inner: AnalyticField<'a>,
    muted: Entity,
}

impl SampleField for Muted<'_> {
    type Scratch = AnalyticScratch;

    fn eval(
        &self,
        scratch: &mut AnalyticScratch,
        entity: Entity,
        frame: usize,
        ray: &Ray,
        t: f64,
    ) -> (f64, [f64; 3]) {
        if entity == self.muted {
            (0.0, [0.5; 3])
        } else {
            self.inner.eval(scratch, entity, frame, ray, t)
        }
    }
}

#[test]
fn zero_density_object_layer_renders_exactly_like_human_only() {
    let data = scene();
    let fg = FrameGeom::new(&data, 2);
    let field = Muted {
        inner: AnalyticField { geom: fg.geometry() },
        muted: Entity::Object,
    };
    let bounds = FrameBounds::new(human_bounds(&fg.caps, 0.05), &fg.posed);
    let cfg = RenderConfig::default();
    let cam = &data.cameras[7];
    let full = render_view(&field, cam, 2, &bounds, &cfg, RenderMode::Full, None);
    let huma = render_view(&field, cam, 2, &bounds, &cfg, RenderMode::HumanOnly, None);
    for y in 0..cam.height {
        for x in 0..cam.width {
            let a = full.color.get(x, y);
            let b = huma.color.get(x, y);
            for c in 0..3 {
                assert_eq!(a[c].to_bits(), b[c].to_bits(), "pixel ({x},{y}) channel {c}");
            }
            assert_eq!(
                full.alpha.get(x, y).to_bits(),
                huma.alpha.get(x, y).to_bits()
            );
            assert_eq!(full.label_object.get(x, y), 0.0);
        }
    }
}

#[test]
fn jittered_rendering_is_reproducible() {
    let data = scene();
    let fg = FrameGeom::new(&data, 0);
    let field = AnalyticField { geom: fg.geometry() };
    let bounds = FrameBounds::new(human_bounds(&fg.caps, 0.05), &fg.posed);
    let cfg = RenderConfig::default();
    let cam = &data.cameras[5];
    let a = render_view(&field, cam, 0, &bounds, &cfg, RenderMode::Full, Some(42));
    let b = render_view(&field, cam, 0, &bounds, &cfg, RenderMode::Full, Some(42));
    for y in 0..cam.height {
        for x in 0..cam.width {
            let pa = a.color.get(x, y);
            let pb = b.color.get(x, y);
            for c in 0..3 {
                assert_eq!(pa[c].to_bits(), pb[c].to_bits());
            }
        }
    }
}
