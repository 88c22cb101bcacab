//! Shared integration-test fixtures: posed frame geometry, an exact opaque
//! field built from the ray-cast ground truth, and gradient-check helpers.

#![allow(dead_code)]

use layercap_core::field::FieldConfig;
use layercap_core::geometry::{Ray, TriMesh, V3};
use layercap_core::render::{Entity, SampleField};
use layercap_core::synth::body::{capsules, fk, Capsule};
use layercap_core::synth::render::{cast, shade_hit, SceneGeometry, Subset};
use layercap_core::synth::{default_spec, generate_scene, SceneData};
use rand::Rng;

pub fn scene() -> SceneData {
    generate_scene(&default_spec()).unwrap()
}

/// Small architecture so finite differencing stays cheap.
pub fn small_cfg() -> FieldConfig {
    FieldConfig {
        pos_levels: 3,
        dir_levels: 2,
        density_hidden: vec![16, 16],
        color_hidden: vec![12],
        deform_hidden: vec![10],
        feat_dim: 6,
        latent_dim: 4,
        deform_scale: 0.1,
    }
}

pub fn jitter(params: &mut [f64], rng: &mut impl Rng, scale: f64) {
    for p in params.iter_mut() {
        *p += rng.gen_range(-scale..scale);
    }
}

pub fn encoded_dir<T: layercap_core::field::Real>(
    enc: &layercap_core::field::PosEncoding,
    dir: &V3,
) -> Vec<T> {
    let d = [T::fr(dir.x), T::fr(dir.y), T::fr(dir.z)];
    let mut out = Vec::new();
    enc.encode(&d, &mut out);
    out
}

/// Vector-norm comparison of a numeric gradient against the analytic one.
pub fn assert_close_to_fd(num: &[f64], analytic: &[f64]) {
    let diff: f64 = num
        .iter()
        .zip(analytic)
        .map(|(n, a)| (n - a) * (n - a))
        .sum::<f64>()
        .sqrt();
    let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    assert!(
        diff <= 1e-4 * scale.max(1e-8),
        "gradient mismatch: |num-ana| = {diff:.3e}, |ana| = {scale:.3e}"
    );
    assert!(scale > 1e-10, "degenerate check: analytic gradient all zero");
}

/// Posed per-frame geometry, owned so a [`SceneGeometry`] view can be built.
pub struct FrameGeom {
    pub caps: Vec<Capsule>,
    pub bone_colors: Vec<[f64; 3]>,
    pub posed: TriMesh,
    pub light: V3,
}

impl FrameGeom {
    pub fn new(data: &SceneData, frame: usize) -> Self {
        let f = fk(&data.proxy, &data.frames[frame].body);
        FrameGeom {
            caps: capsules(&data.proxy, &f),
            bone_colors: data.proxy.joints.iter().map(|j| j.color).collect(),
            posed: data.template.transformed(&data.frames[frame].object_pose),
            light: data.spec.light,
        }
    }

    pub fn geometry(&self) -> SceneGeometry<'_> {
        SceneGeometry {
            capsules: &self.caps,
            bone_colors: &self.bone_colors,
            object: &self.posed,
            object_aabb: self.posed.aabb(),
            light: self.light,
        }
    }
}

/// Opaque analytic field: density steps to a huge value at the entity's first
/// surface along the ray, colored with the exact ground-truth shade.
pub struct AnalyticField<'a> {
    pub geom: SceneGeometry<'a>,
}

#[derive(Default)]
pub struct AnalyticScratch {
    key: Option<[u64; 6]>,
    human: Option<(f64, [f64; 3])>,
    object: Option<(f64, [f64; 3])>,
}

impl AnalyticScratch {
    fn refresh(&mut self, geom: &SceneGeometry, ray: &Ray) {
        let key = [
            ray.origin.x.to_bits(),
            ray.origin.y.to_bits(),
            ray.origin.z.to_bits(),
            ray.dir.x.to_bits(),
            ray.dir.y.to_bits(),
            ray.dir.z.to_bits(),
        ];
        if self.key == Some(key) {
            return;
        }
        self.key = Some(key);
        self.human = cast(geom, ray, Subset::HumanOnly).map(|h| (h.t(), shade_hit(geom, ray, &h)));
        self.object = cast(geom, ray, Subset::ObjectOnly).map(|h| (h.t(), shade_hit(geom, ray, &h)));
    }
}

impl SampleField for AnalyticField<'_> {
    type Scratch = AnalyticScratch;

    fn eval(
        &self,
        scratch: &mut AnalyticScratch,
        entity: Entity,
        _frame: usize,
        ray: &Ray,
        t: f64,
    ) -> (f64, [f64; 3]) {
        scratch.refresh(&self.geom, ray);
        let hit = match entity {
            Entity::Human => scratch.human,
            Entity::Object => scratch.object,
        };
        match hit {
            Some((t_hit, color)) if t >= t_hit - 1e-12 => (1e6, color),
            _ => (0.0, [0.0; 3]),
        }
    }
}

pub fn psnr(a: &layercap_core::image::ImageRgb, b: &layercap_core::image::ImageRgb) -> f64 {
    let mut se = 0.0;
    for y in 0..a.height {
        for x in 0..a.width {
            let pa = a.get(x, y);
            let pb = b.get(x, y);
            for c in 0..3 {
                se += (pa[c] - pb[c]) * (pa[c] - pb[c]);
            }
        }
    }
    let mse = se / (a.width * a.height * 3) as f64;
    if mse == 0.0 {
        return f64::INFINITY;
    }
    -10.0 * mse.log10()
}
