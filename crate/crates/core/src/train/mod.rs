//! Training loop for the layered fields: epoch-shuffled ray batches over all
//! views and frames, photometric + template + contact + semantic objectives,
//! moment-based updates, and byte-exact checkpointing.
//!
//! Single-worker runs are a pure function of (scene, poses, config, seed).
//! All randomness is counter-based, so a checkpoint needs only the seed and
//! step index to resume bit-for-bit; multi-worker runs split each batch into
//! fixed chunks merged in order and agree with single-worker losses to 1e-5
//! relative.

mod adam;

pub use adam::{adam_step, AdamState};

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{
    FieldConfig, HumanField, HumanFrameCtx, HumanGrads, LayeredField, ObjectField, ObjectFrameCtx,
    ObjectGrads,
};
use crate::field::checkpoint::{Checkpoint, TensorEntry};
use crate::geometry::{Aabb, InsideTester, RigidPose, TriMesh};
use crate::losses::{
    backward_ray, forward_ray, generate_pseudo_segmentation, load_pseudo_seg, loss_human_contact,
    loss_object_template, loss_photometric, loss_semantic, sample_points, save_pseudo_seg,
    LossBreakdown, LossWeights, PseudoSegMap, RayForward, OBJECT_LABEL,
};
use crate::render::{
    human_bounds, merge_samples, render_view, segment_rays, stratified_sample, Entity,
    FrameBounds, LayeredRender, NeuralSampleField, RaySegment, RenderConfig, RenderMode,
};
use crate::rng::{stream, stream2, Stage};
use crate::synth::body::{capsules, fk};
use crate::synth::SceneData;
use crate::tracking::{BodyParams, OptimizeResult};

const SUB_INIT_HUMAN: u64 = 0;
const SUB_INIT_OBJECT: u64 = 1;
const SUB_SHUFFLE: u64 = 2;
const SUB_TEMPLATE: u64 = 3;
const SUB_RAY_BASE: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr0: f64,
    /// Per-step multiplicative decay; the default halves the rate every
    /// 2000 steps.
    pub decay: f64,
    pub total_steps: u64,
    pub batch_rays: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Fraction of total steps trained before pseudo-segmentation maps are
    /// generated and the semantic loss turns on.
    pub pseudo_fraction: f64,
    /// Ray-batch chunks evaluated in parallel; 1 is bit-deterministic.
    pub workers: usize,
    /// Camera excluded from the training pool, kept for evaluation.
    pub holdout_view: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 5e-4,
            decay: 0.5f64.powf(1.0 / 2000.0),
            total_steps: 20_000,
            batch_rays: 1024,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            pseudo_fraction: 0.6,
            workers: 1,
            holdout_view: None,
        }
    }
}

impl TrainConfig {
    /// Learning rate at step `n`: exactly lr0 * decay^n.
    pub fn lr(&self, n: u64) -> f64 {
        self.lr0 * self.decay.powi(n as i32)
    }

    pub fn pseudo_step(&self) -> u64 {
        (self.pseudo_fraction * self.total_steps as f64).floor() as u64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0) || !self.lr0.is_finite() {
            return Err(Error::Config(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::Config(format!(
                "decay must lie in (0, 1], got {}",
                self.decay
            )));
        }
        if self.batch_rays == 0 {
            return Err(Error::Config("batch_rays must be at least 1".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        if !(0.0..=1.0).contains(&self.pseudo_fraction) {
            return Err(Error::Config(format!(
                "pseudo_fraction must lie in [0, 1], got {}",
                self.pseudo_fraction
            )));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-frame pose estimates the fields are trained against.
#[derive(Debug, Clone)]
pub struct TrackedPoses {
    pub bodies: Vec<BodyParams>,
    pub objects: Vec<RigidPose>,
}

impl TrackedPoses {
    pub fn from_optimized(results: &[OptimizeResult]) -> Self {
        TrackedPoses {
            bodies: results.iter().map(|r| r.body.clone()).collect(),
            objects: results.iter().map(|r| r.object.clone()).collect(),
        }
    }

    pub fn ground_truth(data: &SceneData) -> Self {
        TrackedPoses {
            bodies: data.frames.iter().map(|f| f.body.clone()).collect(),
            objects: data.frames.iter().map(|f| f.object_pose.clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub lr: f64,
    pub losses: LossBreakdown,
    pub total: f64,
}

/// Loss log columns: step, lr, the four unweighted terms, weighted total.
pub fn write_log(records: &[StepRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "lr", "L_c", "L_o", "L_h", "L_s", "total"])?;
    for r in records {
        w.write_record([
            r.step.to_string(),
            r.lr.to_string(),
            r.losses.l_c.to_string(),
            r.losses.l_o.to_string(),
            r.losses.l_h.to_string(),
            r.losses.l_s.to_string(),
            r.total.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Epoch-shuffled pixel pool: every epoch is an independent Fisher-Yates
/// permutation of the same base ordering, so any position is reconstructible
/// from the consumed-ray count alone.
struct PixelPool {
    seed: u64,
    base: Vec<u32>,
    order: Vec<u32>,
    epoch: u64,
    pos: usize,
}

impl PixelPool {
    fn new(seed: u64, base: Vec<u32>) -> Self {
        assert!(!base.is_empty(), "empty pixel pool");
        let mut p = PixelPool {
            seed,
            order: base.clone(),
            base,
            epoch: 0,
            pos: 0,
        };
        p.shuffle_epoch(0);
        p
    }

    fn shuffle_epoch(&mut self, epoch: u64) {
        use rand::Rng;
        self.order.copy_from_slice(&self.base);
        let mut rng = stream2(self.seed, Stage::Train, SUB_SHUFFLE, epoch);
        for i in (1..self.order.len()).rev() {
            let j = rng.gen_range(0..=i);
            self.order.swap(i, j);
        }
        self.epoch = epoch;
        self.pos = 0;
    }

    fn next(&mut self) -> u32 {
        if self.pos == self.order.len() {
            self.shuffle_epoch(self.epoch + 1);
        }
        let v = self.order[self.pos];
        self.pos += 1;
        v
    }

    fn seek(&mut self, consumed: u64) {
        let len = self.order.len() as u64;
        self.shuffle_epoch(consumed / len);
        self.pos = (consumed % len) as usize;
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct SegPair {
    human: Option<(f64, f64)>,
    object: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
struct Moments {
    h_density: AdamState<f32>,
    h_color: AdamState<f32>,
    h_deform: AdamState<f32>,
    h_latents: AdamState<f32>,
    o_density: AdamState<f32>,
    o_color: AdamState<f32>,
    o_latents: AdamState<f32>,
}

impl Moments {
    fn zeros(field: &LayeredField<f32>) -> Self {
        Moments {
            h_density: AdamState::zeros(field.human.density.params.len()),
            h_color: AdamState::zeros(field.human.color.params.len()),
            h_deform: AdamState::zeros(field.human.deform.params.len()),
            h_latents: AdamState::zeros(field.human.latents.len()),
            o_density: AdamState::zeros(field.object.density.params.len()),
            o_color: AdamState::zeros(field.object.color.params.len()),
            o_latents: AdamState::zeros(field.object.latents.len()),
        }
    }
}

#[derive(Serialize)]
struct ConfigIdentity<'a> {
    field: &'a FieldConfig,
    render: &'a RenderConfig,
    weights: &'a LossWeights,
    train: &'a TrainConfig,
    num_frames: usize,
    num_cams: usize,
    width: usize,
    height: usize,
    num_joints: usize,
}

pub struct Trainer<'a> {
    pub data: &'a SceneData,
    pub poses: TrackedPoses,
    pub field_cfg: FieldConfig,
    pub render_cfg: RenderConfig,
    pub weights: LossWeights,
    pub cfg: TrainConfig,
    pub field: LayeredField<f32>,
    pub log: Vec<StepRecord>,
    moments: Moments,
    hctxs: Vec<HumanFrameCtx<f32>>,
    octxs: Vec<ObjectFrameCtx>,
    posed_templates: Vec<TriMesh>,
    posed_aabbs: Vec<Aabb>,
    human_aabbs: Vec<Aabb>,
    template_aabb: Aabb,
    canon_tester: InsideTester,
    posed_testers: Vec<InsideTester>,
    seg_cache: Vec<SegPair>,
    pool: PixelPool,
    pseudo: Option<Vec<PseudoSegMap>>,
    pseudo_dir: Option<PathBuf>,
    step: u64,
    initial_total: Option<f64>,
    divergence_streak: u32,
}

impl<'a> Trainer<'a> {
    pub fn new(
        data: &'a SceneData,
        poses: &TrackedPoses,
        field_cfg: FieldConfig,
        render_cfg: RenderConfig,
        weights: LossWeights,
        cfg: TrainConfig,
        pseudo_dir: Option<&Path>,
    ) -> Result<Self> {
        cfg.validate()?;
        weights.validate()?;
        let frames = data.frames.len();
        let cams = data.cameras.len();
        if poses.bodies.len() != frames || poses.objects.len() != frames {
            return Err(Error::Config(format!(
                "tracked poses cover {} body / {} object frames but the scene has {frames}",
                poses.bodies.len(),
                poses.objects.len()
            )));
        }
        if let Some(h) = cfg.holdout_view {
            if h >= cams {
                return Err(Error::Config(format!(
                    "holdout view {h} out of range for {cams} cameras"
                )));
            }
            if cams == 1 {
                return Err(Error::Config("cannot hold out the only camera".into()));
            }
        }

        let mut rng_h = stream(cfg.seed, Stage::Train, SUB_INIT_HUMAN);
        let mut rng_o = stream(cfg.seed, Stage::Train, SUB_INIT_OBJECT);
        let field = LayeredField {
            human: HumanField::new(&field_cfg, data.proxy.clone(), frames, &mut rng_h),
            object: ObjectField::new(&field_cfg, frames, &mut rng_o),
        };
        let moments = Moments::zeros(&field);

        let hctxs: Vec<HumanFrameCtx<f32>> =
            poses.bodies.iter().map(|b| field.human.frame_ctx(b)).collect();
        let octxs: Vec<ObjectFrameCtx> = poses.objects.iter().map(ObjectFrameCtx::new).collect();
        let posed_templates: Vec<TriMesh> = poses
            .objects
            .iter()
            .map(|p| data.template.transformed(p))
            .collect();
        let posed_aabbs: Vec<Aabb> = posed_templates.iter().map(|m| m.aabb()).collect();
        let human_aabbs: Vec<Aabb> = poses
            .bodies
            .iter()
            .map(|b| {
                let caps = capsules(&data.proxy, &fk(&data.proxy, b));
                human_bounds(&caps, render_cfg.human_margin)
            })
            .collect();
        let canon_tester = InsideTester::new(&data.template)?;
        let posed_testers: Vec<InsideTester> = posed_templates
            .iter()
            .map(InsideTester::new)
            .collect::<Result<_>>()?;

        let (w, h) = (data.cameras[0].width, data.cameras[0].height);
        let px_per = w * h;
        assert!(
            frames * cams * px_per <= u32::MAX as usize,
            "pixel pool exceeds the u32 index space"
        );
        let seg_cache: Vec<SegPair> = (0..frames * cams)
            .into_par_iter()
            .map(|fc| {
                let (f, c) = (fc / cams, fc % cams);
                let cam = &data.cameras[c];
                let mut block = Vec::with_capacity(px_per);
                for y in 0..h {
                    for x in 0..w {
                        let ray = cam.pixel_ray(x as f64 + 0.5, y as f64 + 0.5);
                        let mut pair = SegPair::default();
                        for s in segment_rays(
                            &ray,
                            &human_aabbs[f],
                            &posed_templates[f],
                            &posed_aabbs[f],
                            &render_cfg,
                        ) {
                            match s.entity {
                                Entity::Human => pair.human = Some((s.d_near, s.d_far)),
                                Entity::Object => pair.object = Some((s.d_near, s.d_far)),
                            }
                        }
                        block.push(pair);
                    }
                }
                block
            })
            .flatten()
            .collect();

        let mut base = Vec::with_capacity(frames * cams * px_per);
        for f in 0..frames {
            for c in 0..cams {
                if cfg.holdout_view == Some(c) {
                    continue;
                }
                let start = (f * cams + c) * px_per;
                base.extend(start as u32..(start + px_per) as u32);
            }
        }
        let pool = PixelPool::new(cfg.seed, base);

        Ok(Trainer {
            data,
            poses: poses.clone(),
            template_aabb: data.template.aabb(),
            field_cfg,
            render_cfg,
            weights,
            cfg,
            field,
            log: Vec::new(),
            moments,
            hctxs,
            octxs,
            posed_templates,
            posed_aabbs,
            human_aabbs,
            canon_tester,
            posed_testers,
            seg_cache,
            pool,
            pseudo: None,
            pseudo_dir: pseudo_dir.map(Path::to_path_buf),
            step: 0,
            initial_total: None,
            divergence_streak: 0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn config_hash(&self) -> u64 {
        let id = ConfigIdentity {
            field: &self.field_cfg,
            render: &self.render_cfg,
            weights: &self.weights,
            train: &self.cfg,
            num_frames: self.data.frames.len(),
            num_cams: self.data.cameras.len(),
            width: self.data.cameras[0].width,
            height: self.data.cameras[0].height,
            num_joints: self.data.proxy.joints.len(),
        };
        fnv1a64(&serde_json::to_vec(&id).expect("config serializes"))
    }

    fn num_cams(&self) -> usize {
        self.data.cameras.len()
    }

    fn px_per(&self) -> usize {
        self.data.cameras[0].width * self.data.cameras[0].height
    }

    fn decode(&self, idx: u32) -> (usize, usize, usize) {
        let px_per = self.px_per();
        let cams = self.num_cams();
        let idx = idx as usize;
        let frame = idx / (cams * px_per);
        let rem = idx % (cams * px_per);
        (frame, rem / px_per, rem % px_per)
    }

    fn frame_bounds(&self, frame: usize) -> FrameBounds<'_> {
        FrameBounds {
            human_aabb: self.human_aabbs[frame],
            object: &self.posed_templates[frame],
            object_aabb: self.posed_aabbs[frame],
        }
    }

    /// Renders a view from the current parameters.
    pub fn render(
        &self,
        cam: usize,
        frame: usize,
        mode: RenderMode,
        jitter: Option<u64>,
    ) -> LayeredRender {
        let nsf = NeuralSampleField::new(
            &self.field.human,
            &self.field.object,
            &self.hctxs,
            &self.octxs,
        );
        render_view(
            &nsf,
            &self.data.cameras[cam],
            frame,
            &self.frame_bounds(frame),
            &self.render_cfg,
            mode,
            jitter,
        )
    }

    fn pseudo_paths(dir: &Path, frame: usize, cam: usize) -> (PathBuf, PathBuf) {
        (
            dir.join(format!("pseudo_f{frame:03}_c{cam:02}.pgm")),
            dir.join(format!("pseudo_f{frame:03}_c{cam:02}.csv")),
        )
    }

    fn generate_pseudo_maps(&mut self) -> Result<()> {
        let (frames, cams) = (self.data.frames.len(), self.num_cams());
        let maps = {
            let nsf = NeuralSampleField::new(
                &self.field.human,
                &self.field.object,
                &self.hctxs,
                &self.octxs,
            );
            let mut maps = Vec::with_capacity(frames * cams);
            for f in 0..frames {
                let bounds = self.frame_bounds(f);
                let ft = &self.data.frames[f];
                for c in 0..cams {
                    maps.push(generate_pseudo_segmentation(
                        &nsf,
                        &self.data.cameras[c],
                        f,
                        &bounds,
                        &self.render_cfg,
                        &ft.images[c],
                        &ft.union_masks[c],
                        self.weights.tau_s,
                    ));
                }
            }
            maps
        };
        if let Some(dir) = &self.pseudo_dir {
            std::fs::create_dir_all(dir)?;
            for f in 0..frames {
                for c in 0..cams {
                    let (pgm, csv_path) = Self::pseudo_paths(dir, f, c);
                    save_pseudo_seg(&maps[f * cams + c], &pgm, &csv_path)?;
                }
            }
        }
        let labeled: usize = maps.iter().map(|m| m.labeled.count()).sum();
        log::info!(
            "pseudo-segmentation phase entered at step {}: {labeled} labeled pixels",
            self.step
        );
        self.pseudo = Some(maps);
        Ok(())
    }

    fn load_pseudo_maps(&mut self) -> Result<()> {
        let dir = self.pseudo_dir.as_ref().ok_or_else(|| {
            Error::Training(
                "resuming past the pseudo-segmentation transition requires persisted maps, \
                 but no map directory was configured"
                    .into(),
            )
        })?;
        let (frames, cams) = (self.data.frames.len(), self.num_cams());
        let mut maps = Vec::with_capacity(frames * cams);
        for f in 0..frames {
            for c in 0..cams {
                let (pgm, csv_path) = Self::pseudo_paths(dir, f, c);
                maps.push(load_pseudo_seg(&pgm, &csv_path)?);
            }
        }
        self.pseudo = Some(maps);
        Ok(())
    }

    fn maybe_enter_pseudo_phase(&mut self) -> Result<()> {
        if self.pseudo.is_some() {
            return Ok(());
        }
        let at = self.cfg.pseudo_step();
        if at >= self.cfg.total_steps || self.step < at {
            return Ok(());
        }
        if self.step > at {
            // Resumed past the transition: the maps must come from disk, as
            // regenerating from later parameters would change supervision.
            return self.load_pseudo_maps();
        }
        self.generate_pseudo_maps()
    }

    fn eval_chunk(
        &self,
        n: u64,
        idxs: &[u32],
        k0: u64,
    ) -> (f64, f64, HumanGrads<f32>, ObjectGrads<f32>) {
        let mut fwd = RayForward::default();
        let mut dir_buf: Vec<f32> = Vec::new();
        let mut hg = HumanGrads::zeros(&self.field.human);
        let mut og = ObjectGrads::zeros(&self.field.object);
        let (mut l_c, mut l_s) = (0.0, 0.0);
        let w = self.data.cameras[0].width;
        for (i, &idx) in idxs.iter().enumerate() {
            let (frame, cam_i, px) = self.decode(idx);
            let (x, y) = (px % w, px / w);
            let obs = self.data.frames[frame].images[cam_i].get(x, y);
            let seg = &self.seg_cache[idx as usize];
            if seg.human.is_none() && seg.object.is_none() {
                // Nothing renderable along this ray: the residual against the
                // captured pixel is constant with zero gradient.
                l_c += obs.iter().map(|c| c * c).sum::<f64>();
                continue;
            }
            let cam = &self.data.cameras[cam_i];
            let ray = cam.pixel_ray(x as f64 + 0.5, y as f64 + 0.5);
            let mut rng = stream2(self.cfg.seed, Stage::Train, SUB_RAY_BASE + n, k0 + i as u64);
            let mut lists: Vec<(Entity, Vec<f64>)> = Vec::with_capacity(2);
            if let Some((d_near, d_far)) = seg.human {
                let s = RaySegment {
                    entity: Entity::Human,
                    d_near,
                    d_far,
                    bins: self.render_cfg.human_bins,
                };
                lists.push((Entity::Human, stratified_sample(&s, Some(&mut rng))));
            }
            if let Some((d_near, d_far)) = seg.object {
                let s = RaySegment {
                    entity: Entity::Object,
                    d_near,
                    d_far,
                    bins: self.render_cfg.object_bins,
                };
                lists.push((Entity::Object, stratified_sample(&s, Some(&mut rng))));
            }
            let merged = merge_samples(&lists, self.render_cfg.far_delta);
            let d = [ray.dir.x as f32, ray.dir.y as f32, ray.dir.z as f32];
            self.field.human.dir_enc.encode(&d, &mut dir_buf);
            forward_ray(
                &self.field.human,
                &self.field.object,
                &self.hctxs[frame],
                &self.octxs[frame],
                frame,
                &ray,
                &merged.samples,
                &dir_buf,
                &mut fwd,
            );
            let (lc, d_rgb) = loss_photometric(&[fwd.rgb], &[obs]);
            l_c += lc;
            let mut d_rgb_w = d_rgb[0];
            for c in &mut d_rgb_w {
                *c *= self.weights.w_c;
            }
            let mut d_label_w = [0.0; 2];
            if let Some(maps) = &self.pseudo {
                if maps[frame * self.num_cams() + cam_i].labeled.get(x, y) {
                    let (ls, d_lab) = loss_semantic(&[fwd.label], &[OBJECT_LABEL]);
                    l_s += ls;
                    d_label_w = [d_lab[0][0] * self.weights.w_s, d_lab[0][1] * self.weights.w_s];
                }
            }
            backward_ray(
                &self.field.human,
                &self.field.object,
                &mut fwd,
                &d_rgb_w,
                0.0,
                &d_label_w,
                &mut hg,
                &mut og,
            );
        }
        (l_c, l_s, hg, og)
    }

    pub fn step_once(&mut self) -> Result<StepRecord> {
        let n = self.step;
        self.maybe_enter_pseudo_phase()?;
        let batch: Vec<u32> = (0..self.cfg.batch_rays).map(|_| self.pool.next()).collect();
        let chunk_size = batch.len().div_ceil(self.cfg.workers);
        let outs: Vec<(f64, f64, HumanGrads<f32>, ObjectGrads<f32>)> = batch
            .par_chunks(chunk_size)
            .enumerate()
            .map(|(ci, ch)| self.eval_chunk(n, ch, (ci * chunk_size) as u64))
            .collect();
        let mut bd = LossBreakdown::default();
        let mut hg = HumanGrads::zeros(&self.field.human);
        let mut og = ObjectGrads::zeros(&self.field.object);
        for (lc, ls, chg, cog) in &outs {
            bd.l_c += lc;
            bd.l_s += ls;
            hg.add(chg);
            og.add(cog);
        }

        let mut rng_t = stream2(self.cfg.seed, Stage::Train, SUB_TEMPLATE, n);
        let o_samples = sample_points(&self.template_aabb, self.weights.object_samples, &mut rng_t);
        bd.l_o = loss_object_template(
            &self.field.object,
            &self.canon_tester,
            &o_samples,
            self.weights.w_o,
            &mut og,
        );
        let tf = (n % self.data.frames.len() as u64) as usize;
        let h_samples = sample_points(&self.human_aabbs[tf], self.weights.human_samples, &mut rng_t);
        bd.l_h = loss_human_contact(
            &self.field.human,
            &self.hctxs[tf],
            tf,
            &self.posed_testers[tf],
            &h_samples,
            self.weights.w_h,
            &mut hg,
        );

        let f = &mut self.field;
        let mo = &mut self.moments;
        adam_step(&mut f.human.density.params, &hg.density, &mut mo.h_density, n, &self.cfg);
        adam_step(&mut f.human.color.params, &hg.color, &mut mo.h_color, n, &self.cfg);
        adam_step(&mut f.human.deform.params, &hg.deform, &mut mo.h_deform, n, &self.cfg);
        adam_step(&mut f.human.latents, &hg.latents, &mut mo.h_latents, n, &self.cfg);
        adam_step(&mut f.object.density.params, &og.density, &mut mo.o_density, n, &self.cfg);
        adam_step(&mut f.object.color.params, &og.color, &mut mo.o_color, n, &self.cfg);
        adam_step(&mut f.object.latents, &og.latents, &mut mo.o_latents, n, &self.cfg);

        let rec = StepRecord {
            step: n,
            lr: self.cfg.lr(n),
            losses: bd,
            total: bd.total(&self.weights),
        };
        self.log.push(rec);
        self.step = n + 1;

        let init = *self.initial_total.get_or_insert(rec.total);
        if !rec.total.is_finite() || rec.total > 10.0 * init {
            self.divergence_streak += 1;
        } else {
            self.divergence_streak = 0;
        }
        if self.divergence_streak >= 100 {
            return Err(Error::Training(format!(
                "loss diverged: step {n} total {:.6e} stayed above 10x the initial {:.6e} \
                 for {} consecutive steps",
                rec.total, init, self.divergence_streak
            )));
        }
        Ok(rec)
    }

    pub fn run_to(&mut self, target: u64) -> Result<()> {
        while self.step < target {
            let rec = self.step_once()?;
            if rec.step % 1000 == 0 {
                log::info!(
                    "step {} lr {:.3e} total {:.5}",
                    rec.step,
                    rec.lr,
                    rec.total
                );
            }
        }
        Ok(())
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let f = &self.field;
        let nj = self.data.proxy.joints.len();
        let widths = [
            self.field_cfg.density_widths(),
            self.field_cfg.color_widths(),
            self.field_cfg.deform_widths(nj),
            self.field_cfg.density_widths(),
            self.field_cfg.color_widths(),
        ]
        .iter()
        .map(|w| w.iter().map(|&d| d as u32).collect())
        .collect();
        let mut tensors = vec![
            TensorEntry { name: "human.density".into(), data: f.human.density.params.clone() },
            TensorEntry { name: "human.color".into(), data: f.human.color.params.clone() },
            TensorEntry { name: "human.deform".into(), data: f.human.deform.params.clone() },
            TensorEntry { name: "human.latents".into(), data: f.human.latents.clone() },
            TensorEntry { name: "object.density".into(), data: f.object.density.params.clone() },
            TensorEntry { name: "object.color".into(), data: f.object.color.params.clone() },
            TensorEntry { name: "object.latents".into(), data: f.object.latents.clone() },
        ];
        let mo = &self.moments;
        for (name, st) in [
            ("human.density", &mo.h_density),
            ("human.color", &mo.h_color),
            ("human.deform", &mo.h_deform),
            ("human.latents", &mo.h_latents),
            ("object.density", &mo.o_density),
            ("object.color", &mo.o_color),
            ("object.latents", &mo.o_latents),
        ] {
            tensors.push(TensorEntry { name: format!("adam.{name}.m"), data: st.m.clone() });
            tensors.push(TensorEntry { name: format!("adam.{name}.v"), data: st.v.clone() });
        }
        tensors.push(TensorEntry {
            name: "diag.initial_total".into(),
            data: self.initial_total.map(|t| vec![t as f32]).unwrap_or_default(),
        });
        tensors.push(TensorEntry {
            name: "diag.divergence_streak".into(),
            data: vec![self.divergence_streak as f32],
        });
        Checkpoint {
            config_hash: self.config_hash(),
            step: self.step,
            seed: self.cfg.seed,
            num_frames: self.data.frames.len() as u32,
            latent_dim: self.field_cfg.latent_dim as u32,
            widths,
            tensors,
        }
        .save(path)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_checkpoint(
        path: &Path,
        data: &'a SceneData,
        poses: &TrackedPoses,
        field_cfg: FieldConfig,
        render_cfg: RenderConfig,
        weights: LossWeights,
        cfg: TrainConfig,
        pseudo_dir: Option<&Path>,
    ) -> Result<Self> {
        let mut t = Trainer::new(data, poses, field_cfg, render_cfg, weights, cfg, pseudo_dir)?;
        let ck = Checkpoint::load_expecting(path, t.config_hash())?;
        fn fill(dst: &mut [f32], ck: &Checkpoint, name: &str) -> Result<()> {
            let src = ck.tensor(name)?;
            if src.len() != dst.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name}: expected {} values, found {}",
                    dst.len(),
                    src.len()
                )));
            }
            dst.copy_from_slice(src);
            Ok(())
        }
        {
            let f = &mut t.field;
            fill(&mut f.human.density.params, &ck, "human.density")?;
            fill(&mut f.human.color.params, &ck, "human.color")?;
            fill(&mut f.human.deform.params, &ck, "human.deform")?;
            fill(&mut f.human.latents, &ck, "human.latents")?;
            fill(&mut f.object.density.params, &ck, "object.density")?;
            fill(&mut f.object.color.params, &ck, "object.color")?;
            fill(&mut f.object.latents, &ck, "object.latents")?;
            let mo = &mut t.moments;
            for (name, st) in [
                ("human.density", &mut mo.h_density),
                ("human.color", &mut mo.h_color),
                ("human.deform", &mut mo.h_deform),
                ("human.latents", &mut mo.h_latents),
                ("object.density", &mut mo.o_density),
                ("object.color", &mut mo.o_color),
                ("object.latents", &mut mo.o_latents),
            ] {
                fill(&mut st.m, &ck, &format!("adam.{name}.m"))?;
                fill(&mut st.v, &ck, &format!("adam.{name}.v"))?;
            }
        }
        t.step = ck.step;
        t.pool.seek(ck.step * t.cfg.batch_rays as u64);
        let init = ck.tensor("diag.initial_total")?;
        t.initial_total = init.first().map(|&v| v as f64);
        t.divergence_streak = ck.tensor("diag.divergence_streak")?[0] as u32;
        t.maybe_enter_pseudo_phase()?;
        Ok(t)
    }
}


/// Runs the full schedule and returns the trained fields with the loss log.
pub fn train(
    data: &SceneData,
    poses: &TrackedPoses,
    field_cfg: FieldConfig,
    render_cfg: RenderConfig,
    weights: LossWeights,
    cfg: TrainConfig,
    pseudo_dir: Option<&Path>,
) -> Result<(LayeredField<f32>, Vec<StepRecord>)> {
    let total = cfg.total_steps;
    let mut t = Trainer::new(data, poses, field_cfg, render_cfg, weights, cfg, pseudo_dir)?;
    t.run_to(total)?;
    Ok((t.field, t.log))
}
