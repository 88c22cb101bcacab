//! Scene specification, marker placement, and ground-truth frame generation.

use super::body::{body_aabb, capsules, fk, BodyProxy};
use super::render::{render_view, RenderedView, SceneGeometry, Subset};
use super::templates::template_by_id;
use crate::error::{Error, Result};
use crate::geometry::{axis_angle_to_matrix, Camera, RigidPose, TriMesh, V3};
use crate::image::{ImageRgb, Mask};
use crate::rng::{splitmix64, stream2, Stage};
use crate::tracking::BodyParams;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneSpec {
    pub num_cameras: usize,
    pub ring_radius: f64,
    /// Absolute world height of the camera ring.
    pub ring_height: f64,
    /// Angle of camera 0 on the ring, radians.
    pub ring_phase: f64,
    pub look_target: V3,
    pub focal: f64,
    pub width: usize,
    pub height: usize,
    pub num_frames: usize,
    pub template_id: String,
    pub template_size: f64,
    pub num_markers: usize,
    pub marker_noise: f64,
    /// Unit direction toward the light.
    pub light: V3,
    pub seed: u64,
    /// One entry per frame; empty means rest pose everywhere.
    pub body_script: Vec<BodyParams>,
    /// One entry per frame; empty is rejected by `validate`.
    pub object_script: Vec<RigidPose>,
}

impl SceneSpec {
    pub fn validate(&self, proxy: &BodyProxy) -> Result<()> {
        if self.num_cameras < 2 {
            return Err(Error::Config("need at least 2 cameras".into()));
        }
        if self.num_frames < 1 {
            return Err(Error::Config("need at least 1 frame".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("zero-area camera".into()));
        }
        if !(self.focal > 0.0) || !(self.ring_radius > 0.0) {
            return Err(Error::Config("focal and ring radius must be positive".into()));
        }
        if self.num_markers < 4 {
            return Err(Error::Config("need at least 4 markers".into()));
        }
        if self.marker_noise < 0.0 {
            return Err(Error::Config("marker noise must be >= 0".into()));
        }
        if !self.body_script.is_empty() && self.body_script.len() != self.num_frames {
            return Err(Error::Config("body script length != frame count".into()));
        }
        if self.object_script.len() != self.num_frames {
            return Err(Error::Config("object script length != frame count".into()));
        }
        for p in &self.body_script {
            if p.num_joints() != proxy.num_joints() {
                return Err(Error::Config("body script joint count mismatch".into()));
            }
            p.validate()?;
        }
        Ok(())
    }

    pub fn body_params(&self, proxy: &BodyProxy, t: usize) -> BodyParams {
        if self.body_script.is_empty() {
            BodyParams::rest(proxy.joints.len())
        } else {
            self.body_script[t].clone()
        }
    }

    pub fn cameras(&self) -> Vec<Camera> {
        (0..self.num_cameras)
            .map(|i| {
                let phi =
                    self.ring_phase + std::f64::consts::TAU * i as f64 / self.num_cameras as f64;
                let eye = V3::new(
                    self.look_target.x + self.ring_radius * phi.cos(),
                    self.ring_height,
                    self.look_target.z + self.ring_radius * phi.sin(),
                );
                Camera::look_at(
                    eye,
                    self.look_target,
                    V3::new(0.0, 1.0, 0.0),
                    self.focal,
                    self.focal,
                    self.width,
                    self.height,
                )
            })
            .collect()
    }
}

/// Desk-scale default: 12 cameras on a ring, 96x96, 5 frames, an icosphere
/// riding the left forearm with a slight overlap so contact exists, gentle
/// elbow and spine motion.
pub fn default_spec() -> SceneSpec {
    let proxy = BodyProxy::default_humanoid();
    let num_frames = 5;
    let mut body_script = Vec::with_capacity(num_frames);
    let mut object_script = Vec::with_capacity(num_frames);
    let obj_radius = 0.18;
    for t in 0..num_frames {
        let ft = t as f64;
        let mut p = BodyParams::rest(proxy.joints.len());
        p.pose[1] = V3::new(0.03 * ft, 0.0, 0.0);
        p.pose[2] = V3::new(0.0, 0.04 * ft, 0.0);
        p.pose[4] = V3::new(0.0, 0.10 * ft, -0.20 - 0.10 * ft);
        p.pose[6] = V3::new(0.0, 0.0, 0.30);
        p.translation = V3::new(0.010 * ft, 0.0, 0.005 * ft);
        let f = fk(&proxy, &p);
        let elbow = f.pos[4];
        let wrist = f.pos[5];
        let axis = (wrist - elbow).normalize();
        let mut lat = axis.cross(&V3::new(0.0, 1.0, 0.0));
        lat = if lat.norm() < 1e-6 {
            V3::new(0.0, 0.0, 1.0)
        } else {
            lat.normalize()
        };
        let anchor = elbow + (wrist - elbow) * 0.55;
        let forearm_radius = proxy.joints[5].radius;
        let center = anchor + lat * (forearm_radius + obj_radius - 0.001);
        let rot = axis_angle_to_matrix(V3::new(0.05 * ft, 0.15 * ft, 0.02 * ft));
        object_script.push(RigidPose { rotation: rot, translation: center });
        body_script.push(p);
    }
    SceneSpec {
        num_cameras: 12,
        ring_radius: 2.2,
        ring_height: 1.0,
        ring_phase: 0.0,
        look_target: V3::new(0.0, 0.4, 0.0),
        focal: 140.0,
        width: 96,
        height: 96,
        num_frames,
        template_id: "icosphere".into(),
        template_size: obj_radius,
        num_markers: 8,
        marker_noise: 0.0,
        light: V3::new(0.4, 0.8, 0.55).normalize(),
        seed: 0,
        body_script,
        object_script,
    }
}

/// Farthest-point sampling over template vertices. Returns vertex indices;
/// the start vertex is seeded, every later pick maximizes the minimum
/// distance to the chosen set with lowest-index tie-breaks.
pub fn attach_markers(template: &TriMesh, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = template.vertices.len();
    if k < 4 {
        return Err(Error::Config("need at least 4 markers".into()));
    }
    if k > n {
        return Err(Error::Config(format!(
            "marker count {k} exceeds vertex count {n}"
        )));
    }
    let start = (splitmix64(seed ^ 0x6d61726b) % n as u64) as usize;
    let mut chosen = vec![start];
    let mut min_dist: Vec<f64> = template
        .vertices
        .iter()
        .map(|v| (v - template.vertices[start]).norm())
        .collect();
    while chosen.len() < k {
        let mut best = 0;
        let mut best_d = f64::NEG_INFINITY;
        for (i, &d) in min_dist.iter().enumerate() {
            if d > best_d {
                best_d = d;
                best = i;
            }
        }
        chosen.push(best);
        for (i, d) in min_dist.iter_mut().enumerate() {
            let nd = (template.vertices[i] - template.vertices[best]).norm();
            if nd < *d {
                *d = nd;
            }
        }
    }
    Ok(chosen)
}

/// Markers in world space: pose applied to template-frame points, then
/// i.i.d. Gaussian noise on every coordinate. Zero sigma is exact.
pub fn observe_markers(
    template_points: &[V3],
    pose: &RigidPose,
    sigma: f64,
    rng: &mut impl Rng,
) -> Vec<V3> {
    template_points
        .iter()
        .map(|p| {
            let mut w = pose.apply(p);
            if sigma > 0.0 {
                for i in 0..3 {
                    let z: f64 = StandardNormal.sample(rng);
                    w[i] += sigma * z;
                }
            }
            w
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FrameTruth {
    pub body: BodyParams,
    pub object_pose: RigidPose,
    pub joints_world: Vec<V3>,
    /// Per view, per joint; `None` when invisible in that view.
    pub joints_px: Vec<Vec<Option<[f64; 2]>>>,
    pub markers_world: Vec<V3>,
    pub markers_observed: Vec<V3>,
    pub images: Vec<ImageRgb>,
    pub human_masks: Vec<Mask>,
    pub object_masks: Vec<Mask>,
    pub union_masks: Vec<Mask>,
}

#[derive(Debug, Clone)]
pub struct SceneData {
    pub spec: SceneSpec,
    pub proxy: BodyProxy,
    pub cameras: Vec<Camera>,
    /// Vertex-colored canonical template, centered at its own origin.
    pub template: TriMesh,
    /// Template vertex index per marker id.
    pub marker_vertices: Vec<usize>,
    pub frames: Vec<FrameTruth>,
}

impl SceneData {
    pub fn marker_template_points(&self) -> Vec<V3> {
        self.marker_vertices
            .iter()
            .map(|&v| self.template.vertices[v])
            .collect()
    }
}

pub fn generate_scene(spec: &SceneSpec) -> Result<SceneData> {
    let proxy = BodyProxy::default_humanoid();
    spec.validate(&proxy)?;
    let template = template_by_id(&spec.template_id, spec.template_size)?;
    if let Some(v) = template.watertight_violation() {
        return Err(Error::Mesh(format!("template is not watertight: {v}")));
    }
    let cameras = spec.cameras();
    let marker_vertices = attach_markers(&template, spec.num_markers, spec.seed)?;
    let marker_points: Vec<V3> = marker_vertices
        .iter()
        .map(|&v| template.vertices[v])
        .collect();
    let bone_colors: Vec<[f64; 3]> = proxy.joints.iter().map(|j| j.color).collect();

    let mut frames = Vec::with_capacity(spec.num_frames);
    for t in 0..spec.num_frames {
        let body = spec.body_params(&proxy, t);
        let object_pose = spec.object_script[t].clone();
        let f = fk(&proxy, &body);
        let caps = capsules(&proxy, &f);
        let posed = template.transformed(&object_pose);
        let geom = SceneGeometry {
            capsules: &caps,
            bone_colors: &bone_colors,
            object: &posed,
            object_aabb: posed.aabb(),
            light: spec.light,
        };
        let mut images = Vec::with_capacity(cameras.len());
        let mut human_masks = Vec::with_capacity(cameras.len());
        let mut object_masks = Vec::with_capacity(cameras.len());
        let mut union_masks = Vec::with_capacity(cameras.len());
        let mut joints_px = Vec::with_capacity(cameras.len());
        for cam in &cameras {
            let RenderedView {
                image,
                human_mask,
                object_mask,
                union_mask,
            } = render_view(&geom, cam, Subset::All);
            images.push(image);
            human_masks.push(human_mask);
            object_masks.push(object_mask);
            union_masks.push(union_mask);
            joints_px.push(
                f.pos
                    .iter()
                    .map(|p| {
                        if cam.visible(p) {
                            cam.project(p).map(|(u, v)| [u, v])
                        } else {
                            None
                        }
                    })
                    .collect(),
            );
        }
        let markers_world: Vec<V3> = marker_points.iter().map(|p| object_pose.apply(p)).collect();
        let mut rng = stream2(spec.seed, Stage::Synth, 7, t as u64);
        let markers_observed =
            observe_markers(&marker_points, &object_pose, spec.marker_noise, &mut rng);
        frames.push(FrameTruth {
            body,
            object_pose,
            joints_world: f.pos.clone(),
            joints_px,
            markers_world,
            markers_observed,
            images,
            human_masks,
            object_masks,
            union_masks,
        });
    }
    Ok(SceneData {
        spec: spec.clone(),
        proxy,
        cameras,
        template,
        marker_vertices,
        frames,
    })
}

/// Scene AABB covering body and object over all frames, for ray bounds.
pub fn scene_aabb(data: &SceneData, margin: f64) -> crate::geometry::Aabb {
    let mut bb = crate::geometry::Aabb::empty();
    for frame in &data.frames {
        let f = fk(&data.proxy, &frame.body);
        bb = bb.union(&body_aabb(&data.proxy, &f, 0.0));
        bb = bb.union(&data.template.transformed(&frame.object_pose).aabb());
    }
    bb.dilated(margin)
}
