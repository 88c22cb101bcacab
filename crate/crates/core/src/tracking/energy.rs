//! The tracking energy: joint, contact, silhouette, and marker terms with
//! exact analytic gradients in body state and object pose.

use super::jacobian::{BodyGrad, FkJac, ObjectGrad};
use super::silhouette::{silhouette_camera, silhouette_sse_grad, splat_silhouette};
use super::{BodyParams, ContactMap, TrackingConfig};
use crate::error::{Error, Result};
use crate::geometry::{
    axis_angle_to_matrix, rotation_jacobian, Camera, MarkerSet, TriMesh, V3,
};
use crate::image::ImageGray;
use crate::synth::body::{fk, site_world, surface_sites, BodyProxy, Fk, SurfaceSite};
use rayon::prelude::*;

/// Observed data for one frame.
pub struct FrameObservation<'a> {
    /// Triangulated joints; `None` entries are excluded from the fit.
    pub joints: &'a [Option<V3>],
    /// Observed world markers, id-aligned with the template marker vertices.
    pub markers: Option<&'a MarkerSet>,
    /// Per-view union silhouette targets at the silhouette resolution;
    /// `None` drops the silhouette term with a warning flag.
    pub homask_targets: Option<&'a [ImageGray]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    pub smpl: f64,
    pub contact: f64,
    /// `None` when targets were missing and the term was omitted.
    pub homask: Option<f64>,
    pub marker: f64,
    pub total: f64,
}

/// Fixed per-sequence tracking context: geometry templates, sample grids,
/// and silhouette-resolution cameras.
pub struct TrackerAssets {
    pub proxy: BodyProxy,
    pub template: TriMesh,
    /// Template vertex index per marker id.
    pub marker_vertices: Vec<usize>,
    pub cameras: Vec<Camera>,
    pub sil_cameras: Vec<Camera>,
    pub sites_contact: Vec<SurfaceSite>,
    pub sites_homask: Vec<SurfaceSite>,
}

impl TrackerAssets {
    pub fn new(
        proxy: BodyProxy,
        template: TriMesh,
        marker_vertices: Vec<usize>,
        cameras: Vec<Camera>,
        cfg: &TrackingConfig,
    ) -> Self {
        let grid = |n: usize, span: std::ops::Range<f64>| -> Vec<f64> {
            (0..n)
                .map(|i| span.start + (span.end - span.start) * (i as f64 + 0.5) / n as f64)
                .collect()
        };
        let sites_contact = surface_sites(
            &proxy,
            &grid(cfg.contact_sites_u, 0.0..1.0),
            &grid(cfg.contact_sites_phi, 0.0..std::f64::consts::TAU),
        );
        let sites_homask = surface_sites(
            &proxy,
            &grid(cfg.homask_sites_u, 0.0..1.0),
            &grid(cfg.homask_sites_phi, 0.0..std::f64::consts::TAU),
        );
        let sil_cameras = cameras
            .iter()
            .map(|c| silhouette_camera(c, cfg.silhouette_res))
            .collect();
        TrackerAssets {
            proxy,
            template,
            marker_vertices,
            cameras,
            sil_cameras,
            sites_contact,
            sites_homask,
        }
    }

    pub fn posed_vertices(&self, r: &V3, t: &V3) -> Vec<V3> {
        let rot = axis_angle_to_matrix(*r);
        self.template
            .vertices
            .iter()
            .map(|v| rot * v + t)
            .collect()
    }
}

/// All body/object surface points with distance to an object vertex at most
/// `tau`; pairs ordered by (sample, vertex) index.
pub fn compute_contact_map(samples: &[V3], object_posed: &TriMesh, tau: f64) -> ContactMap {
    let t2 = tau * tau;
    let mut pairs = Vec::new();
    for (si, s) in samples.iter().enumerate() {
        for (vi, v) in object_posed.vertices.iter().enumerate() {
            if (s - v).norm_squared() <= t2 {
                pairs.push((si, vi));
            }
        }
    }
    ContactMap { pairs }
}

/// E_smpl: sum of squared distances from FK joints to valid target joints.
pub fn e_smpl(f: &Fk, joints: &[Option<V3>]) -> f64 {
    joints
        .iter()
        .enumerate()
        .filter_map(|(j, t)| t.map(|t| (f.pos[j] - t).norm_squared()))
        .sum()
}

pub fn e_smpl_grad(
    jac: &FkJac,
    joints: &[Option<V3>],
    grad: &mut BodyGrad,
    weight: f64,
) -> f64 {
    let mut e = 0.0;
    for (j, t) in joints.iter().enumerate() {
        if let Some(t) = t {
            let d = jac.fk.pos[j] - t;
            e += d.norm_squared();
            jac.accumulate_joint(j, &(2.0 * weight * d), grad);
        }
    }
    e
}

/// E_contact: squared distances between mapped object vertices and body
/// surface samples. Zero for an empty map.
pub fn e_contact(
    sites_world: &[V3],
    object_vertices: &[V3],
    contacts: &ContactMap,
) -> f64 {
    contacts
        .pairs
        .iter()
        .map(|&(s, v)| (object_vertices[v] - sites_world[s]).norm_squared())
        .sum()
}

#[allow(clippy::too_many_arguments)]
pub fn e_contact_grad(
    assets: &TrackerAssets,
    jac: &FkJac,
    body: &BodyParams,
    sites_world: &[V3],
    object_vertices: &[V3],
    rot_jac: &[crate::geometry::M3; 3],
    contacts: &ContactMap,
    body_grad: &mut BodyGrad,
    obj_grad: &mut ObjectGrad,
    weight: f64,
) -> f64 {
    let mut e = 0.0;
    for &(s, v) in &contacts.pairs {
        let d = object_vertices[v] - sites_world[s];
        e += d.norm_squared();
        let g = 2.0 * weight * d;
        let tv = &assets.template.vertices[v];
        for i in 0..3 {
            obj_grad.r[i] += (rot_jac[i] * tv).dot(&g);
        }
        obj_grad.t += g;
        jac.accumulate_site(
            &assets.proxy,
            body,
            &assets.sites_contact[s],
            &(-g),
            body_grad,
        );
    }
    e
}

/// E_marker: squared distances from marker-selected posed vertices to the
/// observed markers, in marker id order.
pub fn e_marker(marker_vertices: &[usize], object_vertices: &[V3], markers: &MarkerSet) -> f64 {
    marker_vertices
        .iter()
        .zip(&markers.points)
        .map(|(&v, s)| (object_vertices[v] - s).norm_squared())
        .sum()
}

pub fn e_marker_grad(
    assets: &TrackerAssets,
    object_vertices: &[V3],
    rot_jac: &[crate::geometry::M3; 3],
    markers: &MarkerSet,
    obj_grad: &mut ObjectGrad,
    weight: f64,
) -> f64 {
    let mut e = 0.0;
    for (&v, s) in assets.marker_vertices.iter().zip(&markers.points) {
        let d = object_vertices[v] - s;
        e += d.norm_squared();
        let g = 2.0 * weight * d;
        let tv = &assets.template.vertices[v];
        for i in 0..3 {
            obj_grad.r[i] += (rot_jac[i] * tv).dot(&g);
        }
        obj_grad.t += g;
    }
    e
}

fn homask_points(
    assets: &TrackerAssets,
    f: &Fk,
    body: &BodyParams,
    object_vertices: &[V3],
) -> Vec<V3> {
    let mut pts: Vec<V3> = assets
        .sites_homask
        .iter()
        .map(|s| site_world(&assets.proxy, body, f, s))
        .collect();
    pts.extend_from_slice(object_vertices);
    pts
}

/// E_homask: per-view sum of squared differences between the target
/// silhouette and the soft splat render of body plus object.
pub fn e_homask(
    assets: &TrackerAssets,
    f: &Fk,
    body: &BodyParams,
    object_vertices: &[V3],
    targets: &[ImageGray],
    cfg: &TrackingConfig,
) -> Result<f64> {
    if targets.len() != assets.sil_cameras.len() {
        return Err(Error::Tracking(format!(
            "{} homask targets vs {} views",
            targets.len(),
            assets.sil_cameras.len()
        )));
    }
    let pts = homask_points(assets, f, body, object_vertices);
    let per_view: Vec<f64> = assets
        .sil_cameras
        .par_iter()
        .zip(targets)
        .map(|(cam, target)| {
            let img = splat_silhouette(&pts, cam, cfg.splat_sigma_px, cfg.splat_truncate);
            img.pixels
                .iter()
                .zip(&target.pixels)
                .map(|(s, t)| (s - t) * (s - t))
                .sum()
        })
        .collect();
    Ok(per_view.iter().sum())
}

#[allow(clippy::too_many_arguments)]
pub fn e_homask_grad(
    assets: &TrackerAssets,
    jac: &FkJac,
    body: &BodyParams,
    object_vertices: &[V3],
    rot_jac: &[crate::geometry::M3; 3],
    targets: &[ImageGray],
    cfg: &TrackingConfig,
    body_grad: &mut BodyGrad,
    obj_grad: &mut ObjectGrad,
    weight: f64,
) -> Result<f64> {
    if targets.len() != assets.sil_cameras.len() {
        return Err(Error::Tracking(format!(
            "{} homask targets vs {} views",
            targets.len(),
            assets.sil_cameras.len()
        )));
    }
    let pts = homask_points(assets, &jac.fk, body, object_vertices);
    let per_view: Vec<(f64, Vec<V3>)> = assets
        .sil_cameras
        .par_iter()
        .zip(targets)
        .map(|(cam, target)| {
            silhouette_sse_grad(&pts, cam, cfg.splat_sigma_px, cfg.splat_truncate, target)
        })
        .collect();
    let n_sites = assets.sites_homask.len();
    let mut e = 0.0;
    // Fixed view order keeps the reduction deterministic under any pool size.
    let mut point_grad = vec![V3::zeros(); pts.len()];
    for (sse, g) in per_view {
        e += sse;
        for (acc, gi) in point_grad.iter_mut().zip(g) {
            *acc += gi;
        }
    }
    for (i, g) in point_grad.iter().enumerate() {
        let g = weight * g;
        if i < n_sites {
            jac.accumulate_site(&assets.proxy, body, &assets.sites_homask[i], &g, body_grad);
        } else {
            let tv = &assets.template.vertices[i - n_sites];
            for k in 0..3 {
                obj_grad.r[k] += (rot_jac[k] * tv).dot(&g);
            }
            obj_grad.t += g;
        }
    }
    Ok(e)
}

/// Total energy with per-term breakdown. Missing silhouette targets omit the
/// term (the breakdown records `None`).
pub fn energy_total(
    assets: &TrackerAssets,
    obs: &FrameObservation,
    body: &BodyParams,
    obj_r: &V3,
    obj_t: &V3,
    contacts: &ContactMap,
    cfg: &TrackingConfig,
) -> Result<EnergyBreakdown> {
    let f = fk(&assets.proxy, body);
    let object_vertices = assets.posed_vertices(obj_r, obj_t);
    let smpl = e_smpl(&f, obs.joints);
    let sites_world: Vec<V3> = assets
        .sites_contact
        .iter()
        .map(|s| site_world(&assets.proxy, body, &f, s))
        .collect();
    let contact = e_contact(&sites_world, &object_vertices, contacts);
    let marker = obs
        .markers
        .map(|m| e_marker(&assets.marker_vertices, &object_vertices, m))
        .unwrap_or(0.0);
    let homask = match obs.homask_targets {
        Some(t) => Some(e_homask(assets, &f, body, &object_vertices, t, cfg)?),
        None => None,
    };
    let total = smpl
        + cfg.lambda_contact * contact
        + cfg.lambda_homask * homask.unwrap_or(0.0)
        + cfg.lambda_marker * marker;
    Ok(EnergyBreakdown {
        smpl,
        contact,
        homask,
        marker,
        total,
    })
}

/// Total energy plus gradients of the weighted total in both blocks.
pub fn energy_with_grad(
    assets: &TrackerAssets,
    obs: &FrameObservation,
    body: &BodyParams,
    obj_r: &V3,
    obj_t: &V3,
    contacts: &ContactMap,
    cfg: &TrackingConfig,
) -> Result<(EnergyBreakdown, BodyGrad, ObjectGrad)> {
    let jac = FkJac::new(&assets.proxy, body);
    let object_vertices = assets.posed_vertices(obj_r, obj_t);
    let rot_jac = rotation_jacobian(*obj_r);
    let mut bg = BodyGrad::zeros(assets.proxy.num_joints());
    let mut og = ObjectGrad::zeros();
    let smpl = e_smpl_grad(&jac, obs.joints, &mut bg, 1.0);
    let sites_world: Vec<V3> = assets
        .sites_contact
        .iter()
        .map(|s| site_world(&assets.proxy, body, &jac.fk, s))
        .collect();
    let contact = e_contact_grad(
        assets,
        &jac,
        body,
        &sites_world,
        &object_vertices,
        &rot_jac,
        contacts,
        &mut bg,
        &mut og,
        cfg.lambda_contact,
    );
    let marker = match obs.markers {
        Some(m) => e_marker_grad(
            assets,
            &object_vertices,
            &rot_jac,
            m,
            &mut og,
            cfg.lambda_marker,
        ),
        None => 0.0,
    };
    let homask = match obs.homask_targets {
        Some(t) => Some(e_homask_grad(
            assets,
            &jac,
            body,
            &object_vertices,
            &rot_jac,
            t,
            cfg,
            &mut bg,
            &mut og,
            cfg.lambda_homask,
        )?),
        None => None,
    };
    // Root shape is pinned; never expose a gradient for it.
    bg.shape[0] = 0.0;
    let total = smpl
        + cfg.lambda_contact * contact
        + cfg.lambda_homask * homask.unwrap_or(0.0)
        + cfg.lambda_marker * marker;
    Ok((
        EnergyBreakdown {
            smpl,
            contact,
            homask,
            marker,
            total,
        },
        bg,
        og,
    ))
}
