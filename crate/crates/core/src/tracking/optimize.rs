//! Joint body/object refinement: block-coordinate projected gradient descent
//! with backtracking line search and periodic contact map refresh.

use super::bodyfit::{body_candidate, line_search, object_candidate, project_body, GdState, StepOutcome};
use super::energy::{compute_contact_map, energy_total, energy_with_grad, FrameObservation, TrackerAssets};
use super::jacobian::ObjectGrad;
use super::{BodyParams, ContactMap, TrackingConfig};
use crate::error::Result;
use crate::geometry::{axis_angle_to_matrix, matrix_to_axis_angle, RigidPose, V3};
use crate::synth::body::{fk, site_world};

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub body: BodyParams,
    pub object: RigidPose,
    pub contacts: ContactMap,
    /// Accepted total energies: the initial state plus one entry per outer
    /// iteration. Non-increasing.
    pub trace: Vec<f64>,
    pub converged: bool,
}

fn contact_sites_world(assets: &TrackerAssets, body: &BodyParams) -> Vec<V3> {
    let f = fk(&assets.proxy, body);
    assets
        .sites_contact
        .iter()
        .map(|s| site_world(&assets.proxy, body, &f, s))
        .collect()
}

fn posed_template(assets: &TrackerAssets, r: &V3, t: &V3) -> crate::geometry::TriMesh {
    assets.template.transformed(&RigidPose {
        rotation: axis_angle_to_matrix(*r),
        translation: *t,
    })
}

/// Refines body and object state from their initializations by minimizing
/// the weighted tracking energy. The contact map is recomputed every
/// `contact_refresh_every` iterations but a refresh is deferred whenever it
/// would raise the current energy, keeping the accepted trace non-increasing.
pub fn joint_optimize(
    assets: &TrackerAssets,
    obs: &FrameObservation,
    init_body: &BodyParams,
    init_object: &RigidPose,
    cfg: &TrackingConfig,
) -> Result<OptimizeResult> {
    let mut body = init_body.clone();
    project_body(&mut body);
    let mut r = matrix_to_axis_angle(&init_object.rotation);
    let mut t = init_object.translation;
    let mut contacts = compute_contact_map(
        &contact_sites_world(assets, &body),
        &posed_template(assets, &r, &t),
        cfg.tau_contact,
    );
    let mut e = energy_total(assets, obs, &body, &r, &t, &contacts, cfg)?.total;
    let mut trace = vec![e];
    let mut st_body = GdState::default();
    // Object rotation and translation descend as separate blocks: their
    // curvatures differ by orders of magnitude, so a shared step length
    // starves whichever block is better conditioned.
    let mut st_obj_r = GdState::default();
    let mut st_obj_t = GdState::default();
    let mut converged = true;
    let mut stall = 0usize;
    for it in 1..=cfg.max_iters {
        if cfg.contact_refresh_every > 0 && it % cfg.contact_refresh_every == 0 {
            let cand = compute_contact_map(
                &contact_sites_world(assets, &body),
                &posed_template(assets, &r, &t),
                cfg.tau_contact,
            );
            if cand != contacts {
                let e_cand = energy_total(assets, obs, &body, &r, &t, &cand, cfg)?.total;
                if e_cand <= e {
                    contacts = cand;
                    e = e_cand;
                }
            }
        }
        let e_start = e;
        let mut progressed = false;
        let mut failed = false;

        let (bk, bg, _) = energy_with_grad(assets, obs, &body, &r, &t, &contacts, cfg)?;
        debug_assert!((bk.total - e).abs() <= 1e-9 * (1.0 + e.abs()));
        match line_search(e, bg.norm().powi(2), &mut st_body, |alpha| {
            energy_total(
                assets,
                obs,
                &body_candidate(&body, &bg, alpha),
                &r,
                &t,
                &contacts,
                cfg,
            )
            .map(|b| b.total)
            .unwrap_or(f64::INFINITY)
        }) {
            StepOutcome::Accepted { energy } => {
                body = body_candidate(&body, &bg, st_body.alpha);
                e = energy;
                progressed = true;
            }
            StepOutcome::ZeroGrad => {}
            StepOutcome::Failed => failed = true,
        }

        let (_, _, og) = energy_with_grad(assets, obs, &body, &r, &t, &contacts, cfg)?;
        let og_r = ObjectGrad {
            r: og.r,
            t: V3::zeros(),
        };
        match line_search(e, og.r.norm_squared(), &mut st_obj_r, |alpha| {
            let (cr, ct) = object_candidate(&r, &t, &og_r, alpha);
            energy_total(assets, obs, &body, &cr, &ct, &contacts, cfg)
                .map(|b| b.total)
                .unwrap_or(f64::INFINITY)
        }) {
            StepOutcome::Accepted { energy } => {
                let (cr, ct) = object_candidate(&r, &t, &og_r, st_obj_r.alpha);
                r = cr;
                t = ct;
                e = energy;
                progressed = true;
            }
            StepOutcome::ZeroGrad => {}
            StepOutcome::Failed => failed = true,
        }

        let (_, _, og) = energy_with_grad(assets, obs, &body, &r, &t, &contacts, cfg)?;
        let og_t = ObjectGrad {
            r: V3::zeros(),
            t: og.t,
        };
        match line_search(e, og.t.norm_squared(), &mut st_obj_t, |alpha| {
            let (cr, ct) = object_candidate(&r, &t, &og_t, alpha);
            energy_total(assets, obs, &body, &cr, &ct, &contacts, cfg)
                .map(|b| b.total)
                .unwrap_or(f64::INFINITY)
        }) {
            StepOutcome::Accepted { energy } => {
                let (cr, ct) = object_candidate(&r, &t, &og_t, st_obj_t.alpha);
                r = cr;
                t = ct;
                e = energy;
                progressed = true;
            }
            StepOutcome::ZeroGrad => {}
            StepOutcome::Failed => failed = true,
        }

        trace.push(e);
        if !progressed {
            converged = !failed;
            break;
        }
        if e_start - e <= cfg.energy_tol * (1.0 + e.abs()) {
            stall += 1;
            if stall >= 3 {
                break;
            }
        } else {
            stall = 0;
        }
    }
    Ok(OptimizeResult {
        body,
        object: RigidPose {
            rotation: axis_angle_to_matrix(r),
            translation: t,
        },
        contacts,
        trace,
        converged,
    })
}
