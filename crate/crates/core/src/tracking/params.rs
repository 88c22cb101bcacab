//! Body state and tracking configuration.

use crate::geometry::V3;
use serde::{Deserialize, Serialize};

/// Articulated body state: per-joint axis-angle rotations, per-bone length
/// scales, and a global root translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyParams {
    /// Axis-angle per joint; magnitudes stay below pi.
    pub pose: Vec<V3>,
    /// Per-joint bone length scale in (0.5, 2); index 0 (root) is unused and
    /// pinned to 1.
    pub shape: Vec<f64>,
    /// Root translation.
    pub translation: V3,
}

impl BodyParams {
    pub fn rest(num_joints: usize) -> Self {
        BodyParams {
            pose: vec![V3::zeros(); num_joints],
            shape: vec![1.0; num_joints],
            translation: V3::zeros(),
        }
    }

    pub fn num_joints(&self) -> usize {
        self.pose.len()
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.shape.len() != self.pose.len() {
            return Err(crate::Error::Tracking(format!(
                "{} shape entries vs {} joints",
                self.shape.len(),
                self.pose.len()
            )));
        }
        for (j, aa) in self.pose.iter().enumerate() {
            if aa.norm() >= std::f64::consts::PI {
                return Err(crate::Error::Tracking(format!(
                    "joint {j} rotation magnitude {:.3} >= pi",
                    aa.norm()
                )));
            }
        }
        for (j, &s) in self.shape.iter().enumerate() {
            if !(0.5..2.0).contains(&s) {
                return Err(crate::Error::Tracking(format!(
                    "bone {j} scale {s} outside (0.5, 2)"
                )));
            }
        }
        Ok(())
    }
}

/// Weights and knobs for the tracking energy and its optimizer.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackingConfig {
    pub lambda_contact: f64,
    pub lambda_homask: f64,
    pub lambda_marker: f64,
    /// Contact distance threshold (scene units).
    pub tau_contact: f64,
    /// Soft-silhouette render resolution (square).
    pub silhouette_res: usize,
    /// Gaussian splat footprint in pixels.
    pub splat_sigma_px: f64,
    /// Splat support radius in sigmas; the kernel is shifted to zero there.
    pub splat_truncate: f64,
    /// Body surface sample grid (along bone x around bone) for contacts.
    pub contact_sites_u: usize,
    pub contact_sites_phi: usize,
    /// Coarser grid used for the soft silhouette term.
    pub homask_sites_u: usize,
    pub homask_sites_phi: usize,
    /// Contact map recompute cadence, in accepted outer iterations.
    pub contact_refresh_every: usize,
    pub max_iters: usize,
    /// Stop when an accepted step improves energy by less than this.
    pub energy_tol: f64,
    /// Iteration cap for the per-frame body initialization fit.
    pub body_fit_iters: usize,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        TrackingConfig {
            lambda_contact: 1.0,
            lambda_homask: 0.1,
            lambda_marker: 10.0,
            tau_contact: 0.02,
            silhouette_res: 64,
            splat_sigma_px: 1.0,
            splat_truncate: 5.0,
            contact_sites_u: 16,
            contact_sites_phi: 16,
            homask_sites_u: 10,
            homask_sites_phi: 10,
            contact_refresh_every: 10,
            max_iters: 60,
            energy_tol: 1e-10,
            body_fit_iters: 600,
        }
    }
}

/// Body-sample/object-vertex index pairs currently in contact.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContactMap {
    /// (body surface sample index, object vertex index).
    pub pairs: Vec<(usize, usize)>,
}
