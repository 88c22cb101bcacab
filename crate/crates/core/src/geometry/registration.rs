//! Rigid registration: closed-form point-pair alignment and ICP refinement.

use super::{M3, RigidPose, V3};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Labeled 3D points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerSet {
    pub ids: Vec<u32>,
    pub points: Vec<V3>,
}

impl MarkerSet {
    pub fn new(ids: Vec<u32>, points: Vec<V3>) -> Result<Self> {
        if ids.len() != points.len() {
            return Err(Error::MarkerMismatch(format!(
                "{} ids vs {} points",
                ids.len(),
                points.len()
            )));
        }
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != ids.len() {
            return Err(Error::MarkerMismatch("duplicate marker ids".into()));
        }
        Ok(MarkerSet { ids, points })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn transformed(&self, pose: &RigidPose) -> MarkerSet {
        MarkerSet {
            ids: self.ids.clone(),
            points: self.points.iter().map(|p| pose.apply(p)).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RigidFit {
    pub pose: RigidPose,
    pub rms: f64,
}

#[derive(Debug, Clone)]
pub struct IcpResult {
    pub pose: RigidPose,
    /// RMS after each correspondence + alignment round; non-increasing.
    pub rms_history: Vec<f64>,
    pub converged: bool,
}

/// Least-squares rotation + translation for paired points (no scale).
/// Errors when fewer than 3 pairs or the source is collinear.
fn kabsch(src: &[V3], dst: &[V3]) -> Result<RigidPose> {
    assert_eq!(src.len(), dst.len());
    let n = src.len();
    if n < 3 {
        return Err(Error::Degenerate(format!(
            "rigid fit needs at least 3 pairs, got {n}"
        )));
    }
    let inv_n = 1.0 / n as f64;
    let mu_s: V3 = src.iter().sum::<V3>() * inv_n;
    let mu_d: V3 = dst.iter().sum::<V3>() * inv_n;
    let mut h = M3::zeros();
    let mut spread = 0.0f64;
    for (s, d) in src.iter().zip(dst) {
        let cs = s - mu_s;
        h += (d - mu_d) * cs.transpose();
        spread = spread.max(cs.norm());
    }
    let svd = h.svd(true, true);
    let sv = svd.singular_values;
    // Collinear sources: covariance rank < 2 leaves a rotation about the
    // source axis undetermined.
    if sv[1] <= 1e-12 * sv[0].max(spread * spread).max(1e-300) {
        return Err(Error::Degenerate("collinear source points".into()));
    }
    let u = svd.u.unwrap();
    let v_t = svd.v_t.unwrap();
    let mut s_fix = M3::identity();
    if (u * v_t).determinant() < 0.0 {
        s_fix[(2, 2)] = -1.0;
    }
    let rotation = u * s_fix * v_t;
    let translation = mu_d - rotation * mu_s;
    Ok(RigidPose {
        rotation,
        translation,
    })
}

fn rms(src: &[V3], dst: &[V3], pose: &RigidPose) -> f64 {
    let sum: f64 = src
        .iter()
        .zip(dst)
        .map(|(s, d)| (pose.apply(s) - d).norm_squared())
        .sum();
    (sum / src.len() as f64).sqrt()
}

/// Closed-form rigid alignment of two marker sets matched by id.
/// Errors on id mismatch or collinear sources.
pub fn umeyama_rigid_fit(source: &MarkerSet, target: &MarkerSet) -> Result<RigidFit> {
    if source.len() != target.len() {
        return Err(Error::MarkerMismatch(format!(
            "{} source vs {} target markers",
            source.len(),
            target.len()
        )));
    }
    let mut tgt_by_id: std::collections::HashMap<u32, &V3> = std::collections::HashMap::new();
    for (id, p) in target.ids.iter().zip(&target.points) {
        tgt_by_id.insert(*id, p);
    }
    let mut order: Vec<usize> = (0..source.len()).collect();
    order.sort_by_key(|&i| source.ids[i]);
    let mut src = Vec::with_capacity(source.len());
    let mut dst = Vec::with_capacity(source.len());
    for i in order {
        let id = source.ids[i];
        let d = tgt_by_id
            .get(&id)
            .ok_or_else(|| Error::MarkerMismatch(format!("id {id} missing from target")))?;
        src.push(source.points[i]);
        dst.push(**d);
    }
    let pose = kabsch(&src, &dst)?;
    let rms = rms(&src, &dst, &pose);
    Ok(RigidFit { pose, rms })
}

/// ICP with nearest-neighbor correspondences and closed-form alignment per
/// round. The RMS history is non-increasing: with correspondences fixed the
/// alignment is optimal, and re-matching can only shrink each distance.
pub fn icp_rigid(
    source: &[V3],
    target: &[V3],
    init: &RigidPose,
    max_iters: usize,
    tol: f64,
) -> Result<IcpResult> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::Degenerate("icp needs non-empty clouds".into()));
    }
    let mut pose = init.clone();
    let mut history: Vec<f64> = Vec::new();
    let mut converged = false;
    for _ in 0..max_iters {
        let moved: Vec<V3> = source.iter().map(|p| pose.apply(p)).collect();
        let matched: Vec<V3> = moved
            .iter()
            .map(|m| {
                *target
                    .iter()
                    .min_by(|a, b| {
                        (m - **a)
                            .norm_squared()
                            .partial_cmp(&(m - **b).norm_squared())
                            .unwrap()
                    })
                    .unwrap()
            })
            .collect();
        pose = kabsch(source, &matched)?;
        let e = rms(source, &matched, &pose);
        if let Some(&prev) = history.last() {
            if (prev - e).abs() < tol {
                history.push(e);
                converged = true;
                break;
            }
        }
        history.push(e);
    }
    Ok(IcpResult {
        pose,
        rms_history: history,
        converged,
    })
}
