//! Multi-view linear triangulation of detected joints.

use crate::error::{Error, Result};
use crate::geometry::{Camera, V3};
use nalgebra::{DMatrix, Vector4};

#[derive(Debug, Clone)]
pub struct TriangulatedJoints {
    /// `None` marks a joint seen in fewer than two views.
    pub points: Vec<Option<V3>>,
    /// Reprojection RMS in pixels over all valid (joint, view) pairs.
    pub reproj_rms: f64,
}

/// Direct linear transform for one point from `(camera index, u, v)` rows.
pub fn triangulate_point(obs: &[(usize, f64, f64)], cameras: &[Camera]) -> Result<V3> {
    if obs.len() < 2 {
        return Err(Error::Tracking(format!(
            "need >= 2 views, got {}",
            obs.len()
        )));
    }
    let mut a = DMatrix::<f64>::zeros(2 * obs.len(), 4);
    for (row, &(cam, u, v)) in obs.iter().enumerate() {
        let p = cameras[cam].projection_matrix();
        for c in 0..4 {
            a[(2 * row, c)] = u * p[(2, c)] - p[(0, c)];
            a[(2 * row + 1, c)] = v * p[(2, c)] - p[(1, c)];
        }
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t.as_ref().expect("svd v_t");
    let x = Vector4::new(vt[(3, 0)], vt[(3, 1)], vt[(3, 2)], vt[(3, 3)]);
    if x.w.abs() < 1e-12 * x.norm() {
        return Err(Error::Degenerate("triangulated point at infinity".into()));
    }
    Ok(V3::new(x.x / x.w, x.y / x.w, x.z / x.w))
}

/// Triangulates every joint from per-view detections `obs[view][joint]`.
/// Joints visible in fewer than two views come back as `None`.
pub fn triangulate_joints(
    obs: &[Vec<Option<[f64; 2]>>],
    cameras: &[Camera],
) -> Result<TriangulatedJoints> {
    if obs.len() != cameras.len() {
        return Err(Error::Tracking(format!(
            "{} observation views vs {} cameras",
            obs.len(),
            cameras.len()
        )));
    }
    let num_joints = obs.first().map_or(0, |v| v.len());
    for v in obs {
        if v.len() != num_joints {
            return Err(Error::Tracking("ragged joint observations".into()));
        }
    }
    let mut points = Vec::with_capacity(num_joints);
    let mut sq_sum = 0.0;
    let mut count = 0usize;
    for j in 0..num_joints {
        let rows: Vec<(usize, f64, f64)> = (0..cameras.len())
            .filter_map(|v| obs[v][j].map(|uv| (v, uv[0], uv[1])))
            .collect();
        if rows.len() < 2 {
            points.push(None);
            continue;
        }
        let p = triangulate_point(&rows, cameras)?;
        for &(cam, u, v) in &rows {
            if let Some((ru, rv)) = cameras[cam].project(&p) {
                sq_sum += (ru - u).powi(2) + (rv - v).powi(2);
                count += 1;
            }
        }
        points.push(Some(p));
    }
    let reproj_rms = if count > 0 {
        (sq_sum / count as f64).sqrt()
    } else {
        0.0
    };
    Ok(TriangulatedJoints { points, reproj_rms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{default_spec, generate_scene};
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn noiseless_projections_recover_joints() {
        let data = generate_scene(&default_spec()).unwrap();
        for frame in &data.frames {
            let tri = triangulate_joints(&frame.joints_px, &data.cameras).unwrap();
            assert!(tri.reproj_rms < 1e-6, "rms {}", tri.reproj_rms);
            for (p, truth) in tri.points.iter().zip(&frame.joints_world) {
                let p = p.expect("joint visible in >= 2 views");
                assert!((p - truth).norm() < 1e-6, "err {}", (p - truth).norm());
            }
        }
    }

    #[test]
    fn single_view_joint_is_flagged_invalid() {
        let data = generate_scene(&default_spec()).unwrap();
        let frame = &data.frames[0];
        let mut obs = frame.joints_px.clone();
        for v in 1..obs.len() {
            obs[v][3] = None;
        }
        let tri = triangulate_joints(&obs, &data.cameras).unwrap();
        assert!(tri.points[3].is_none());
        assert!(tri.points[0].is_some());
    }

    #[test]
    fn pixel_noise_keeps_3d_rms_small_on_default_rig() {
        // sigma = 0.5 px on 12 views; RMS 3D error < 1e-2 over 50 seeds.
        let data = generate_scene(&default_spec()).unwrap();
        let frame = &data.frames[0];
        let sigma = 0.5;
        let mut sq = 0.0;
        let mut n = 0usize;
        for seed in 0..50u64 {
            let mut rng = crate::rng::stream(seed, crate::rng::Stage::Track, 500);
            let mut obs = frame.joints_px.clone();
            for view in obs.iter_mut() {
                for px in view.iter_mut() {
                    if let Some(p) = px.as_mut() {
                        let dz: f64 = StandardNormal.sample(&mut rng);
                        let dw: f64 = StandardNormal.sample(&mut rng);
                        p[0] += sigma * dz;
                        p[1] += sigma * dw;
                    }
                }
            }
            let tri = triangulate_joints(&obs, &data.cameras).unwrap();
            for (p, truth) in tri.points.iter().zip(&frame.joints_world) {
                sq += (p.unwrap() - truth).norm_squared();
                n += 1;
            }
        }
        let rms = (sq / n as f64).sqrt();
        assert!(rms < 1e-2, "rms {rms}");
        assert!(rms > 1e-5, "suspiciously exact under noise");
    }

    #[test]
    fn too_few_views_error_in_point_solver() {
        let data = generate_scene(&default_spec()).unwrap();
        assert!(triangulate_point(&[(0, 48.0, 48.0)], &data.cameras).is_err());
    }
}
