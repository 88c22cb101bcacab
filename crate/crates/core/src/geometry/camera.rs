//! Pinhole camera: world-to-camera rigid pose plus intrinsics.
//! Camera frame: +x right, +y down, +z forward. Pixel (0,0) is top-left;
//! continuous pixel coordinates put integer-pixel centers at i + 0.5.

use super::{Ray, RigidPose, V3};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Camera {
    /// World -> camera.
    pub pose: RigidPose,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    /// Camera at `eye` looking at `target`, world up (0,1,0) unless given.
    pub fn look_at(
        eye: V3,
        target: V3,
        up: V3,
        fx: f64,
        fy: f64,
        width: usize,
        height: usize,
    ) -> Self {
        let z = (target - eye).normalize();
        let x = z.cross(&up).normalize();
        let y = z.cross(&x);
        let rotation = super::M3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let translation = -(rotation * eye);
        Camera {
            pose: RigidPose {
                rotation,
                translation,
            },
            fx,
            fy,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
        }
    }

    pub fn center(&self) -> V3 {
        self.pose.inverse().translation
    }

    /// Projects a world point; `None` when it is at or behind the camera.
    pub fn project(&self, p: &V3) -> Option<(f64, f64)> {
        let c = self.pose.apply(p);
        if c.z <= 1e-9 {
            return None;
        }
        Some((self.fx * c.x / c.z + self.cx, self.fy * c.y / c.z + self.cy))
    }

    /// True if the projection lands inside the image bounds.
    pub fn visible(&self, p: &V3) -> bool {
        match self.project(p) {
            Some((u, v)) => {
                u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
            }
            None => false,
        }
    }

    /// World-space ray through continuous pixel coordinates.
    pub fn pixel_ray(&self, u: f64, v: f64) -> Ray {
        let d_cam = V3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
        let inv = self.pose.inverse();
        Ray::new(self.center(), inv.rotation * d_cam)
    }

    /// 3x4 projection matrix `K [R | t]` for homogeneous triangulation.
    pub fn projection_matrix(&self) -> nalgebra::Matrix3x4<f64> {
        let k = super::M3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0);
        let mut rt = nalgebra::Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&self.pose.rotation);
        rt.fixed_view_mut::<3, 1>(0, 3)
            .copy_from(&self.pose.translation);
        k * rt
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> Camera {
        Camera::look_at(
            V3::new(0.0, 0.4, -2.2),
            V3::new(0.0, 0.4, 0.0),
            V3::new(0.0, 1.0, 0.0),
            140.0,
            140.0,
            96,
            96,
        )
    }

    #[test]
    fn target_projects_to_principal_point() {
        let c = cam();
        let (u, v) = c.project(&V3::new(0.0, 0.4, 0.0)).unwrap();
        assert!((u - 48.0).abs() < 1e-9);
        assert!((v - 48.0).abs() < 1e-9);
    }

    #[test]
    fn pixel_ray_reprojects() {
        let c = cam();
        for &(u, v) in &[(48.0, 48.0), (10.5, 80.25), (90.0, 3.0)] {
            let ray = c.pixel_ray(u, v);
            let p = ray.at(1.7);
            let (u2, v2) = c.project(&p).unwrap();
            assert!((u - u2).abs() < 1e-9, "{u} vs {u2}");
            assert!((v - v2).abs() < 1e-9, "{v} vs {v2}");
        }
    }

    #[test]
    fn behind_camera_is_invisible() {
        let c = cam();
        assert!(c.project(&V3::new(0.0, 0.4, -3.0)).is_none());
        assert!(!c.visible(&V3::new(0.0, 0.4, -3.0)));
    }

    #[test]
    fn projection_matrix_agrees_with_project() {
        let c = cam();
        let p = V3::new(0.3, 0.6, 0.2);
        let m = c.projection_matrix();
        let h = m * nalgebra::Vector4::new(p.x, p.y, p.z, 1.0);
        let (u, v) = c.project(&p).unwrap();
        assert!((h.x / h.z - u).abs() < 1e-9);
        assert!((h.y / h.z - v).abs() < 1e-9);
    }

    #[test]
    fn image_y_grows_downward() {
        let c = cam();
        // A point above the target should land at smaller v (top of image).
        let (_, v_above) = c.project(&V3::new(0.0, 0.8, 0.0)).unwrap();
        let (_, v_below) = c.project(&V3::new(0.0, 0.0, 0.0)).unwrap();
        assert!(v_above < 48.0 && v_below > 48.0);
    }
}
