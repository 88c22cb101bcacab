//! Differentiable soft silhouettes: world points splatted with separable
//! Gaussian footprints, composed as S = 1 - exp(-sum of splats).

use crate::geometry::{Camera, V3};
use crate::image::{ImageGray, Mask};

/// Camera with intrinsics rescaled to a square silhouette resolution.
pub fn silhouette_camera(cam: &Camera, res: usize) -> Camera {
    let sx = res as f64 / cam.width as f64;
    let sy = res as f64 / cam.height as f64;
    Camera {
        pose: cam.pose.clone(),
        fx: cam.fx * sx,
        fy: cam.fy * sy,
        cx: cam.cx * sx,
        cy: cam.cy * sy,
        width: res,
        height: res,
    }
}

/// Area-weighted box downsample of a binary mask to `res` x `res`, in [0,1].
pub fn downsample_mask(mask: &Mask, res: usize) -> ImageGray {
    let mut out = ImageGray::new(res, res);
    let sx = mask.width as f64 / res as f64;
    let sy = mask.height as f64 / res as f64;
    for y in 0..res {
        let y0 = y as f64 * sy;
        let y1 = y0 + sy;
        for x in 0..res {
            let x0 = x as f64 * sx;
            let x1 = x0 + sx;
            let mut acc = 0.0;
            let iy0 = y0.floor() as usize;
            let iy1 = (y1.ceil() as usize).min(mask.height);
            let ix0 = x0.floor() as usize;
            let ix1 = (x1.ceil() as usize).min(mask.width);
            for sy_i in iy0..iy1 {
                let hy = (y1.min(sy_i as f64 + 1.0) - y0.max(sy_i as f64)).max(0.0);
                for sx_i in ix0..ix1 {
                    if mask.get(sx_i, sy_i) {
                        let hx = (x1.min(sx_i as f64 + 1.0) - x0.max(sx_i as f64)).max(0.0);
                        acc += hx * hy;
                    }
                }
            }
            out.set(x, y, acc / (sx * sy));
        }
    }
    out
}

struct Splat {
    /// First covered pixel index and shifted 1D kernel values, per axis.
    x0: usize,
    gx: Vec<f64>,
    y0: usize,
    gy: Vec<f64>,
    /// Raw (unshifted) Gaussian values, needed for the derivative.
    rx: Vec<f64>,
    ry: Vec<f64>,
    /// Pixel-center offsets from the projected point.
    dx: Vec<f64>,
    dy: Vec<f64>,
    point: usize,
}

fn axis_kernel(center: f64, res: usize, sigma: f64, truncate: f64) -> (usize, Vec<f64>, Vec<f64>, Vec<f64>) {
    let r = sigma * truncate;
    let shift = (-0.5 * truncate * truncate).exp();
    let lo = ((center - 0.5 - r).ceil().max(0.0)) as usize;
    let hi = ((center - 0.5 + r).floor()).min(res as f64 - 1.0);
    let mut g = Vec::new();
    let mut raw = Vec::new();
    let mut d = Vec::new();
    if hi < 0.0 {
        return (0, g, raw, d);
    }
    let hi = hi as usize;
    for x in lo..=hi {
        let dx = (x as f64 + 0.5) - center;
        let rv = (-0.5 * (dx / sigma) * (dx / sigma)).exp();
        g.push((rv - shift).max(0.0));
        raw.push(rv);
        d.push(dx);
    }
    (lo, g, raw, d)
}

fn build_splats(points: &[V3], cam: &Camera, sigma: f64, truncate: f64) -> Vec<Splat> {
    let mut splats = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let c = cam.pose.apply(p);
        if c.z <= 1e-9 {
            continue;
        }
        let u = cam.fx * c.x / c.z + cam.cx;
        let v = cam.fy * c.y / c.z + cam.cy;
        let (x0, gx, rx, dx) = axis_kernel(u, cam.width, sigma, truncate);
        let (y0, gy, ry, dy) = axis_kernel(v, cam.height, sigma, truncate);
        if gx.is_empty() || gy.is_empty() {
            continue;
        }
        splats.push(Splat {
            x0,
            gx,
            y0,
            gy,
            rx,
            ry,
            dx,
            dy,
            point: i,
        });
    }
    splats
}

/// Soft union silhouette of the given world points.
pub fn splat_silhouette(points: &[V3], cam: &Camera, sigma: f64, truncate: f64) -> ImageGray {
    let mut acc = vec![0.0f64; cam.width * cam.height];
    for s in build_splats(points, cam, sigma, truncate) {
        for (yi, gy) in s.gy.iter().enumerate() {
            let row = (s.y0 + yi) * cam.width;
            for (xi, gx) in s.gx.iter().enumerate() {
                acc[row + s.x0 + xi] += gx * gy;
            }
        }
    }
    let mut img = ImageGray::new(cam.width, cam.height);
    for (o, a) in img.pixels.iter_mut().zip(&acc) {
        *o = 1.0 - (-a).exp();
    }
    img
}

/// Sum-of-squares silhouette error against `target` plus its gradient with
/// respect to every world point.
pub fn silhouette_sse_grad(
    points: &[V3],
    cam: &Camera,
    sigma: f64,
    truncate: f64,
    target: &ImageGray,
) -> (f64, Vec<V3>) {
    assert_eq!(target.width, cam.width);
    assert_eq!(target.height, cam.height);
    let splats = build_splats(points, cam, sigma, truncate);
    let mut acc = vec![0.0f64; cam.width * cam.height];
    for s in &splats {
        for (yi, gy) in s.gy.iter().enumerate() {
            let row = (s.y0 + yi) * cam.width;
            for (xi, gx) in s.gx.iter().enumerate() {
                acc[row + s.x0 + xi] += gx * gy;
            }
        }
    }
    let mut sse = 0.0;
    // dE/dA per pixel: 2 (S - I) exp(-A), with S = 1 - exp(-A).
    let mut w = vec![0.0f64; acc.len()];
    for (i, a) in acc.iter().enumerate() {
        let e = (-a).exp();
        let s = 1.0 - e;
        let d = s - target.pixels[i];
        sse += d * d;
        w[i] = 2.0 * d * e;
    }
    let inv_s2 = 1.0 / (sigma * sigma);
    let mut grads = vec![V3::zeros(); points.len()];
    for s in &splats {
        let mut du = 0.0;
        let mut dv = 0.0;
        for (yi, gy) in s.gy.iter().enumerate() {
            let row = (s.y0 + yi) * cam.width;
            for (xi, gx) in s.gx.iter().enumerate() {
                let wi = w[row + s.x0 + xi];
                if wi != 0.0 {
                    // d gx~/du = dx/sigma^2 * raw_gx (shift is constant).
                    du += wi * s.dx[xi] * inv_s2 * s.rx[xi] * gy;
                    dv += wi * s.dy[yi] * inv_s2 * s.ry[yi] * gx;
                }
            }
        }
        let p = points[s.point];
        let c = cam.pose.apply(&p);
        let r = &cam.pose.rotation;
        let r0 = V3::new(r[(0, 0)], r[(0, 1)], r[(0, 2)]);
        let r1 = V3::new(r[(1, 0)], r[(1, 1)], r[(1, 2)]);
        let r2 = V3::new(r[(2, 0)], r[(2, 1)], r[(2, 2)]);
        let du_dp = (r0 * c.z - r2 * c.x) * (cam.fx / (c.z * c.z));
        let dv_dp = (r1 * c.z - r2 * c.y) * (cam.fy / (c.z * c.z));
        grads[s.point] += du_dp * du + dv_dp * dv;
    }
    (sse, grads)
}
