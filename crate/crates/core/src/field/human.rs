//! Dynamic human field. A world-space query point is warped into the
//! canonical (rest-pose) frame by the rigid transform of its nearest posed
//! bone, refined by a small pose-conditioned deformation network, then fed to
//! a density network and a view/latent-conditioned color head.

use rand::Rng;

use super::encoding::PosEncoding;
use super::mlp::{Mlp, MlpCache};
use super::real::Real;
use super::FieldConfig;
use crate::geometry::V3;
use crate::synth::body::{fk, BodyProxy, Fk};
use crate::tracking::BodyParams;

/// Per-frame quantities the field needs to answer queries: the posed and
/// rest-pose skeletons (same shape, zeroed pose and translation) and the
/// flattened joint rotations that condition the deformation network.
#[derive(Debug, Clone)]
pub struct HumanFrameCtx<T: Real> {
    pub posed: Fk,
    pub rest: Fk,
    pub pose_vec: Vec<T>,
}

/// Scratch space for one field query, reused across samples to avoid
/// allocation in the inner training loop. Holds everything `backward` needs.
#[derive(Debug, Clone, Default)]
pub struct HumanSample<T: Real> {
    frame: usize,
    deform_in: Vec<T>,
    deform_cache: MlpCache<T>,
    tanh_out: [T; 3],
    dens_in: Vec<T>,
    dens_cache: MlpCache<T>,
    sigma_pre: T,
    color_in: Vec<T>,
    color_cache: MlpCache<T>,
    rgb: [T; 3],
    d_color_in: Vec<T>,
    d_dens_out: Vec<T>,
    d_dens_in: Vec<T>,
}

/// Gradients for every trainable tensor of the human field, in the same
/// layout as the parameters themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct HumanGrads<T: Real> {
    pub density: Vec<T>,
    pub color: Vec<T>,
    pub deform: Vec<T>,
    pub latents: Vec<T>,
}

impl<T: Real> HumanGrads<T> {
    pub fn zeros(field: &HumanField<T>) -> Self {
        HumanGrads {
            density: vec![T::zero(); field.density.params.len()],
            color: vec![T::zero(); field.color.params.len()],
            deform: vec![T::zero(); field.deform.params.len()],
            latents: vec![T::zero(); field.latents.len()],
        }
    }

    pub fn clear(&mut self) {
        for g in self.density.iter_mut() {
            *g = T::zero();
        }
        for g in self.color.iter_mut() {
            *g = T::zero();
        }
        for g in self.deform.iter_mut() {
            *g = T::zero();
        }
        for g in self.latents.iter_mut() {
            *g = T::zero();
        }
    }

    pub fn add(&mut self, other: &Self) {
        super::real::axpy(&mut self.density, T::one(), &other.density);
        super::real::axpy(&mut self.color, T::one(), &other.color);
        super::real::axpy(&mut self.deform, T::one(), &other.deform);
        super::real::axpy(&mut self.latents, T::one(), &other.latents);
    }
}

#[derive(Debug, Clone)]
pub struct HumanField<T: Real> {
    pub proxy: BodyProxy,
    pub pos_enc: PosEncoding,
    pub dir_enc: PosEncoding,
    pub density: Mlp<T>,
    pub color: Mlp<T>,
    pub deform: Mlp<T>,
    /// Per-frame appearance codes, frame-major; they feed the color head only.
    pub latents: Vec<T>,
    pub latent_dim: usize,
    pub feat_dim: usize,
    pub num_frames: usize,
    pub deform_scale: T,
}

impl<T: Real> HumanField<T> {
    pub fn new<R: Rng>(
        cfg: &FieldConfig,
        proxy: BodyProxy,
        num_frames: usize,
        rng: &mut R,
    ) -> Self {
        let nj = proxy.joints.len();
        HumanField {
            proxy,
            pos_enc: PosEncoding::new(cfg.pos_levels),
            dir_enc: PosEncoding::new(cfg.dir_levels),
            density: Mlp::init(&cfg.density_widths(), rng, false),
            color: Mlp::init(&cfg.color_widths(), rng, true),
            deform: Mlp::init(&cfg.deform_widths(nj), rng, true),
            latents: vec![T::zero(); num_frames * cfg.latent_dim],
            latent_dim: cfg.latent_dim,
            feat_dim: cfg.feat_dim,
            num_frames,
            deform_scale: T::fr(cfg.deform_scale),
        }
    }

    pub fn frame_ctx(&self, body: &BodyParams) -> HumanFrameCtx<T> {
        let rest_params = BodyParams {
            pose: vec![V3::zeros(); body.pose.len()],
            shape: body.shape.clone(),
            translation: V3::zeros(),
        };
        let pose_vec = body
            .pose
            .iter()
            .flat_map(|v| [T::fr(v.x), T::fr(v.y), T::fr(v.z)])
            .collect();
        HumanFrameCtx {
            posed: fk(&self.proxy, body),
            rest: fk(&self.proxy, &rest_params),
            pose_vec,
        }
    }

    /// Maps a world-space point into the canonical frame via the rigid
    /// transform of the nearest posed bone segment. Ties pick the lowest
    /// bone index.
    pub fn warp_to_canonical(&self, ctx: &HumanFrameCtx<T>, x: &V3) -> V3 {
        let mut best_d2 = f64::INFINITY;
        let mut best_parent = 0usize;
        for j in self.proxy.bones() {
            let p = self.proxy.joints[j].parent.expect("bone has parent");
            let d2 = seg_dist2(x, &ctx.posed.pos[p], &ctx.posed.pos[j]);
            if d2 < best_d2 {
                best_d2 = d2;
                best_parent = p;
            }
        }
        let local = ctx.posed.rot[best_parent].transpose() * (x - ctx.posed.pos[best_parent]);
        ctx.rest.pos[best_parent] + ctx.rest.rot[best_parent] * local
    }

    /// Density at world point `x` for `frame`, skipping the color head.
    /// Fills the warp/deform/density caches in `s` exactly as
    /// [`HumanField::eval`] would.
    pub fn density_at(
        &self,
        ctx: &HumanFrameCtx<T>,
        frame: usize,
        x: &V3,
        s: &mut HumanSample<T>,
    ) -> T {
        debug_assert!(frame < self.num_frames);
        s.frame = frame;
        let xc = self.warp_to_canonical(ctx, x);
        let xc = [T::fr(xc.x), T::fr(xc.y), T::fr(xc.z)];

        self.pos_enc.encode(&xc, &mut s.deform_in);
        s.deform_in.extend_from_slice(&ctx.pose_vec);
        let raw = self.deform.forward(&s.deform_in, &mut s.deform_cache);
        let mut xq = xc;
        for i in 0..3 {
            s.tanh_out[i] = raw[i].tanh();
            xq[i] += self.deform_scale * s.tanh_out[i];
        }

        self.pos_enc.encode(&xq, &mut s.dens_in);
        let dens_out = self.density.forward(&s.dens_in, &mut s.dens_cache);
        s.sigma_pre = dens_out[0];
        super::real::softplus(s.sigma_pre)
    }

    /// Density of the canonical field at canonical point `xc`, bypassing the
    /// frame warp and per-frame deformation. This is the view geometry
    /// extraction sees.
    pub fn density_canonical(&self, xc: &V3, s: &mut HumanSample<T>) -> T {
        let xq = [T::fr(xc.x), T::fr(xc.y), T::fr(xc.z)];
        self.pos_enc.encode(&xq, &mut s.dens_in);
        let dens_out = self.density.forward(&s.dens_in, &mut s.dens_cache);
        s.sigma_pre = dens_out[0];
        super::real::softplus(s.sigma_pre)
    }

    /// Density and color at world point `x` for `frame`. `dir_encoded` is the
    /// view direction already passed through [`HumanField::dir_enc`]; it is
    /// shared by every sample on a ray.
    pub fn eval(
        &self,
        ctx: &HumanFrameCtx<T>,
        frame: usize,
        x: &V3,
        dir_encoded: &[T],
        s: &mut HumanSample<T>,
    ) -> (T, [T; 3]) {
        debug_assert_eq!(dir_encoded.len(), self.dir_enc.out_dim(3));
        let sigma = self.density_at(ctx, frame, x, s);

        let cin = self.feat_dim + dir_encoded.len() + self.latent_dim;
        s.color_in.resize(cin, T::zero());
        let dens_out = s.dens_cache.acts.last().expect("density ran");
        s.color_in[..self.feat_dim].copy_from_slice(&dens_out[1..1 + self.feat_dim]);
        s.color_in[self.feat_dim..self.feat_dim + dir_encoded.len()]
            .copy_from_slice(dir_encoded);
        let l0 = frame * self.latent_dim;
        s.color_in[self.feat_dim + dir_encoded.len()..]
            .copy_from_slice(&self.latents[l0..l0 + self.latent_dim]);
        let rgb_pre = self.color.forward(&s.color_in, &mut s.color_cache);
        for i in 0..3 {
            s.rgb[i] = super::real::sigmoid(rgb_pre[i]);
        }
        (sigma, s.rgb)
    }

    /// Accumulates parameter gradients for the query recorded in `s`, given
    /// upstream gradients with respect to its density and color outputs.
    pub fn backward(&self, s: &mut HumanSample<T>, d_sigma: T, d_rgb: [T; 3], g: &mut HumanGrads<T>) {
        let dir_dim = self.dir_enc.out_dim(3);
        let d_out: Vec<T> = (0..3)
            .map(|i| d_rgb[i] * s.rgb[i] * (T::one() - s.rgb[i]))
            .collect();
        s.d_color_in.resize(s.color_in.len(), T::zero());
        for v in s.d_color_in.iter_mut() {
            *v = T::zero();
        }
        self.color
            .backward(&mut s.color_cache, &d_out, &mut g.color, Some(&mut s.d_color_in));
        let l0 = s.frame * self.latent_dim;
        for i in 0..self.latent_dim {
            g.latents[l0 + i] += s.d_color_in[self.feat_dim + dir_dim + i];
        }

        s.d_dens_out.resize(1 + self.feat_dim, T::zero());
        s.d_dens_out[0] = d_sigma * super::real::sigmoid(s.sigma_pre);
        s.d_dens_out[1..].copy_from_slice(&s.d_color_in[..self.feat_dim]);
        self.density_tail_backward(s, g);
    }

    /// Gradients for a density-only query recorded by
    /// [`HumanField::density_at`].
    pub fn backward_density(&self, s: &mut HumanSample<T>, d_sigma: T, g: &mut HumanGrads<T>) {
        s.d_dens_out.resize(1 + self.feat_dim, T::zero());
        for v in s.d_dens_out.iter_mut() {
            *v = T::zero();
        }
        s.d_dens_out[0] = d_sigma * super::real::sigmoid(s.sigma_pre);
        self.density_tail_backward(s, g);
    }

    /// Density → encoding → deformation chain shared by both backward
    /// entry points; expects `s.d_dens_out` to be populated.
    fn density_tail_backward(&self, s: &mut HumanSample<T>, g: &mut HumanGrads<T>) {
        s.d_dens_in.resize(s.dens_in.len(), T::zero());
        for v in s.d_dens_in.iter_mut() {
            *v = T::zero();
        }
        self.density.backward(
            &mut s.dens_cache,
            &s.d_dens_out,
            &mut g.density,
            Some(&mut s.d_dens_in),
        );

        let mut d_xq = [T::zero(); 3];
        self.pos_enc.backward(&s.dens_in, &s.d_dens_in, &mut d_xq);
        let d_deform_out: Vec<T> = (0..3)
            .map(|i| d_xq[i] * self.deform_scale * (T::one() - s.tanh_out[i] * s.tanh_out[i]))
            .collect();
        self.deform
            .backward(&mut s.deform_cache, &d_deform_out, &mut g.deform, None);
    }
}

fn seg_dist2(x: &V3, a: &V3, b: &V3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 {
        ((x - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (x - (a + ab * t)).norm_squared()
}
