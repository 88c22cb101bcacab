//! Rigid object field. Queries are pulled back into the object's canonical
//! frame by the inverse of its per-frame rigid pose, so density is a function
//! of canonical position only; appearance may vary per frame through latents.

use rand::Rng;

use super::encoding::PosEncoding;
use super::mlp::{Mlp, MlpCache};
use super::real::Real;
use super::FieldConfig;
use crate::geometry::{RigidPose, V3};

#[derive(Debug, Clone)]
pub struct ObjectFrameCtx {
    pub inv: RigidPose,
}

impl ObjectFrameCtx {
    pub fn new(pose: &RigidPose) -> Self {
        ObjectFrameCtx { inv: pose.inverse() }
    }
}

/// Scratch for one object field query; see `HumanSample`.
#[derive(Debug, Clone, Default)]
pub struct ObjectSample<T: Real> {
    frame: usize,
    dens_in: Vec<T>,
    dens_cache: MlpCache<T>,
    sigma_pre: T,
    color_in: Vec<T>,
    color_cache: MlpCache<T>,
    rgb: [T; 3],
    d_color_in: Vec<T>,
    d_dens_out: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectGrads<T: Real> {
    pub density: Vec<T>,
    pub color: Vec<T>,
    pub latents: Vec<T>,
}

impl<T: Real> ObjectGrads<T> {
    pub fn zeros(field: &ObjectField<T>) -> Self {
        ObjectGrads {
            density: vec![T::zero(); field.density.params.len()],
            color: vec![T::zero(); field.color.params.len()],
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
        for g in self.latents.iter_mut() {
            *g = T::zero();
        }
    }

    pub fn add(&mut self, other: &Self) {
        super::real::axpy(&mut self.density, T::one(), &other.density);
        super::real::axpy(&mut self.color, T::one(), &other.color);
        super::real::axpy(&mut self.latents, T::one(), &other.latents);
    }
}

#[derive(Debug, Clone)]
pub struct ObjectField<T: Real> {
    pub pos_enc: PosEncoding,
    pub dir_enc: PosEncoding,
    pub density: Mlp<T>,
    pub color: Mlp<T>,
    pub latents: Vec<T>,
    pub latent_dim: usize,
    pub feat_dim: usize,
    pub num_frames: usize,
}

impl<T: Real> ObjectField<T> {
    pub fn new<R: Rng>(cfg: &FieldConfig, num_frames: usize, rng: &mut R) -> Self {
        ObjectField {
            pos_enc: PosEncoding::new(cfg.pos_levels),
            dir_enc: PosEncoding::new(cfg.dir_levels),
            density: Mlp::init(&cfg.density_widths(), rng, false),
            color: Mlp::init(&cfg.color_widths(), rng, true),
            latents: vec![T::zero(); num_frames * cfg.latent_dim],
            latent_dim: cfg.latent_dim,
            feat_dim: cfg.feat_dim,
            num_frames,
        }
    }

    pub fn canonical_point(&self, ctx: &ObjectFrameCtx, x: &V3) -> V3 {
        ctx.inv.apply(x)
    }

    /// Density in the canonical frame, for regularizers and mesh extraction.
    pub fn density_canonical(&self, xc: &V3, s: &mut ObjectSample<T>) -> T {
        let xc = [T::fr(xc.x), T::fr(xc.y), T::fr(xc.z)];
        self.pos_enc.encode(&xc, &mut s.dens_in);
        let dens_out = self.density.forward(&s.dens_in, &mut s.dens_cache);
        s.sigma_pre = dens_out[0];
        super::real::softplus(s.sigma_pre)
    }

    pub fn eval(
        &self,
        ctx: &ObjectFrameCtx,
        frame: usize,
        x: &V3,
        dir_encoded: &[T],
        s: &mut ObjectSample<T>,
    ) -> (T, [T; 3]) {
        debug_assert!(frame < self.num_frames);
        debug_assert_eq!(dir_encoded.len(), self.dir_enc.out_dim(3));
        s.frame = frame;
        let xc = self.canonical_point(ctx, x);
        let xc = [T::fr(xc.x), T::fr(xc.y), T::fr(xc.z)];
        self.pos_enc.encode(&xc, &mut s.dens_in);
        let dens_out = self.density.forward(&s.dens_in, &mut s.dens_cache);
        s.sigma_pre = dens_out[0];
        let sigma = super::real::softplus(s.sigma_pre);

        let cin = self.feat_dim + dir_encoded.len() + self.latent_dim;
        s.color_in.resize(cin, T::zero());
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

    /// Gradient of a canonical density query alone (no color pass).
    pub fn backward_density(&self, s: &mut ObjectSample<T>, d_sigma: T, g: &mut ObjectGrads<T>) {
        s.d_dens_out.resize(1 + self.feat_dim, T::zero());
        for v in s.d_dens_out.iter_mut() {
            *v = T::zero();
        }
        s.d_dens_out[0] = d_sigma * super::real::sigmoid(s.sigma_pre);
        self.density
            .backward(&mut s.dens_cache, &s.d_dens_out, &mut g.density, None);
    }

    pub fn backward(&self, s: &mut ObjectSample<T>, d_sigma: T, d_rgb: [T; 3], g: &mut ObjectGrads<T>) {
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
        self.density
            .backward(&mut s.dens_cache, &s.d_dens_out, &mut g.density, None);
    }
}
