//! Two-layer radiance fields: a pose-conditioned dynamic human field and a
//! rigid canonical object field, with per-frame appearance latents and exact
//! reverse-mode gradients. Math is generic over [`Real`] so training runs in
//! f32 while verification runs in f64.

pub mod checkpoint;
pub mod encoding;
pub mod human;
pub mod mlp;
pub mod object;
pub mod real;

pub use encoding::PosEncoding;
pub use human::{HumanField, HumanFrameCtx, HumanGrads, HumanSample};
pub use mlp::{param_count, Mlp, MlpCache};
pub use object::{ObjectField, ObjectFrameCtx, ObjectGrads, ObjectSample};
pub use real::{sigmoid, softplus, Real};

use serde::{Deserialize, Serialize};

/// The trained scene model: a dynamic human layer and a rigid object layer,
/// each carrying its own per-frame appearance latents.
#[derive(Debug, Clone)]
pub struct LayeredField<T: Real> {
    pub human: HumanField<T>,
    pub object: ObjectField<T>,
}

/// Architecture hyperparameters shared by both fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldConfig {
    pub pos_levels: usize,
    pub dir_levels: usize,
    pub density_hidden: Vec<usize>,
    pub color_hidden: Vec<usize>,
    pub deform_hidden: Vec<usize>,
    pub feat_dim: usize,
    pub latent_dim: usize,
    /// Deformation offsets are tanh-bounded to this many scene units.
    pub deform_scale: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            pos_levels: 6,
            dir_levels: 4,
            density_hidden: vec![64, 64, 64, 64],
            color_hidden: vec![32, 32],
            deform_hidden: vec![32, 32],
            feat_dim: 16,
            latent_dim: 8,
            deform_scale: 0.1,
        }
    }
}

impl FieldConfig {
    pub fn pos_dim(&self) -> usize {
        PosEncoding::new(self.pos_levels).out_dim(3)
    }

    pub fn dir_dim(&self) -> usize {
        PosEncoding::new(self.dir_levels).out_dim(3)
    }

    pub fn density_widths(&self) -> Vec<usize> {
        let mut w = vec![self.pos_dim()];
        w.extend_from_slice(&self.density_hidden);
        w.push(1 + self.feat_dim);
        w
    }

    pub fn color_widths(&self) -> Vec<usize> {
        let mut w = vec![self.feat_dim + self.dir_dim() + self.latent_dim];
        w.extend_from_slice(&self.color_hidden);
        w.push(3);
        w
    }

    pub fn deform_widths(&self, num_joints: usize) -> Vec<usize> {
        let mut w = vec![self.pos_dim() + 3 * num_joints];
        w.extend_from_slice(&self.deform_hidden);
        w.push(3);
        w
    }
}
