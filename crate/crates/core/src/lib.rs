//! Desk-scale layered human-object capture, end to end: synthetic multi-view
//! scene generation, marker-based energy tracking, two-layer radiance fields
//! with per-frame appearance codes, template-regularized training, pseudo-label
//! segmentation, layered rendering, asset export, and evaluation metrics.
//!
//! Everything is deterministic under a single seed: all randomness flows
//! through stage-namespaced counter-based generators ([`rng`]).

pub mod error;
pub mod export;
pub mod field;
pub mod geometry;
pub mod image;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod pipeline;
pub mod render;
pub mod rng;
pub mod synth;
pub mod tracking;
pub mod train;

pub use error::{Error, Result};
