//! Per-frame body and object state estimation: joint triangulation, body
//! initialization, and joint energy refinement with contact handling.

pub mod bodyfit;
pub mod energy;
pub mod jacobian;
pub mod optimize;
pub mod params;
pub mod silhouette;
pub mod triangulate;

pub use bodyfit::{fit_body_init, BodyFit};
pub use energy::{
    compute_contact_map, energy_total, energy_with_grad, EnergyBreakdown, FrameObservation,
    TrackerAssets,
};
pub use jacobian::{BodyGrad, FkJac, ObjectGrad};
pub use optimize::{joint_optimize, OptimizeResult};
pub use params::{BodyParams, ContactMap, TrackingConfig};
pub use silhouette::{downsample_mask, silhouette_camera, splat_silhouette};
pub use triangulate::{triangulate_joints, TriangulatedJoints};
