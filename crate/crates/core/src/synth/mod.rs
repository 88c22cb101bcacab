//! Deterministic synthetic multi-view scene generation with full ground
//! truth: capsule-skeleton human, rigid textured object, ring of pinhole
//! cameras, optical-style markers.

pub mod body;
pub mod render;
pub mod scene;
pub mod templates;

pub use body::{
    body_aabb, capsules, fk, surface_sites, BodyProxy, Capsule, Fk, Joint, SurfaceSite,
};
pub use render::{render_view, RenderedView, SceneGeometry, Subset};
pub use scene::{
    attach_markers, default_spec, generate_scene, observe_markers, scene_aabb, FrameTruth,
    SceneData, SceneSpec,
};
pub use templates::{cuboid, icosphere, template_by_id};
