//! Double-precision geometric core: rigid poses, cameras, rays, triangle
//! meshes with watertight inside/outside queries, and rigid registration.

pub mod camera;
pub mod intersect;
pub mod mesh;
pub mod pose;
pub mod ray;
pub mod registration;

pub use camera::Camera;
pub use intersect::{point_segment_distance, point_triangle_distance, ray_triangle, MeshHit};
pub use mesh::{point_inside_mesh, InsideTester, TriMesh};
pub use pose::{
    axis_angle_to_matrix, geodesic_angle, matrix_to_axis_angle, rotation_jacobian, RigidPose,
};
pub use ray::{Aabb, Ray};
pub use registration::{icp_rigid, umeyama_rigid_fit, IcpResult, MarkerSet, RigidFit};

pub type V3 = nalgebra::Vector3<f64>;
pub type M3 = nalgebra::Matrix3<f64>;

/// Default tolerance for geometric predicates (intersections, degeneracy).
pub const GEOM_EPS: f64 = 1e-9;
