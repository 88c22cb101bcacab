//! File formats: netpbm images, OBJ meshes, CSV tables, JSON manifests.

pub mod obj;
pub mod pnm;

pub use obj::{read_obj, write_obj};
pub use pnm::{read_pam2, read_pgm, read_ppm, write_pam2, write_pgm, write_pgm_mask, write_png, write_ppm};
