//! Per-pixel surface normal and spatially-varying BRDF recovery from calibrated
//! photometric stereo image stacks.
//!
//! Every pixel's reflectance is modelled as a non-negative combination of the
//! atoms of a BRDF dictionary. Normals are found by scanning candidate normals
//! on the visible hemisphere (coarse to fine) and picking the one whose
//! rendered dictionary explains the pixel's intensity profile best under a
//! non-negative least-squares fit. Reflectance is then recovered with an
//! L1-regularised non-negative fit at the estimated normal.
//!
//! Module map:
//!
//! * [`brdf`]: tabulated isotropic BRDFs on the half-angle grid, the sampling
//!   functional, MERL files, parametric generators and the relative BRDF error.
//! * [`sampling`]: equi-angular candidate normal sets and cone restriction.
//! * [`render`]: image formation, rendered dictionaries and scene synthesis.
//! * [`solvers`]: NNLS and non-negative lasso with KKT certificates.
//! * [`normals`]: brute force and coarse-to-fine normal search, Lambertian baseline.
//! * [`reflectance`]: per-pixel and pooled abundance estimation.
//! * [`integrate`]: normal field integration into depth.
//! * [`io`]: PFM, image stack manifests, abundance blobs and render caches.

pub mod brdf;
mod error;
pub mod geometry;
pub mod integrate;
pub mod io;
pub mod maps;
pub mod normals;
pub mod reflectance;
pub mod render;
pub mod sampling;
pub mod solvers;

pub use error::{Error, Result};
pub use geometry::Vec3;
