//! Tabulated isotropic BRDFs in the half-angle parameterisation.
//!
//! A table holds `90 × 90 × 180` samples per channel over
//! `(θh, θd, φd)`. The layout and the square-root warp on `θh` follow the MERL
//! convention, so measured files load without resampling.

mod coords;
mod dictionary;
mod merl;
mod metric;
mod parametric;
mod table;

pub use coords::{
    canonical_directions, cell_index, half_angle_unchecked, phi_d_node, theta_d_node, theta_h_node, to_half_angle,
    HalfAngleCoords, PHI_D_BINS, TABLE_LEN, THETA_D_BINS, THETA_H_BINS,
};
pub use dictionary::Dictionary;
pub use merl::{decode_sample, encode_sample, merl_bytes, parse_merl, read_merl, write_merl, MerlLoad, MERL_SCALES};
pub use metric::{incident_cosines, relative_brdf_error, ErrorForm};
pub use parametric::{generate_parametric, ParametricModel, COS_FLOOR};
pub use table::{sampling_functional, Brdf, SamplingFunctional};
