//! Small vector helpers shared by the rendering and search code.

use crate::{Error, Result};

pub type Vec3 = nalgebra::Vector3<f64>;

/// Inputs whose norm deviates from one by more than this are rejected.
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// Orthographic camera looking down -z; the view vector points at the camera.
pub fn default_view() -> Vec3 {
    Vec3::new(0.0, 0.0, 1.0)
}

pub fn check_unit(what: &'static str, v: &Vec3) -> Result<()> {
    if !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    let norm = v.norm();
    if (norm - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::NotUnit { what, norm });
    }
    Ok(())
}

/// Angle between two vectors in radians, accurate near 0 and π.
pub fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

pub fn angle_between_deg(a: &Vec3, b: &Vec3) -> f64 {
    angle_between(a, b).to_degrees()
}

/// Unit vector from polar angle `theta` (measured from +z) and azimuth `phi`.
pub fn from_spherical(theta: f64, phi: f64) -> Vec3 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vec3::new(st * cp, st * sp, ct)
}
