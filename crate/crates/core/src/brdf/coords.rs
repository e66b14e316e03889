use std::f64::consts::{FRAC_PI_2, PI};

use crate::geometry::{angle_between, check_unit, Vec3};
use crate::{Error, Result};

pub const THETA_H_BINS: usize = 90;
pub const THETA_D_BINS: usize = 90;
pub const PHI_D_BINS: usize = 180;
/// Samples per channel.
pub const TABLE_LEN: usize = THETA_H_BINS * THETA_D_BINS * PHI_D_BINS;

/// Rusinkiewicz half/difference angles with `φd` folded into `[0, π)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfAngleCoords {
    pub theta_h: f64,
    pub theta_d: f64,
    pub phi_d: f64,
}

#[inline]
pub fn cell_index(theta_h: usize, theta_d: usize, phi_d: usize) -> usize {
    (theta_h * THETA_D_BINS + theta_d) * PHI_D_BINS + phi_d
}

/// `θh` of grid row `i` under the square-root warp.
pub fn theta_h_node(i: usize) -> f64 {
    let t = i as f64 / THETA_H_BINS as f64;
    t * t * FRAC_PI_2
}

pub fn theta_d_node(j: usize) -> f64 {
    j as f64 * FRAC_PI_2 / THETA_D_BINS as f64
}

pub fn phi_d_node(k: usize) -> f64 {
    k as f64 * PI / PHI_D_BINS as f64
}

/// Continuous grid positions (in cells) of a coordinate triple.
pub(crate) fn grid_position(c: &HalfAngleCoords) -> [f64; 3] {
    let th = (c.theta_h.max(0.0) / FRAC_PI_2).sqrt() * THETA_H_BINS as f64;
    let td = c.theta_d.max(0.0) / FRAC_PI_2 * THETA_D_BINS as f64;
    let pd = c.phi_d / PI * PHI_D_BINS as f64;
    [th, td, pd]
}

/// Validating front end of [`half_angle_unchecked`].
pub fn to_half_angle(light: &Vec3, view: &Vec3, normal: &Vec3) -> Result<HalfAngleCoords> {
    check_unit("light", light)?;
    check_unit("view", view)?;
    check_unit("normal", normal)?;
    if normal.dot(light) <= 0.0 {
        return Err(Error::BackFacing("normal·light <= 0"));
    }
    if normal.dot(view) <= 0.0 {
        return Err(Error::BackFacing("normal·view <= 0"));
    }
    Ok(half_angle_unchecked(light, view, normal))
}

/// Half-angle coordinates of a configuration, without input checks.
///
/// `φd` is the azimuth of the light about the half vector, measured from the
/// projection of the normal onto the plane orthogonal to the half vector.
/// When that projection vanishes (`θh = 0`) the global x axis (or y axis if x is
/// parallel to the half vector) is projected instead.
pub fn half_angle_unchecked(light: &Vec3, view: &Vec3, normal: &Vec3) -> HalfAngleCoords {
    let half = (light + view).normalize();
    let theta_h = angle_between(&half, normal);
    let theta_d = angle_between(light, &half);

    let project = |a: &Vec3| a - half * half.dot(a);
    let mut reference = project(normal);
    if reference.norm() < 1e-10 {
        reference = project(&Vec3::x());
        if reference.norm() < 1e-6 {
            reference = project(&Vec3::y());
        }
    }
    let reference = reference.normalize();
    let binormal = half.cross(&reference);
    let mut phi_d = light.dot(&binormal).atan2(light.dot(&reference)).rem_euclid(PI);
    if phi_d >= PI {
        phi_d = 0.0;
    }
    HalfAngleCoords { theta_h, theta_d, phi_d }
}

/// Canonical `(light, view)` pair for a grid node, with the normal at +z and the
/// half vector in the xz plane.
pub fn canonical_directions(theta_h: f64, theta_d: f64, phi_d: f64) -> (Vec3, Vec3) {
    let (sh, ch) = theta_h.sin_cos();
    let (sd, cd) = theta_d.sin_cos();
    let (sp, cp) = phi_d.sin_cos();
    let d = Vec3::new(sd * cp, sd * sp, cd);
    // Rotate the difference vector about y by θh, taking +z onto the half vector.
    let light = Vec3::new(d.x * ch + d.z * sh, d.y, -d.x * sh + d.z * ch);
    let half = Vec3::new(sh, 0.0, ch);
    let view = half * (2.0 * half.dot(&light)) - light;
    (light, view)
}
