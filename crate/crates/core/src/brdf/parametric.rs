use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::coords::{canonical_directions, phi_d_node, theta_d_node, theta_h_node};
use super::coords::{PHI_D_BINS, TABLE_LEN, THETA_D_BINS};
use super::table::Brdf;
use crate::geometry::Vec3;
use crate::{Error, Result};

/// Lower bound applied to the light and view cosines inside the specular
/// terms. Keeps tables finite at and below the horizon.
pub const COS_FLOOR: f64 = 1e-2;

/// Closed-form reflectance models used to synthesise dictionary atoms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum ParametricModel {
    Lambertian {
        albedo: f64,
    },
    /// Isotropic Ward: `ρd/π + ρs · exp(-tan²θh/α²) / (4π α² √(cosθi cosθo))`.
    Ward {
        diffuse: f64,
        specular: f64,
        roughness: f64,
    },
    /// Cook-Torrance with a Beckmann distribution, Schlick Fresnel and the
    /// V-cavity shadowing term.
    CookTorrance {
        diffuse: f64,
        specular: f64,
        roughness: f64,
        f0: f64,
    },
}

impl ParametricModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        match *self {
            ParametricModel::Lambertian { albedo } => {
                if !finite(&[albedo]) || albedo < 0.0 {
                    return bad("lambertian albedo must be finite and >= 0");
                }
            }
            ParametricModel::Ward { diffuse, specular, roughness } => {
                if !finite(&[diffuse, specular, roughness]) {
                    return bad("ward parameters must be finite");
                }
                if diffuse < 0.0 || specular < 0.0 {
                    return bad("ward diffuse and specular must be >= 0");
                }
                if roughness <= 0.0 {
                    return bad("ward roughness must be > 0");
                }
            }
            ParametricModel::CookTorrance { diffuse, specular, roughness, f0 } => {
                if !finite(&[diffuse, specular, roughness, f0]) {
                    return bad("cook-torrance parameters must be finite");
                }
                if diffuse < 0.0 || specular < 0.0 {
                    return bad("cook-torrance diffuse and specular must be >= 0");
                }
                if roughness <= 0.0 {
                    return bad("cook-torrance roughness must be > 0");
                }
                if !(0.0..=1.0).contains(&f0) {
                    return bad("cook-torrance f0 must lie in [0, 1]");
                }
            }
        }
        Ok(())
    }

    /// Short identifier used as the generated table's name.
    pub fn label(&self) -> String {
        match *self {
            ParametricModel::Lambertian { albedo } => format!("lambertian(albedo={albedo})"),
            ParametricModel::Ward { diffuse, specular, roughness } => {
                format!("ward(rd={diffuse},rs={specular},a={roughness})")
            }
            ParametricModel::CookTorrance { diffuse, specular, roughness, f0 } => {
                format!("cook-torrance(kd={diffuse},ks={specular},m={roughness},f0={f0})")
            }
        }
    }

    /// Closed-form value for unit `light`, `view` and `normal`.
    ///
    /// Cosines entering the specular denominators are floored at
    /// [`COS_FLOOR`]; the result is finite and non-negative everywhere.
    pub fn evaluate(&self, light: &Vec3, view: &Vec3, normal: &Vec3) -> f64 {
        let half = (light + view).normalize();
        let cos_i = normal.dot(light).max(COS_FLOOR);
        let cos_o = normal.dot(view).max(COS_FLOOR);
        let cos_h = normal.dot(&half).clamp(1e-12, 1.0);
        let cos_d = half.dot(light).clamp(0.0, 1.0);
        match *self {
            ParametricModel::Lambertian { albedo } => albedo / PI,
            ParametricModel::Ward { diffuse, specular, roughness } => {
                let a2 = roughness * roughness;
                let tan2 = (1.0 - cos_h * cos_h) / (cos_h * cos_h);
                let lobe = (-tan2 / a2).exp() / (4.0 * PI * a2 * (cos_i * cos_o).sqrt());
                diffuse / PI + specular * lobe
            }
            ParametricModel::CookTorrance { diffuse, specular, roughness, f0 } => {
                let m2 = roughness * roughness;
                let c2 = cos_h * cos_h;
                let d = (-(1.0 - c2) / (c2 * m2)).exp() / (PI * m2 * c2 * c2);
                let f = f0 + (1.0 - f0) * (1.0 - cos_d).powi(5);
                let g = if cos_d > 0.0 {
                    (2.0 * cos_h * cos_o / cos_d).min(2.0 * cos_h * cos_i / cos_d).min(1.0)
                } else {
                    0.0
                };
                diffuse / PI + specular * f * d * g / (4.0 * cos_i * cos_o)
            }
        }
    }
}

/// Fills a table by evaluating `model` at every grid node's canonical
/// direction pair; all channels receive the same values.
pub fn generate_parametric(model: &ParametricModel, channels: usize) -> Result<Brdf> {
    model.validate()?;
    if channels == 0 {
        return Err(Error::InvalidParameter("channel count must be >= 1".into()));
    }
    let normal = Vec3::z();
    let mut samples = vec![0.0; TABLE_LEN];
    let row = THETA_D_BINS * PHI_D_BINS;
    samples.par_chunks_mut(row).enumerate().for_each(|(ih, chunk)| {
        let theta_h = theta_h_node(ih);
        for id in 0..THETA_D_BINS {
            let theta_d = theta_d_node(id);
            for ip in 0..PHI_D_BINS {
                let (light, view) = canonical_directions(theta_h, theta_d, phi_d_node(ip));
                chunk[id * PHI_D_BINS + ip] = model.evaluate(&light, &view, &normal);
            }
        }
    });
    let data = if channels == 1 { vec![samples] } else { vec![samples; channels] };
    Brdf::from_channels(model.label(), data)
}
