use std::sync::OnceLock;

use super::coords::{canonical_directions, phi_d_node, theta_d_node, theta_h_node};
use super::coords::{PHI_D_BINS, TABLE_LEN, THETA_D_BINS, THETA_H_BINS};
use super::dictionary::Dictionary;
use super::table::Brdf;
use crate::{Error, Result};

/// `max(0, cos θi)` per grid cell, with `θi` the incident elevation of the
/// cell's canonical direction pair.
pub fn incident_cosines() -> &'static [f64] {
    static COSINES: OnceLock<Vec<f64>> = OnceLock::new();
    COSINES.get_or_init(|| {
        let mut out = Vec::with_capacity(TABLE_LEN);
        for ih in 0..THETA_H_BINS {
            for id in 0..THETA_D_BINS {
                for ip in 0..PHI_D_BINS {
                    let (light, _) = canonical_directions(theta_h_node(ih), theta_d_node(id), phi_d_node(ip));
                    out.push(light.z.max(0.0));
                }
            }
        }
        out
    })
}

/// Cosine-weighted RMS difference between two tables with unit cell weights,
/// averaged over channels.
pub fn relative_brdf_error(estimate: &Brdf, truth: &Brdf) -> Result<f64> {
    if estimate.channel_count() != truth.channel_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} vs {} channels",
            estimate.channel_count(),
            truth.channel_count()
        )));
    }
    let cosines = incident_cosines();
    let total: f64 = estimate
        .channels()
        .iter()
        .zip(truth.channels())
        .map(|(e, t)| {
            let sum: f64 = e
                .iter()
                .zip(t)
                .zip(cosines)
                .map(|((a, b), c)| {
                    let d = (a - b) * c;
                    d * d
                })
                .sum();
            (sum / TABLE_LEN as f64).sqrt()
        })
        .sum();
    Ok(total / estimate.channel_count() as f64)
}

/// [`relative_brdf_error`] of `Σ_j c_j ρʲ` against a fixed truth as a
/// quadratic form in `c`, so many coefficient vectors can be scored without
/// building tables.
#[derive(Debug, Clone)]
pub struct ErrorForm {
    atoms: usize,
    /// Per channel: weighted Gram (row-major `M × M`), cross terms with the
    /// truth, and the truth's weighted energy.
    channels: Vec<(Vec<f64>, Vec<f64>, f64)>,
}

impl ErrorForm {
    pub fn new(dict: &Dictionary, truth: &Brdf) -> Result<Self> {
        if dict.channels() != truth.channel_count() {
            return Err(Error::DimensionMismatch(format!("{} vs {} channels", dict.channels(), truth.channel_count())));
        }
        let cosines = incident_cosines();
        let m = dict.len();
        let weighted_dot =
            |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).zip(cosines).map(|((x, y), c)| x * y * c * c).sum() };
        let channels = (0..truth.channel_count())
            .map(|k| {
                let cols: Vec<&[f64]> = dict.atoms().map(|a| a.channels()[k].as_slice()).collect();
                let t = truth.channels()[k].as_slice();
                let mut gram = vec![0.0; m * m];
                for i in 0..m {
                    for j in i..m {
                        let v = weighted_dot(cols[i], cols[j]);
                        gram[i * m + j] = v;
                        gram[j * m + i] = v;
                    }
                }
                let cross = cols.iter().map(|c| weighted_dot(c, t)).collect();
                (gram, cross, weighted_dot(t, t))
            })
            .collect();
        Ok(ErrorForm { atoms: m, channels })
    }

    /// Error for per-channel coefficients (a single gray vector applies to
    /// every channel).
    pub fn error(&self, coefficients: &[Vec<f64>]) -> Result<f64> {
        if coefficients.len() != 1 && coefficients.len() != self.channels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficient vectors for {} channels",
                coefficients.len(),
                self.channels.len()
            )));
        }
        let m = self.atoms;
        let mut total = 0.0;
        for (k, (gram, cross, tt)) in self.channels.iter().enumerate() {
            let c = &coefficients[k.min(coefficients.len() - 1)];
            if c.len() != m {
                return Err(Error::DimensionMismatch(format!("{} coefficients for {m} atoms", c.len())));
            }
            let mut sum = *tt;
            for i in 0..m {
                let gi: f64 = (0..m).map(|j| gram[i * m + j] * c[j]).sum();
                sum += c[i] * gi - 2.0 * c[i] * cross[i];
            }
            total += (sum.max(0.0) / TABLE_LEN as f64).sqrt();
        }
        Ok(total / self.channels.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brdf::{generate_parametric, ParametricModel};

    #[test]
    fn error_form_matches_table_error() {
        let atoms: Vec<Brdf> = [0.1, 0.3]
            .iter()
            .map(|&a| {
                generate_parametric(&ParametricModel::Ward { diffuse: 0.2, specular: 0.4, roughness: a }, 1).unwrap()
            })
            .chain(std::iter::once(generate_parametric(&ParametricModel::Lambertian { albedo: 0.5 }, 1).unwrap()))
            .collect();
        let dict = Dictionary::new(atoms).unwrap();
        let truth =
            generate_parametric(&ParametricModel::Ward { diffuse: 0.25, specular: 0.3, roughness: 0.2 }, 1).unwrap();
        let form = ErrorForm::new(&dict, &truth).unwrap();
        for c in [vec![0.0, 0.0, 0.0], vec![0.3, 0.5, 0.1], vec![1.0, 0.0, 2.0]] {
            let mut table = vec![0.0; TABLE_LEN];
            for (a, w) in dict.atoms().zip(&c) {
                for (t, v) in table.iter_mut().zip(&a.channels()[0]) {
                    *t += w * v;
                }
            }
            let direct = relative_brdf_error(&Brdf::from_channels("mix", vec![table]).unwrap(), &truth).unwrap();
            let quick = form.error(&[c]).unwrap();
            assert!((direct - quick).abs() <= 1e-9 * direct.max(1e-3), "{direct} vs {quick}");
        }
    }
}
