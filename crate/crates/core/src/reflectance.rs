//! Sparse non-negative abundance recovery at known normals.
//!
//! `ĉ = argmin_{c>=0} ‖I − B(n̂)c‖² + λ‖c‖₁` per channel, with `B(n̂)` rendered
//! at the estimated normal itself rather than the nearest pre-rendered
//! candidate. Pixels known to share a material can be pooled by stacking their
//! profiles and matrices.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brdf::{Brdf, Dictionary, TABLE_LEN};
use crate::geometry::Vec3;
use crate::maps::{AbundanceMap, ImageStack};
use crate::normals::{pixel_observation, NormalEstimateMap};
use crate::render::{channel_map, render_matrix, LightingRig, PixelObservation};
use crate::solvers::{self, nn_lasso, NnlsSolution};
use crate::{Error, Result};

/// Abundances for one pixel (or pooled group), per observation channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelAbundance {
    pub coefficients: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub kkt_gaps: Vec<f64>,
    pub certified: bool,
}

impl PixelAbundance {
    fn from_solutions(solutions: Vec<NnlsSolution>) -> Self {
        PixelAbundance {
            certified: solutions.iter().all(|s| s.certified),
            residuals: solutions.iter().map(|s| s.residual_norm).collect(),
            kkt_gaps: solutions.iter().map(|s| s.kkt_gap).collect(),
            coefficients: solutions.into_iter().map(|s| s.coefficients).collect(),
        }
    }
}

/// Stacked `(B, y)` per observation channel for a group of pixels.
fn stacked_system(
    group: &[(PixelObservation, Vec3)],
    dict: &Dictionary,
    rig: &LightingRig,
    view: &Vec3,
) -> Result<Vec<(DMatrix<f64>, Vec<f64>)>> {
    let first = &group.first().ok_or_else(|| Error::InvalidParameter("empty pixel group".into()))?.0;
    let channels = first.channels();
    let map = channel_map(channels, dict.channels())?;
    let (q, m) = (rig.len(), dict.len());
    let mut columns: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); m]; channels];
    let mut ys: Vec<Vec<f64>> = vec![Vec::new(); channels];
    for (obs, normal) in group {
        obs.validate()?;
        if obs.lights() != q || obs.channels() != channels {
            return Err(Error::DimensionMismatch("pooled observations must share rig and channels".into()));
        }
        let all: Vec<usize> = (0..q).collect();
        let rows = obs.rows.as_deref().unwrap_or(&all);
        let b = render_matrix(dict, normal, rig, view);
        for (k, &dc) in map.iter().enumerate() {
            for (j, col) in columns[k].iter_mut().enumerate() {
                col.extend(rows.iter().map(|&r| b[dc][j * q + r]));
            }
            ys[k].extend(rows.iter().map(|&r| obs.intensities[k][r]));
        }
    }
    Ok(columns
        .into_iter()
        .zip(ys)
        .map(|(cols, y)| {
            let flat: Vec<f64> = cols.concat();
            (DMatrix::from_column_slice(y.len(), m, &flat), y)
        })
        .collect())
}

/// `‖Bᵀy‖∞`, the scale of the critical regularisation weight.
pub fn lambda_scale(b: &DMatrix<f64>, y: &[f64]) -> f64 {
    let mut h = vec![0.0; b.ncols()];
    solvers::project(b.as_slice(), b.nrows(), y, &mut h);
    h.iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// Per-pixel estimate with an absolute `lambda`.
pub fn estimate_brdf_pixel(
    obs: &PixelObservation,
    normal: &Vec3,
    dict: &Dictionary,
    rig: &LightingRig,
    view: &Vec3,
    lambda: f64,
    tol: f64,
) -> Result<PixelAbundance> {
    estimate_brdf_pooled(&[(obs.clone(), *normal)], dict, rig, view, lambda, tol)
}

/// One abundance vector per channel shared by every pixel of `group`.
pub fn estimate_brdf_pooled(
    group: &[(PixelObservation, Vec3)],
    dict: &Dictionary,
    rig: &LightingRig,
    view: &Vec3,
    lambda: f64,
    tol: f64,
) -> Result<PixelAbundance> {
    let systems = stacked_system(group, dict, rig, view)?;
    let solutions = systems.iter().map(|(b, y)| nn_lasso(b, y, lambda, tol)).collect::<Result<Vec<_>>>()?;
    Ok(PixelAbundance::from_solutions(solutions))
}

/// `Σ_j c_j ρʲ` applied to every dictionary channel.
pub fn reconstruct_brdf(c: &[f64], dict: &Dictionary) -> Result<Brdf> {
    reconstruct_brdf_channels(&vec![c.to_vec(); dict.channels()], dict)
}

/// `Σ_j c_{k,j} ρʲ_k` per channel `k` (gray coefficients use dictionary
/// channel 0).
pub fn reconstruct_brdf_channels(coefficients: &[Vec<f64>], dict: &Dictionary) -> Result<Brdf> {
    let map = channel_map(coefficients.len(), dict.channels())?;
    let mut channels = Vec::with_capacity(coefficients.len());
    for (c, &dc) in coefficients.iter().zip(&map) {
        if c.len() != dict.len() {
            return Err(Error::DimensionMismatch(format!("{} coefficients for {} atoms", c.len(), dict.len())));
        }
        if c.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter("abundances must be finite and >= 0".into()));
        }
        let mut table = vec![0.0; TABLE_LEN];
        for (atom, &w) in dict.atoms().zip(c) {
            if w == 0.0 {
                continue;
            }
            for (t, a) in table.iter_mut().zip(&atom.channels()[dc]) {
                *t += w * a;
            }
        }
        channels.push(table);
    }
    Brdf::from_channels("reconstruction", channels)
}

/// How `λ` is chosen for image reconstructions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "policy", content = "value")]
pub enum LambdaPolicy {
    /// The same absolute weight everywhere.
    Fixed(f64),
    /// `factor × ‖BᵀI‖∞` per pixel and channel.
    Relative(f64),
    /// A relative factor from [`AUTO_LAMBDA_GRID`] picked by held-out-light
    /// prediction error on a sample of pixels.
    #[default]
    Auto,
}

pub const AUTO_LAMBDA_GRID: [f64; 4] = [0.0, 1e-3, 1e-2, 1e-1];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectanceConfig {
    pub lambda: LambdaPolicy,
    pub tol: f64,
    /// Skip pixels whose relative normal residual `E/‖I‖` is above this
    /// quantile of all pixels.
    pub skip_residual_quantile: Option<f64>,
    pub saturation: Option<f64>,
}

impl Default for ReflectanceConfig {
    fn default() -> Self {
        ReflectanceConfig {
            lambda: LambdaPolicy::Auto,
            tol: solvers::DEFAULT_TOL,
            skip_residual_quantile: None,
            saturation: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbundanceEstimate {
    pub map: AbundanceMap,
    /// Relative factor actually used (or the fixed absolute value).
    pub lambda: f64,
    pub solved: usize,
    pub uncertified: usize,
    pub skipped: usize,
}

fn solve_relative(b: &DMatrix<f64>, y: &[f64], factor: f64, tol: f64) -> Result<NnlsSolution> {
    nn_lasso(b, y, factor * lambda_scale(b, y), tol)
}

/// Chooses the relative factor on up to `sample` pixels by holding out every
/// fifth light.
pub fn select_lambda_factor(
    pixels: &[(PixelObservation, Vec3)],
    dict: &Dictionary,
    rig: &LightingRig,
    view: &Vec3,
    tol: f64,
) -> Result<f64> {
    let q = rig.len();
    if q < 10 || pixels.is_empty() {
        return Ok(AUTO_LAMBDA_GRID[1]);
    }
    let held: Vec<usize> = (0..q).filter(|i| i % 5 == 0).collect();
    let kept: Vec<usize> = (0..q).filter(|i| i % 5 != 0).collect();
    let mut errors = [0.0; AUTO_LAMBDA_GRID.len()];
    for (obs, normal) in pixels {
        let map = channel_map(obs.channels(), dict.channels())?;
        let b = render_matrix(dict, normal, rig, view);
        let m = dict.len();
        for (k, &dc) in map.iter().enumerate() {
            let pick = |rows: &[usize]| {
                let mut flat = Vec::with_capacity(rows.len() * m);
                for j in 0..m {
                    flat.extend(rows.iter().map(|&r| b[dc][j * q + r]));
                }
                (
                    DMatrix::from_column_slice(rows.len(), m, &flat),
                    rows.iter().map(|&r| obs.intensities[k][r]).collect::<Vec<_>>(),
                )
            };
            let (bk, yk) = pick(&kept);
            let (bh, yh) = pick(&held);
            for (g, &factor) in AUTO_LAMBDA_GRID.iter().enumerate() {
                let s = solve_relative(&bk, &yk, factor, tol)?;
                let pred = &bh * nalgebra::DVector::from_column_slice(&s.coefficients);
                errors[g] += pred.iter().zip(&yh).map(|(p, y)| (p - y) * (p - y)).sum::<f64>();
            }
        }
    }
    let best =
        (0..errors.len()).min_by(|&a, &b| errors[a].total_cmp(&errors[b]).then(a.cmp(&b))).expect("non-empty grid");
    Ok(AUTO_LAMBDA_GRID[best])
}

/// Abundances for every pixel with a normal estimate.
pub fn estimate_abundances(
    stack: &ImageStack,
    normals: &NormalEstimateMap,
    dict: &Dictionary,
    rig: &LightingRig,
    view: &Vec3,
    config: &ReflectanceConfig,
) -> Result<AbundanceEstimate> {
    stack.validate()?;
    if stack.width != normals.width || stack.height != normals.height {
        return Err(Error::DimensionMismatch("normal map size differs from the images".into()));
    }
    if stack.len() != rig.len() {
        return Err(Error::DimensionMismatch("image count differs from the rig".into()));
    }
    let (w, h) = (stack.width, stack.height);
    let channels = stack.channels;
    channel_map(channels, dict.channels())?;

    // Pixels to solve, in raster order.
    let mut targets: Vec<(usize, f64)> = Vec::new();
    for p in 0..w * h {
        if let Some(e) = &normals.estimates[p] {
            let (x, y) = (p % w, p / w);
            let norm: f64 = stack.profile(x, y).iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
            targets.push((p, if norm > 0.0 { e.residual / norm } else { 0.0 }));
        }
    }
    let mut skipped = 0;
    if let Some(qt) = config.skip_residual_quantile {
        if !(0.0..=1.0).contains(&qt) {
            return Err(Error::InvalidParameter("residual quantile must lie in [0, 1]".into()));
        }
        if !targets.is_empty() {
            let mut sorted: Vec<f64> = targets.iter().map(|t| t.1).collect();
            sorted.sort_by(f64::total_cmp);
            let cut = sorted[((sorted.len() - 1) as f64 * qt).round() as usize];
            let before = targets.len();
            targets.retain(|t| t.1 <= cut);
            skipped = before - targets.len();
        }
    }

    let observe = |p: usize| -> Option<(PixelObservation, Vec3)> {
        let (x, y) = (p % w, p / w);
        let normal = normals.estimates[p].as_ref()?.normal;
        Some((pixel_observation(stack, x, y, config.saturation)?, normal))
    };

    let lambda = match config.lambda {
        LambdaPolicy::Fixed(v) | LambdaPolicy::Relative(v) => {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter("lambda must be finite and >= 0".into()));
            }
            v
        }
        LambdaPolicy::Auto => {
            let stride = (targets.len() / 64).max(1);
            let sample: Vec<_> = targets.iter().step_by(stride).filter_map(|t| observe(t.0)).collect();
            select_lambda_factor(&sample, dict, rig, view, config.tol)?
        }
    };

    let solved: Vec<(usize, Result<Option<PixelAbundance>>)> = targets
        .par_iter()
        .map(|&(p, _)| {
            let (x, y) = (p % w, p / w);
            let Some(group) = observe(p) else { return (p, Ok(None)) };
            let result = (|| {
                let systems = stacked_system(std::slice::from_ref(&group), dict, rig, view)?;
                let sols = systems
                    .iter()
                    .map(|(b, yv)| match config.lambda {
                        LambdaPolicy::Fixed(v) => nn_lasso(b, yv, v, config.tol),
                        _ => solve_relative(b, yv, lambda, config.tol),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Some(PixelAbundance::from_solutions(sols)))
            })()
            .map_err(|e: Error| e.at_pixel(x, y));
            (p, result)
        })
        .collect();

    let mut map = AbundanceMap::zeros(w, h, dict.len(), channels);
    map.lambda = lambda;
    let mut count = 0;
    let mut uncertified = 0;
    for (p, r) in solved {
        let Some(a) = r? else { continue };
        let (x, y) = (p % w, p / w);
        for (k, c) in a.coefficients.iter().enumerate() {
            map.set(x, y, k, c);
            map.set_residual(x, y, k, a.residuals[k]);
        }
        count += 1;
        if !a.certified {
            uncertified += 1;
        }
    }
    Ok(AbundanceEstimate { map, lambda, solved: count, uncertified, skipped })
}
