use std::fmt::Write as _;
use std::path::Path;

use dictstereo::brdf::{Dictionary, ErrorForm};
use dictstereo::geometry::angle_between_deg;
use dictstereo::normals::{estimate_normal_c2f, estimate_normal_lambertian, Schedule};
use dictstereo::reflectance::{estimate_brdf_pixel, lambda_scale, LambdaPolicy, AUTO_LAMBDA_GRID};
use dictstereo::render::{
    random_cap_direction, render_matrix, render_pixel, LightingRig, PixelObservation, RenderedPyramid,
};
use dictstereo::Vec3;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::outputs::{prepare_dir, OutputLog};
use crate::plot::{bar_chart, line_chart, Series};
use crate::reconstruct::Stats;
use crate::{CliError, CliResult};

/// One synthetic material experiment.
#[derive(Debug, Clone)]
pub struct TrialSetup<'a> {
    pub dictionary: &'a Dictionary,
    /// Atom rendered as the scene material.
    pub material: usize,
    pub leave_one_out: bool,
    pub rig: &'a LightingRig,
    pub schedule: &'a Schedule,
    pub pixels: usize,
    pub normal_polar_deg: f64,
    pub noise_sigma: f64,
    pub lambda: LambdaPolicy,
    pub tol: f64,
    pub seed: u64,
    /// Also estimate abundances and score the BRDF.
    pub brdf: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialResult {
    pub material: String,
    pub angular_errors: Vec<f64>,
    pub lambertian_errors: Vec<f64>,
    pub brdf_errors: Vec<f64>,
    pub visited: Vec<usize>,
    pub finest_candidates: usize,
}

/// Random normals on a cap, one-hot scene material, coarse-to-fine estimate
/// against the (optionally reduced) dictionary.
pub fn material_trial(s: &TrialSetup) -> CliResult<TrialResult> {
    let dict = if s.leave_one_out { s.dictionary.without(s.material)? } else { s.dictionary.clone() };
    let pyramid = RenderedPyramid::lazy(&dict, s.rig, &Vec3::z(), s.schedule.resolutions())?;
    material_trial_with(s, &pyramid)
}

/// [`material_trial`] on a pyramid already rendered for the trial's
/// dictionary (with the material removed under leave-one-out).
pub fn material_trial_with(s: &TrialSetup, pyramid: &RenderedPyramid) -> CliResult<TrialResult> {
    let full = s.dictionary;
    let dict = pyramid.finest().dictionary();
    let expected = if s.leave_one_out { full.len() - 1 } else { full.len() };
    if dict.len() != expected || pyramid.finest().rig() != s.rig {
        return Err(CliError::input("pyramid was rendered for a different trial"));
    }
    let view = Vec3::z();
    let channels = full.channels();
    let mut c = vec![0.0; full.len()];
    c[s.material] = 1.0;
    let abundances = vec![c; channels];

    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    rng.set_stream(s.material as u64);
    let mut pixels: Vec<(Vec3, PixelObservation)> = Vec::with_capacity(s.pixels);
    for _ in 0..s.pixels {
        let n = random_cap_direction(&mut rng, s.normal_polar_deg);
        let noise = (s.noise_sigma > 0.0).then_some(s.noise_sigma);
        let obs = render_pixel(full, &n, &abundances, s.rig, &view, noise.map(|v| (v, &mut rng)))?;
        pixels.push((n, obs));
    }

    let form = if s.brdf { Some(ErrorForm::new(dict, full.atom(s.material))?) } else { None };
    let per_pixel: Vec<(f64, f64, f64, usize)> = pixels
        .par_iter()
        .map(|(n, obs)| -> CliResult<_> {
            let est = estimate_normal_c2f(obs, pyramid, s.schedule)?;
            let lamb = estimate_normal_lambertian(obs, s.rig, 0.0)
                .map(|e| angle_between_deg(&e.normal, n))
                .unwrap_or(f64::NAN);
            let brdf = match &form {
                Some(form) => {
                    let lambda = match s.lambda {
                        LambdaPolicy::Fixed(v) => v,
                        LambdaPolicy::Relative(f) => f * scale(dict, &est.normal, s.rig, &obs.intensities[0]),
                        LambdaPolicy::Auto => {
                            AUTO_LAMBDA_GRID[1] * scale(dict, &est.normal, s.rig, &obs.intensities[0])
                        }
                    };
                    let a = estimate_brdf_pixel(obs, &est.normal, dict, s.rig, &view, lambda, s.tol)?;
                    form.error(&a.coefficients)?
                }
                None => f64::NAN,
            };
            Ok((angle_between_deg(&est.normal, n), lamb, brdf, est.visited))
        })
        .collect::<CliResult<_>>()?;
    Ok(TrialResult {
        material: full.atom(s.material).name().to_string(),
        angular_errors: per_pixel.iter().map(|r| r.0).collect(),
        lambertian_errors: per_pixel.iter().map(|r| r.1).filter(|v| v.is_finite()).collect(),
        brdf_errors: per_pixel.iter().map(|r| r.2).filter(|v| v.is_finite()).collect(),
        visited: per_pixel.iter().map(|r| r.3).collect(),
        finest_candidates: pyramid.finest().len(),
    })
}

fn scale(dict: &Dictionary, n: &Vec3, rig: &LightingRig, y: &[f64]) -> f64 {
    let b = render_matrix(dict, n, rig, &Vec3::z());
    lambda_scale(&DMatrix::from_column_slice(rig.len(), dict.len(), &b[0]), y)
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub lights: usize,
    pub mean_angular_error_deg: f64,
    pub median_angular_error_deg: f64,
    pub mean_lambertian_error_deg: f64,
    pub mean_brdf_error: f64,
    pub mean_visited: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MaterialRow {
    pub material: String,
    pub lights: usize,
    pub mean_angular_error_deg: f64,
    pub mean_lambertian_error_deg: f64,
    pub mean_brdf_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkResult {
    pub sweep: Vec<SweepRow>,
    pub materials: Vec<MaterialRow>,
}

fn setup<'a>(
    c: &PipelineConfig,
    dict: &'a Dictionary,
    rig: &'a LightingRig,
    schedule: &'a Schedule,
    material: usize,
) -> TrialSetup<'a> {
    TrialSetup {
        dictionary: dict,
        material,
        leave_one_out: c.benchmark.leave_one_out && dict.len() > 1,
        rig,
        schedule,
        pixels: c.benchmark.pixels,
        normal_polar_deg: c.benchmark.normal_polar_deg,
        noise_sigma: c.noise_sigma,
        lambda: c.lambda,
        tol: c.solver_tol,
        seed: c.seed,
        brdf: true,
    }
}

fn shared_pyramid(
    c: &PipelineConfig,
    dict: &Dictionary,
    rig: &LightingRig,
    schedule: &Schedule,
) -> CliResult<Option<RenderedPyramid>> {
    if c.benchmark.leave_one_out && dict.len() > 1 {
        return Ok(None);
    }
    Ok(Some(RenderedPyramid::lazy(dict, rig, &Vec3::z(), schedule.resolutions())?))
}

fn run_trial(s: &TrialSetup, shared: Option<&RenderedPyramid>) -> CliResult<TrialResult> {
    match shared {
        Some(p) => material_trial_with(s, p),
        None => material_trial(s),
    }
}

/// Light-count sweep averaged over every material, then per-material errors
/// at `material_lights`. Writes CSVs and SVG charts into `out`.
pub fn benchmark(c: &PipelineConfig, out: &Path) -> CliResult<BenchmarkResult> {
    prepare_dir(out, false)?;
    let dict = c.dictionary.build()?;
    let schedule = c.schedule()?;
    let b = &c.benchmark;

    let mut sweep = Vec::new();
    for &q in &b.lights {
        let rig = LightingRig::random(q, b.max_polar_deg, c.seed.wrapping_add(q as u64))?;
        let mut ang = Vec::new();
        let mut lamb = Vec::new();
        let mut brdf = Vec::new();
        let mut visited = Vec::new();
        let shared = shared_pyramid(c, &dict, &rig, &schedule)?;
        for j in 0..dict.len() {
            let r = run_trial(&setup(c, &dict, &rig, &schedule, j), shared.as_ref())?;
            ang.extend(r.angular_errors);
            lamb.extend(r.lambertian_errors);
            brdf.extend(r.brdf_errors);
            visited.extend(r.visited.iter().map(|&v| v as f64));
        }
        sweep.push(SweepRow {
            lights: q,
            mean_angular_error_deg: mean(&ang),
            median_angular_error_deg: Stats::of(&ang).median,
            mean_lambertian_error_deg: mean(&lamb),
            mean_brdf_error: mean(&brdf),
            mean_visited: mean(&visited),
        });
        eprintln!("lights {q}: mean angular error {:.3} deg", sweep.last().unwrap().mean_angular_error_deg);
    }

    let q = b.material_lights;
    let rig = LightingRig::random(q, b.max_polar_deg, c.seed.wrapping_add(q as u64))?;
    let mut materials = Vec::new();
    let shared = shared_pyramid(c, &dict, &rig, &schedule)?;
    for j in 0..dict.len() {
        let r = run_trial(&setup(c, &dict, &rig, &schedule, j), shared.as_ref())?;
        materials.push(MaterialRow {
            material: r.material.clone(),
            lights: q,
            mean_angular_error_deg: mean(&r.angular_errors),
            mean_lambertian_error_deg: mean(&r.lambertian_errors),
            mean_brdf_error: mean(&r.brdf_errors),
        });
    }

    let mut log = OutputLog::new(out, "benchmark");
    let mut csv = String::from("lights,mean_angular_error_deg,median_angular_error_deg,mean_lambertian_error_deg,mean_brdf_error,mean_visited\n");
    for r in &sweep {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.lights,
            r.mean_angular_error_deg,
            r.median_angular_error_deg,
            r.mean_lambertian_error_deg,
            r.mean_brdf_error,
            r.mean_visited
        );
    }
    log.write_text("sweep.csv", &csv)?;
    let mut csv = String::from("material,lights,mean_angular_error_deg,mean_lambertian_error_deg,mean_brdf_error\n");
    for r in &materials {
        let _ = writeln!(
            csv,
            "\"{}\",{},{},{},{}",
            r.material.replace('"', "\"\""),
            r.lights,
            r.mean_angular_error_deg,
            r.mean_lambertian_error_deg,
            r.mean_brdf_error
        );
    }
    log.write_text("materials.csv", &csv)?;

    let xs: Vec<f64> = sweep.iter().map(|r| r.lights as f64).collect();
    let svg = line_chart(
        "Mean normal error vs image count",
        "images",
        "degrees",
        &xs,
        &[
            Series { label: "dictionary", values: sweep.iter().map(|r| r.mean_angular_error_deg).collect() },
            Series { label: "Lambertian", values: sweep.iter().map(|r| r.mean_lambertian_error_deg).collect() },
        ],
    );
    log.write_text("sweep_normals.svg", &svg)?;
    let svg = line_chart(
        "Mean BRDF error vs image count",
        "images",
        "BRDF error (cosine-weighted RMS)",
        &xs,
        &[Series { label: "dictionary", values: sweep.iter().map(|r| r.mean_brdf_error).collect() }],
    );
    log.write_text("sweep_brdf.svg", &svg)?;
    let names: Vec<String> = materials.iter().map(|r| r.material.clone()).collect();
    let svg = bar_chart(
        "Mean normal error per material",
        "degrees",
        &names,
        &[
            Series { label: "dictionary", values: materials.iter().map(|r| r.mean_angular_error_deg).collect() },
            Series { label: "Lambertian", values: materials.iter().map(|r| r.mean_lambertian_error_deg).collect() },
        ],
    );
    log.write_text("materials_normals.svg", &svg)?;
    let svg = bar_chart(
        "Mean BRDF error per material",
        "BRDF error (cosine-weighted RMS)",
        &names,
        &[Series { label: "dictionary", values: materials.iter().map(|r| r.mean_brdf_error).collect() }],
    );
    log.write_text("materials_brdf.svg", &svg)?;
    let mut effective = c.clone();
    effective.output = None;
    log.write_json("config.json", &effective)?;
    log.finish()?;
    Ok(BenchmarkResult { sweep, materials })
}
