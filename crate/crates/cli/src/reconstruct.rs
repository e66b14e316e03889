use std::path::Path;
use std::time::Instant;

use dictstereo::geometry::angle_between_deg;
use dictstereo::integrate::{integrate_normals, write_obj, DepthMap, NZ_FLOOR};
use dictstereo::io::{
    load_stack, read_mask, read_normal_pfm, read_render_cache, sha256_hex, write_abundances, write_depth_pfm,
    write_normal_pfm, write_normal_png,
};
use dictstereo::maps::NormalMap;
use dictstereo::normals::{estimate_image, NormalSearchConfig};
use dictstereo::reflectance::{estimate_abundances, LambdaPolicy, ReflectanceConfig};
use dictstereo::render::RenderedPyramid;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::outputs::{prepare_dir, OutputLog};
use crate::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Stats {
        if values.is_empty() {
            return Stats::default();
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let at = |q: f64| v[((v.len() - 1) as f64 * q).round() as usize];
        Stats {
            count: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            median: at(0.5),
            p95: at(0.95),
            max: at(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelCounts {
    pub total: usize,
    pub masked: usize,
    pub normals: usize,
    pub abundances: usize,
    pub skipped: usize,
    pub uncertified: usize,
    /// Dropped from depth integration for being too close to grazing.
    pub grazing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub load: f64,
    pub normals: f64,
    pub abundances: f64,
    pub depth: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: u32,
    pub width: usize,
    pub height: usize,
    pub lights: usize,
    pub view: [f64; 3],
    pub atoms: Vec<String>,
    pub dictionary_hash: String,
    pub schedule: Vec<f64>,
    pub cache: String,
    pub pixels: PixelCounts,
    pub lambda_policy: LambdaPolicy,
    pub lambda: f64,
    /// `E` at the winning candidate.
    pub normal_residual: Stats,
    /// Abundance fit residual per pixel, over channels.
    pub abundance_residual: Stats,
    pub visited: Stats,
    pub finest_candidates: usize,
    pub depth: String,
    /// Angular error against `--truth`, in degrees.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_error_deg: Option<Stats>,
    pub timing_seconds: Timing,
}

#[derive(Debug, Clone)]
pub struct Summary {
    pub report: Report,
    pub normals: NormalMap,
    pub depth: Option<DepthMap>,
}

impl Summary {
    /// Numerical failure when too many solves were left uncertified.
    pub fn check(&self, config: &PipelineConfig) -> CliResult<()> {
        let p = &self.report.pixels;
        let fraction = p.uncertified as f64 / p.abundances.max(1) as f64;
        if fraction > config.max_uncertified_fraction {
            return Err(CliError::Numerical(format!(
                "{} of {} solves uncertified ({:.2}% > {:.2}%)",
                p.uncertified,
                p.abundances,
                100.0 * fraction,
                100.0 * config.max_uncertified_fraction
            )));
        }
        Ok(())
    }
}

/// Full pipeline: normals, abundances, depth; writes every artifact and the
/// report into `out`.
pub fn reconstruct(
    manifest: &Path,
    config: &PipelineConfig,
    out: &Path,
    force: bool,
    truth: Option<&Path>,
) -> CliResult<Summary> {
    let start = Instant::now();
    prepare_dir(out, force)?;
    let data = load_stack(manifest)?;
    let (w, h) = (data.stack.width, data.stack.height);
    let mask = match &config.mask {
        Some(p) => Some(read_mask(p, w, h)?),
        None => data.mask.clone(),
    };
    let dict = config.dictionary.build()?;
    let schedule = config.schedule()?;
    let (pyramid, cache) = match &config.cache {
        Some(p) if p.exists() => {
            (read_render_cache(p, &dict, &data.rig, &data.view, schedule.resolutions())?, "loaded")
        }
        _ => (RenderedPyramid::lazy(&dict, &data.rig, &data.view, schedule.resolutions())?, "lazy"),
    };
    let t_load = start.elapsed().as_secs_f64();

    let t = Instant::now();
    let search = NormalSearchConfig {
        schedule: schedule.clone(),
        dark_threshold: config.dark_threshold,
        saturation: config.saturation,
    };
    let estimates = estimate_image(&data.stack, mask.as_ref(), &pyramid, &search)?;
    let normals = estimates.normal_map();
    let t_normals = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let refl = ReflectanceConfig {
        lambda: config.lambda,
        tol: config.solver_tol,
        skip_residual_quantile: None,
        saturation: config.saturation,
    };
    let abundances = estimate_abundances(&data.stack, &estimates, &dict, &data.rig, &data.view, &refl)?;
    let t_abundances = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let mut usable = normals.clone();
    let mut grazing = 0;
    for p in 0..w * h {
        if usable.normals[p].is_some_and(|n| !(n.z > NZ_FLOOR)) {
            usable.normals[p] = None;
            grazing += 1;
        }
    }
    let (depth, depth_status) = match integrate_normals(&usable) {
        Ok(d) => (Some(d), "ok".to_string()),
        Err(e) => (None, format!("skipped: {e}")),
    };
    let t_depth = t.elapsed().as_secs_f64();

    let dictionary_hash = sha256_hex(&dict.content_hash());
    let mut log = OutputLog::new(out, "reconstruct");
    write_normal_pfm(log.path("normals.pfm"), &normals)?;
    log.record("normals.pfm")?;
    write_normal_png(log.path("normals.png"), &normals)?;
    log.record("normals.png")?;
    write_abundances(
        log.path("abundances.bin"),
        log.path("abundances.json"),
        &abundances.map,
        &dict.names(),
        &dictionary_hash,
    )?;
    log.record("abundances.bin")?;
    log.record("abundances.json")?;
    if let Some(d) = &depth {
        write_depth_pfm(log.path("depth.pfm"), d)?;
        log.record("depth.pfm")?;
        write_obj(d, log.path("depth.obj"))?;
        log.record("depth.obj")?;
    }

    let found: Vec<_> = estimates.estimates.iter().flatten().collect();
    let mut fit = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if abundances.map.is_set(x, y) {
                let r2: f64 = (0..abundances.map.channels).map(|c| abundances.map.residual(x, y, c).powi(2)).sum();
                fit.push(r2.sqrt());
            }
        }
    }
    let truth_error_deg = match truth {
        Some(p) => {
            let t = read_normal_pfm(p)?;
            if (t.width, t.height) != (w, h) {
                return Err(CliError::input(format!("{}: size differs from the images", p.display())));
            }
            let errors: Vec<f64> =
                (0..w * h).filter_map(|i| Some(angle_between_deg(&normals.normals[i]?, &t.normals[i]?))).collect();
            Some(Stats::of(&errors))
        }
        None => None,
    };
    let mut effective = config.clone();
    effective.output = None;
    log.write_json("config.json", &effective)?;
    let report = Report {
        version: 1,
        width: w,
        height: h,
        lights: data.rig.len(),
        view: [data.view.x, data.view.y, data.view.z],
        atoms: dict.names(),
        dictionary_hash,
        schedule: schedule.resolutions().to_vec(),
        cache: cache.into(),
        pixels: PixelCounts {
            total: w * h,
            masked: mask.as_ref().map_or(w * h, |m| m.count()),
            normals: found.len(),
            abundances: abundances.solved,
            skipped: abundances.skipped,
            uncertified: abundances.uncertified,
            grazing,
        },
        lambda_policy: config.lambda,
        lambda: abundances.lambda,
        normal_residual: Stats::of(&found.iter().map(|e| e.residual).collect::<Vec<_>>()),
        abundance_residual: Stats::of(&fit),
        visited: Stats::of(&found.iter().map(|e| e.visited as f64).collect::<Vec<_>>()),
        finest_candidates: pyramid.finest().len(),
        depth: depth_status,
        truth_error_deg,
        timing_seconds: Timing {
            load: t_load,
            normals: t_normals,
            abundances: t_abundances,
            depth: t_depth,
            total: start.elapsed().as_secs_f64(),
        },
    };
    log.write_json("report.json", &report)?;
    log.finish()?;
    Ok(Summary { report, normals, depth })
}
