//! Browser demo: relit spheres, residual landscapes over the hemisphere and
//! coarse-to-fine search traces for a small parametric dictionary.

use dictstereo::brdf::{generate_parametric, Dictionary, ParametricModel};
use dictstereo::geometry::{angle_between_deg, from_spherical};
use dictstereo::normals::{estimate_normal_c2f, Schedule};
use dictstereo::render::{render_matrix, render_pixel, LightingRig, PixelObservation, RenderedPyramid};
use dictstereo::solvers::{nnls, DEFAULT_TOL};
use dictstereo::{Result, Vec3};
use nalgebra::DMatrix;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

pub const SCHEDULE: [f64; 4] = [10.0, 5.0, 2.0, 1.0];

/// Lambertian plus three Ward lobes of increasing roughness.
pub fn demo_atoms() -> Vec<ParametricModel> {
    let mut atoms = vec![ParametricModel::Lambertian { albedo: 0.8 }];
    for roughness in [0.08, 0.2, 0.45] {
        atoms.push(ParametricModel::Ward { diffuse: 0.3, specular: 0.3, roughness });
    }
    atoms
}

/// Surface point seen by the search: a normal and its observation under the
/// demo rig.
pub struct Probe {
    pub normal: Vec3,
    pub observation: PixelObservation,
}

pub struct Scene {
    dictionary: Dictionary,
    rig: LightingRig,
    pyramid: RenderedPyramid,
    schedule: Schedule,
}

/// Result of one coarse-to-fine search.
pub struct Trace {
    /// Winner per level.
    pub levels: Vec<Vec3>,
    pub error_deg: f64,
    pub visited: usize,
    pub finest: usize,
}

fn direction(polar_deg: f64, azimuth_deg: f64) -> Vec3 {
    from_spherical(polar_deg.to_radians(), azimuth_deg.to_radians())
}

/// Unit disk pixel to the visible-hemisphere normal under it.
fn disk_normal(size: usize, col: usize, row: usize) -> Option<Vec3> {
    let half = size as f64 / 2.0;
    let x = (col as f64 + 0.5 - half) / half;
    let y = (half - row as f64 - 0.5) / half;
    let r2 = x * x + y * y;
    (r2 < 1.0).then(|| Vec3::new(x, y, (1.0 - r2).sqrt()))
}

fn to_srgb(v: f64) -> u8 {
    let v = v.clamp(0.0, 1.0);
    let s = if v <= 0.003_130_8 { 12.92 * v } else { 1.055 * v.powf(1.0 / 2.4) - 0.055 };
    (255.0 * s).round() as u8
}

/// Piecewise-linear dark-blue to yellow ramp.
fn ramp(t: f64) -> [u8; 3] {
    const STOPS: [[f64; 3]; 5] =
        [[68.0, 1.0, 84.0], [59.0, 82.0, 139.0], [33.0, 145.0, 140.0], [94.0, 201.0, 98.0], [253.0, 231.0, 37.0]];
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - i as f64;
    let mix = |k: usize| (STOPS[i][k] + f * (STOPS[i + 1][k] - STOPS[i][k])).round() as u8;
    [mix(0), mix(1), mix(2)]
}

impl Scene {
    pub fn new(lights: usize) -> Result<Scene> {
        let atoms = demo_atoms().iter().map(|m| generate_parametric(m, 1)).collect::<Result<Vec<_>>>()?;
        let dictionary = Dictionary::new(atoms)?;
        let rig = LightingRig::spiral(lights, 70.0)?;
        let schedule = Schedule::new(SCHEDULE.to_vec())?;
        let pyramid = RenderedPyramid::lazy(&dictionary, &rig, &Vec3::z(), schedule.resolutions())?;
        Ok(Scene { dictionary, rig, pyramid, schedule })
    }

    pub fn atoms(&self) -> usize {
        self.dictionary.len()
    }

    /// RGBA image of a sphere made of the `weights` mixture under one light.
    pub fn relight_sphere(&self, size: usize, weights: &[f64], light: Vec3, exposure: f64) -> Result<Vec<u8>> {
        let rig = LightingRig::unit(vec![light.normalize()])?;
        let mut rgba = vec![0u8; size * size * 4];
        for row in 0..size {
            for col in 0..size {
                let Some(n) = disk_normal(size, col, row) else { continue };
                let px = render_pixel(&self.dictionary, &n, &[weights.to_vec()], &rig, &Vec3::z(), None)?;
                let v = to_srgb(exposure * px.intensities[0][0]);
                rgba[(row * size + col) * 4..][..4].copy_from_slice(&[v, v, v, 255]);
            }
        }
        Ok(rgba)
    }

    /// Renders a pixel with normal at (`polar_deg`, `azimuth_deg`) under the
    /// demo rig with relative noise `noise`.
    pub fn probe(&self, weights: &[f64], polar_deg: f64, azimuth_deg: f64, noise: f64, seed: u64) -> Result<Probe> {
        let normal = direction(polar_deg, azimuth_deg);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = (noise > 0.0).then_some((noise, &mut rng));
        let observation = render_pixel(&self.dictionary, &normal, &[weights.to_vec()], &self.rig, &Vec3::z(), noise)?;
        Ok(Probe { normal, observation })
    }

    /// NNLS residual of `probe` at every normal of a `size × size`
    /// orthographic view of the hemisphere (NaN outside the disk).
    pub fn landscape(&self, probe: &Probe, size: usize) -> Result<Vec<f64>> {
        let (q, m) = (self.rig.len(), self.dictionary.len());
        let y = &probe.observation.intensities[0];
        let mut out = vec![f64::NAN; size * size];
        for row in 0..size {
            for col in 0..size {
                let Some(n) = disk_normal(size, col, row) else { continue };
                let b = render_matrix(&self.dictionary, &n, &self.rig, &Vec3::z());
                let s = nnls(&DMatrix::from_column_slice(q, m, &b[0]), y, DEFAULT_TOL)?;
                out[row * size + col] = s.residual_norm;
            }
        }
        Ok(out)
    }

    pub fn trace(&self, probe: &Probe) -> Result<Trace> {
        let e = estimate_normal_c2f(&probe.observation, &self.pyramid, &self.schedule)?;
        Ok(Trace {
            levels: e.schedule_trace,
            error_deg: angle_between_deg(&e.normal, &probe.normal),
            visited: e.visited,
            finest: self.pyramid.finest().len(),
        })
    }
}

/// Colours a landscape on a log scale; the darkest pixel is the best fit.
pub fn landscape_rgba(values: &[f64]) -> Vec<u8> {
    let logs: Vec<f64> = values.iter().map(|v| (v + 1e-12).ln()).collect();
    let (lo, hi) = logs
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut rgba = vec![0u8; values.len() * 4];
    for (px, &v) in rgba.chunks_exact_mut(4).zip(&logs) {
        if v.is_finite() {
            let [r, g, b] = ramp((v - lo) / span);
            px.copy_from_slice(&[r, g, b, 255]);
        }
    }
    rgba
}

fn js(e: dictstereo::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    scene: Scene,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(lights: usize) -> std::result::Result<Demo, JsError> {
        Ok(Demo { scene: Scene::new(lights).map_err(js)? })
    }

    pub fn atoms(&self) -> usize {
        self.scene.atoms()
    }

    /// `size × size` RGBA sphere lit from (`polar_deg`, `azimuth_deg`).
    pub fn relight(
        &self,
        size: usize,
        weights: &[f64],
        polar_deg: f64,
        azimuth_deg: f64,
        exposure: f64,
    ) -> std::result::Result<Vec<u8>, JsError> {
        self.scene.relight_sphere(size, weights, direction(polar_deg, azimuth_deg), exposure).map_err(js)
    }

    /// `size × size` RGBA residual map for a probe pixel.
    pub fn landscape(
        &self,
        size: usize,
        weights: &[f64],
        polar_deg: f64,
        azimuth_deg: f64,
        noise: f64,
        seed: u64,
    ) -> std::result::Result<Vec<u8>, JsError> {
        let probe = self.scene.probe(weights, polar_deg, azimuth_deg, noise, seed).map_err(js)?;
        Ok(landscape_rgba(&self.scene.landscape(&probe, size).map_err(js)?))
    }

    /// Coarse-to-fine search for a probe pixel, flattened as
    /// `[error_deg, visited, finest, x0, y0, z0, x1, ...]` with one winner
    /// per level.
    pub fn trace(
        &self,
        weights: &[f64],
        polar_deg: f64,
        azimuth_deg: f64,
        noise: f64,
        seed: u64,
    ) -> std::result::Result<Vec<f64>, JsError> {
        let probe = self.scene.probe(weights, polar_deg, azimuth_deg, noise, seed).map_err(js)?;
        let t = self.scene.trace(&probe).map_err(js)?;
        let mut out = vec![t.error_deg, t.visited as f64, t.finest as f64];
        out.extend(t.levels.iter().flat_map(|n| [n.x, n.y, n.z]));
        Ok(out)
    }
}
