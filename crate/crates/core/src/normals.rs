//! Per-pixel normal estimation.
//!
//! A candidate normal `ñ` is scored by `E(ñ) = min_{c>=0} ‖I − B(ñ)c‖`, pooled
//! over channels as the root of the summed squares. The brute-force search
//! scans a whole candidate set; the coarse-to-fine search scans the coarsest
//! set and then, level by level, only the finer candidates inside a cone
//! (half-angle = previous spacing) around the previous winner. Ties go to the
//! lowest candidate index.

use nalgebra::{DMatrix, Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::maps::{ImageStack, Mask};
use crate::render::{channel_map, CandidateSystem, LightingRig, PixelObservation, RenderedDictionary, RenderedPyramid};
use crate::solvers::{self, ActiveSet, DEFAULT_TOL};
use crate::{Error, Result};

/// Strictly decreasing angular spacings (degrees) for the coarse-to-fine search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Schedule {
    resolutions: Vec<f64>,
}

impl Schedule {
    pub fn new(resolutions: Vec<f64>) -> Result<Self> {
        if resolutions.is_empty() {
            return Err(Error::InvalidParameter("schedule needs at least one resolution".into()));
        }
        if resolutions.iter().any(|&r| !(r > 0.0 && r <= 90.0)) {
            return Err(Error::InvalidParameter("schedule resolutions must lie in (0, 90]".into()));
        }
        if resolutions.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidParameter("schedule must be strictly decreasing".into()));
        }
        Ok(Schedule { resolutions })
    }

    pub fn resolutions(&self) -> &[f64] {
        &self.resolutions
    }

    pub fn finest(&self) -> f64 {
        *self.resolutions.last().expect("non-empty")
    }
}

impl Default for Schedule {
    /// 10°, 5°, 3°, 1°, 0.5°.
    fn default() -> Self {
        Schedule { resolutions: vec![10.0, 5.0, 3.0, 1.0, 0.5] }
    }
}

impl TryFrom<Vec<f64>> for Schedule {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Schedule::new(v)
    }
}

impl From<Schedule> for Vec<f64> {
    fn from(s: Schedule) -> Self {
        s.resolutions
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalEstimate {
    pub normal: Vec3,
    /// `E` at the winner, recomputed with [`solvers::nnls`].
    pub residual: f64,
    /// Candidates scored.
    pub visited: usize,
    /// Index of the winner in the (finest) candidate set; `None` for the
    /// Lambertian baseline.
    pub candidate: Option<usize>,
    /// Winning normal per level (coarse-to-fine only).
    pub schedule_trace: Vec<Vec3>,
}

/// Scratch space for scoring candidates against one observation.
struct Scorer<'a> {
    obs: &'a PixelObservation,
    map: Vec<usize>,
    q: usize,
    m: usize,
    solver: ActiveSet,
    h: Vec<f64>,
    c: Vec<f64>,
    /// Observation restricted to the active rows, per channel.
    ys: Vec<Vec<f64>>,
    yy: Vec<f64>,
    thresholds: Vec<f64>,
}

impl<'a> Scorer<'a> {
    fn new(obs: &'a PixelObservation, rendered: &RenderedDictionary) -> Result<Self> {
        obs.validate()?;
        let q = rendered.lights();
        if obs.lights() != q {
            return Err(Error::DimensionMismatch(format!(
                "observation has {} lights, rendered dictionary has {q}",
                obs.lights()
            )));
        }
        let map = channel_map(obs.channels(), rendered.dictionary().channels())?;
        let m = rendered.atoms();
        let ys: Vec<Vec<f64>> = obs
            .intensities
            .iter()
            .map(|ch| match &obs.rows {
                Some(rows) => rows.iter().map(|&r| ch[r]).collect(),
                None => ch.clone(),
            })
            .collect();
        let yy: Vec<f64> = ys.iter().map(|y| solvers::dot(y, y)).collect();
        let thresholds = yy.iter().map(|v| 0.5 * DEFAULT_TOL * v.sqrt()).collect();
        Ok(Scorer { obs, map, q, m, solver: ActiveSet::new(m), h: vec![0.0; m], c: vec![0.0; m], ys, yy, thresholds })
    }

    /// Squared `E(ñ)` summed over channels.
    fn score(&mut self, system: &CandidateSystem) -> f64 {
        let obs = self.obs;
        let mut total = 0.0;
        for k in 0..self.map.len() {
            let dc = self.map[k];
            match &obs.rows {
                None => {
                    solvers::project(&system.matrices[dc], self.q, &self.ys[k], &mut self.h);
                    total += self.solve_channel(k, &system.grams[dc]);
                }
                Some(rows) => {
                    let sub = select_rows(&system.matrices[dc], self.q, self.m, rows);
                    let g = solvers::gram(&sub, rows.len(), self.m);
                    solvers::project(&sub, rows.len(), &self.ys[k], &mut self.h);
                    total += self.solve_channel(k, &g);
                }
            }
        }
        total
    }

    fn solve_channel(&mut self, k: usize, gram: &[f64]) -> f64 {
        self.solver.solve(gram, &self.h, self.thresholds[k], 3 * self.m, &mut self.c);
        // ‖y − Bc‖² = yᵀy − 2hᵀc + cᵀGc
        let mut hc = 0.0;
        let mut cgc = 0.0;
        for a in 0..self.m {
            if self.c[a] == 0.0 {
                continue;
            }
            hc += self.h[a] * self.c[a];
            let mut gc = 0.0;
            for b in 0..self.m {
                gc += gram[a * self.m + b] * self.c[b];
            }
            cgc += self.c[a] * gc;
        }
        (self.yy[k] - 2.0 * hc + cgc).max(0.0)
    }

    /// Lowest-scoring index among `indices` (ties to the earliest).
    fn scan(&mut self, rendered: &RenderedDictionary, indices: impl Iterator<Item = usize>) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for i in indices {
            let s = self.score(rendered.system(i));
            if best.is_none_or(|(_, b)| s < b) {
                best = Some((i, s));
            }
        }
        best
    }
}

fn select_rows(b: &[f64], q: usize, m: usize, rows: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len() * m);
    for j in 0..m {
        out.extend(rows.iter().map(|&r| b[j * q + r]));
    }
    out
}

/// `E` at one candidate via the reference NNLS solver.
pub fn candidate_residual(obs: &PixelObservation, rendered: &RenderedDictionary, index: usize) -> Result<f64> {
    let map = channel_map(obs.channels(), rendered.dictionary().channels())?;
    let (q, m) = (rendered.lights(), rendered.atoms());
    let system = rendered.system(index);
    let mut total = 0.0;
    for (k, &dc) in map.iter().enumerate() {
        let (b, y) = match &obs.rows {
            Some(rows) => (
                DMatrix::from_column_slice(rows.len(), m, &select_rows(&system.matrices[dc], q, m, rows)),
                rows.iter().map(|&r| obs.intensities[k][r]).collect::<Vec<_>>(),
            ),
            None => (DMatrix::from_column_slice(q, m, &system.matrices[dc]), obs.intensities[k].clone()),
        };
        let s = solvers::nnls(&b, &y, DEFAULT_TOL)?;
        total += s.residual_norm * s.residual_norm;
    }
    Ok(total.sqrt())
}

/// Exhaustive search over every candidate of `rendered`.
pub fn estimate_normal_brute(obs: &PixelObservation, rendered: &RenderedDictionary) -> Result<NormalEstimate> {
    if rendered.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let mut scorer = Scorer::new(obs, rendered)?;
    let (index, _) = scorer.scan(rendered, 0..rendered.len()).ok_or(Error::EmptyCandidates)?;
    let normal = rendered.candidates().get(index);
    Ok(NormalEstimate {
        normal,
        residual: candidate_residual(obs, rendered, index)?,
        visited: rendered.len(),
        candidate: Some(index),
        schedule_trace: Vec::new(),
    })
}

/// Coarse-to-fine search through the pyramid levels named by `schedule`.
pub fn estimate_normal_c2f(
    obs: &PixelObservation,
    pyramid: &RenderedPyramid,
    schedule: &Schedule,
) -> Result<NormalEstimate> {
    let levels = schedule
        .resolutions()
        .iter()
        .map(|&r| pyramid.level(r).ok_or_else(|| Error::InvalidParameter(format!("no rendered level at {r} degrees"))))
        .collect::<Result<Vec<_>>>()?;
    let mut scorer = Scorer::new(obs, levels[0])?;
    let mut visited = levels[0].len();
    let (mut index, _) = scorer.scan(levels[0], 0..levels[0].len()).ok_or(Error::EmptyCandidates)?;
    let mut winner = levels[0].candidates().get(index);
    let mut trace = vec![winner];
    for (k, level) in levels.iter().enumerate().skip(1) {
        let cone = level.candidates().indices_within(&winner, schedule.resolutions()[k - 1]);
        if cone.is_empty() {
            return Err(Error::Internal(format!("empty refinement cone at level {k} around {:?}", winner.as_slice())));
        }
        visited += cone.len();
        let (i, _) = scorer.scan(level, cone.into_iter()).expect("non-empty cone");
        index = i;
        winner = level.candidates().get(index);
        trace.push(winner);
    }
    let last = levels.last().expect("non-empty schedule");
    Ok(NormalEstimate {
        normal: winner,
        residual: candidate_residual(obs, last, index)?,
        visited,
        candidate: Some(index),
        schedule_trace: trace,
    })
}

/// Classic least-squares photometric stereo on measurements brighter than
/// `shadow_threshold` (channels averaged).
pub fn estimate_normal_lambertian(
    obs: &PixelObservation,
    rig: &LightingRig,
    shadow_threshold: f64,
) -> Result<NormalEstimate> {
    obs.validate()?;
    if obs.lights() != rig.len() {
        return Err(Error::DimensionMismatch(format!(
            "observation has {} lights, rig has {}",
            obs.lights(),
            rig.len()
        )));
    }
    let all: Vec<usize> = (0..rig.len()).collect();
    let candidates = obs.rows.as_deref().unwrap_or(&all);
    let channels = obs.channels() as f64;
    let mean = |i: usize| obs.intensities.iter().map(|c| c[i]).sum::<f64>() / channels;
    let rows: Vec<usize> = candidates.iter().copied().filter(|&i| mean(i) > shadow_threshold).collect();
    if rows.len() < 3 {
        return Err(Error::RankDeficient(format!("{} unshadowed measurements, need 3", rows.len())));
    }
    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    for &i in &rows {
        let l = rig.directions[i] * rig.intensities[i];
        ata += l * l.transpose();
        atb += l * mean(i);
    }
    let sv = ata.singular_values();
    let (max, min) = (sv.max(), sv.min());
    if !(max > 0.0) || min / max < 1e-10 {
        return Err(Error::RankDeficient("lighting directions are (nearly) coplanar".into()));
    }
    let g = ata.lu().solve(&atb).ok_or_else(|| Error::RankDeficient("singular lighting".into()))?;
    let albedo = g.norm();
    if !(albedo > 0.0) {
        return Err(Error::RankDeficient("zero scaled normal".into()));
    }
    let residual = rows
        .iter()
        .map(|&i| {
            let l = rig.directions[i] * rig.intensities[i];
            let r = mean(i) - l.dot(&g);
            r * r
        })
        .sum::<f64>()
        .sqrt();
    Ok(NormalEstimate { normal: g / albedo, residual, visited: 0, candidate: None, schedule_trace: Vec::new() })
}

/// Pixel selection and search settings for whole images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalSearchConfig {
    pub schedule: Schedule,
    /// Pixels whose brightest measurement is at or below this are skipped.
    pub dark_threshold: f64,
    /// Measurements at or above this level are dropped.
    pub saturation: Option<f64>,
}

impl Default for NormalSearchConfig {
    fn default() -> Self {
        NormalSearchConfig { schedule: Schedule::default(), dark_threshold: 0.0, saturation: None }
    }
}

/// Per-pixel estimates; `None` for pixels that were masked out, dark or
/// fully saturated.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalEstimateMap {
    pub width: usize,
    pub height: usize,
    pub estimates: Vec<Option<NormalEstimate>>,
}

impl NormalEstimateMap {
    pub fn get(&self, x: usize, y: usize) -> Option<&NormalEstimate> {
        self.estimates[y * self.width + x].as_ref()
    }

    pub fn count(&self) -> usize {
        self.estimates.iter().filter(|e| e.is_some()).count()
    }

    pub fn normal_map(&self) -> crate::maps::NormalMap {
        crate::maps::NormalMap {
            width: self.width,
            height: self.height,
            normals: self.estimates.iter().map(|e| e.as_ref().map(|e| e.normal)).collect(),
        }
    }
}

/// Observation for pixel `(x, y)` honouring the saturation level; `None` when
/// every measurement is saturated.
pub fn pixel_observation(stack: &ImageStack, x: usize, y: usize, saturation: Option<f64>) -> Option<PixelObservation> {
    let intensities: Vec<Vec<f64>> =
        stack.profile(x, y).into_iter().map(|c| c.into_iter().map(|v| v.max(0.0)).collect()).collect();
    let rows = saturation
        .map(|level| (0..stack.len()).filter(|&i| intensities.iter().all(|c| c[i] < level)).collect::<Vec<_>>());
    if rows.as_ref().is_some_and(Vec::is_empty) {
        return None;
    }
    let rows = rows.filter(|r| r.len() < stack.len());
    Some(PixelObservation { x, y, intensities, rows })
}

/// Coarse-to-fine estimation on every selected pixel. Output does not depend
/// on thread count or pixel visiting order.
pub fn estimate_image(
    stack: &ImageStack,
    mask: Option<&Mask>,
    pyramid: &RenderedPyramid,
    config: &NormalSearchConfig,
) -> Result<NormalEstimateMap> {
    stack.validate()?;
    let q = pyramid.finest().lights();
    if stack.len() != q {
        return Err(Error::DimensionMismatch(format!("stack has {} images, lighting has {q} lights", stack.len())));
    }
    if let Some(m) = mask {
        if m.width != stack.width || m.height != stack.height {
            return Err(Error::DimensionMismatch("mask size differs from the images".into()));
        }
    }
    let (w, h) = (stack.width, stack.height);
    let results: Vec<Option<Result<NormalEstimate>>> = (0..w * h)
        .into_par_iter()
        .map(|p| {
            let (x, y) = (p % w, p / w);
            if mask.is_some_and(|m| !m.get(x, y)) || stack.pixel_max(x, y) <= config.dark_threshold {
                return None;
            }
            let obs = pixel_observation(stack, x, y, config.saturation)?;
            Some(estimate_normal_c2f(&obs, pyramid, &config.schedule).map_err(|e| e.at_pixel(x, y)))
        })
        .collect();
    let estimates = results.into_iter().map(Option::transpose).collect::<Result<Vec<_>>>()?;
    Ok(NormalEstimateMap { width: w, height: h, estimates })
}
