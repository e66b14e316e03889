//! Image formation: `I = (sᵀρ) · max(0, n·l)` per light, the rendered
//! dictionary matrices `B(n) ∈ R^{Q×M}` over candidate normals, and synthetic
//! scene rendering.

use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brdf::{half_angle_unchecked, Brdf, Dictionary, SamplingFunctional};
use crate::geometry::{check_unit, from_spherical, Vec3};
use crate::maps::{AbundanceMap, ImageStack, NormalMap};
use crate::sampling::{equiangular_hemisphere, CandidateSet};
use crate::solvers;
use crate::{Error, Result};

/// Distant point lights with known directions and brightness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightingRig {
    pub directions: Vec<Vec3>,
    pub intensities: Vec<f64>,
}

impl LightingRig {
    pub fn new(directions: Vec<Vec3>, intensities: Vec<f64>) -> Result<Self> {
        if directions.is_empty() {
            return Err(Error::InvalidParameter("a lighting rig needs at least one light".into()));
        }
        if directions.len() != intensities.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} light directions but {} intensities",
                directions.len(),
                intensities.len()
            )));
        }
        for d in &directions {
            check_unit("light direction", d)?;
        }
        if intensities.iter().any(|&s| !(s.is_finite() && s >= 0.0)) {
            return Err(Error::InvalidParameter("light intensities must be finite and >= 0".into()));
        }
        Ok(LightingRig { directions, intensities })
    }

    pub fn unit(directions: Vec<Vec3>) -> Result<Self> {
        let n = directions.len();
        Self::new(directions, vec![1.0; n])
    }

    /// `count` directions uniform on the hemisphere cap within
    /// `max_polar_deg` of +z.
    pub fn random(count: usize, max_polar_deg: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let directions = (0..count).map(|_| random_cap_direction(&mut rng, max_polar_deg)).collect();
        Self::unit(directions)
    }

    /// Deterministic near-uniform (Fibonacci spiral) directions on the cap
    /// within `max_polar_deg` of +z.
    pub fn spiral(count: usize, max_polar_deg: f64) -> Result<Self> {
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let z_min = max_polar_deg.to_radians().cos();
        let directions = (0..count)
            .map(|i| {
                let z = 1.0 - (1.0 - z_min) * (i as f64 + 0.5) / count as f64;
                from_spherical(z.acos(), golden * i as f64)
            })
            .collect();
        Self::unit(directions)
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// The rig restricted to lights `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut d = Vec::with_capacity(indices.len());
        let mut s = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidParameter(format!("light index {i} out of range")));
            }
            d.push(self.directions[i]);
            s.push(self.intensities[i]);
        }
        Self::new(d, s)
    }
}

/// Uniform direction on the spherical cap of polar angle `max_polar_deg`.
pub fn random_cap_direction(rng: &mut impl rand::Rng, max_polar_deg: f64) -> Vec3 {
    let z_min = max_polar_deg.to_radians().cos();
    let z: f64 = z_min + (1.0 - z_min) * rng.random::<f64>();
    let phi = 2.0 * std::f64::consts::PI * rng.random::<f64>();
    from_spherical(z.clamp(-1.0, 1.0).acos(), phi)
}

/// One pixel's intensities, a `Q`-vector per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelObservation {
    pub x: usize,
    pub y: usize,
    pub intensities: Vec<Vec<f64>>,
    /// Rows (light indices) to use; `None` means all.
    pub rows: Option<Vec<usize>>,
}

impl PixelObservation {
    pub fn new(intensities: Vec<Vec<f64>>) -> Result<Self> {
        let obs = PixelObservation { x: 0, y: 0, intensities, rows: None };
        obs.validate()?;
        Ok(obs)
    }

    pub fn at(mut self, x: usize, y: usize) -> Self {
        self.x = x;
        self.y = y;
        self
    }

    pub fn gray(intensities: Vec<f64>) -> Result<Self> {
        Self::new(vec![intensities])
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.lights();
        if self.intensities.is_empty() || q == 0 {
            return Err(Error::DimensionMismatch("empty observation".into()));
        }
        if self.intensities.iter().any(|c| c.len() != q) {
            return Err(Error::DimensionMismatch("channels disagree on light count".into()));
        }
        if self.intensities.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observation"));
        }
        if self.intensities.iter().flatten().any(|&v| v < 0.0) {
            return Err(Error::InvalidParameter("observed intensities must be >= 0".into()));
        }
        if let Some(rows) = &self.rows {
            if rows.iter().any(|&r| r >= q) {
                return Err(Error::InvalidParameter("row index out of range".into()));
            }
        }
        Ok(())
    }

    pub fn lights(&self) -> usize {
        self.intensities.first().map_or(0, Vec::len)
    }

    pub fn channels(&self) -> usize {
        self.intensities.len()
    }

    /// Scales every intensity by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        let mut out = self.clone();
        for v in out.intensities.iter_mut().flatten() {
            *v *= k;
        }
        out
    }
}

/// Dictionary channel used for each observation channel: identity when the
/// counts agree, channel 0 for gray observations.
pub fn channel_map(observation_channels: usize, dictionary_channels: usize) -> Result<Vec<usize>> {
    if observation_channels == dictionary_channels {
        Ok((0..observation_channels).collect())
    } else if observation_channels == 1 {
        Ok(vec![0])
    } else {
        Err(Error::DimensionMismatch(format!(
            "{observation_channels}-channel observations against a {dictionary_channels}-channel dictionary"
        )))
    }
}

/// `(sᵀρ) · max(0, n·l)` for one channel. Zero for back-lit configurations and
/// for normals facing away from the viewer.
pub fn shade(brdf: &Brdf, normal: &Vec3, light: &Vec3, view: &Vec3, channel: usize) -> Result<f64> {
    check_unit("normal", normal)?;
    check_unit("light", light)?;
    check_unit("view", view)?;
    let samples = brdf.channel(channel)?;
    let cos = normal.dot(light);
    if cos <= 0.0 || normal.dot(view) <= 0.0 {
        return Ok(0.0);
    }
    let f = SamplingFunctional::from_coords(&half_angle_unchecked(light, view, normal));
    Ok(f.apply(samples) * cos)
}

/// `B(n)` for every dictionary channel, column-major `Q × M` each.
pub fn render_matrix(dict: &Dictionary, normal: &Vec3, rig: &LightingRig, view: &Vec3) -> Vec<Vec<f64>> {
    let q = rig.len();
    let m = dict.len();
    let channels = dict.channels();
    let mut out = vec![vec![0.0; q * m]; channels];
    if normal.dot(view) <= 0.0 {
        return out;
    }
    for (i, (light, &intensity)) in rig.directions.iter().zip(&rig.intensities).enumerate() {
        let cos = normal.dot(light);
        if cos <= 0.0 {
            continue;
        }
        let f = SamplingFunctional::from_coords(&half_angle_unchecked(light, view, normal));
        for (j, atom) in dict.atoms().enumerate() {
            for (ch, b) in out.iter_mut().enumerate() {
                b[j * q + i] = intensity * (f.apply(&atom.channels()[ch]) * cos);
            }
        }
    }
    out
}

/// Rendered matrices and their Gram matrices for one candidate normal.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSystem {
    /// Per dictionary channel, column-major `Q × M`.
    pub matrices: Vec<Vec<f64>>,
    /// Per dictionary channel, `BᵀB` column-major `M × M`.
    pub grams: Vec<Vec<f64>>,
}

impl CandidateSystem {
    pub fn from_matrices(matrices: Vec<Vec<f64>>, q: usize, m: usize) -> Self {
        let grams = matrices.iter().map(|b| solvers::gram(b, q, m)).collect();
        CandidateSystem { matrices, grams }
    }
}

/// `B(ñ)` for every candidate of a set, rendered on first use and kept.
///
/// Rendering is pure, so lazily filled and eagerly filled dictionaries hold
/// bit-identical matrices.
#[derive(Debug)]
pub struct RenderedDictionary {
    candidates: CandidateSet,
    dictionary: Dictionary,
    rig: LightingRig,
    view: Vec3,
    systems: Vec<OnceLock<CandidateSystem>>,
}

impl RenderedDictionary {
    /// A dictionary whose matrices are rendered on demand.
    pub fn lazy(candidates: CandidateSet, dictionary: Dictionary, rig: LightingRig, view: Vec3) -> Result<Self> {
        check_unit("view", &view)?;
        if candidates.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        let systems = (0..candidates.len()).map(|_| OnceLock::new()).collect();
        Ok(RenderedDictionary { candidates, dictionary, rig, view, systems })
    }

    /// Assembles a dictionary from already rendered systems (cache loading).
    pub fn from_systems(
        candidates: CandidateSet,
        dictionary: Dictionary,
        rig: LightingRig,
        view: Vec3,
        systems: Vec<CandidateSystem>,
    ) -> Result<Self> {
        if systems.len() != candidates.len() {
            return Err(Error::DimensionMismatch("one system per candidate required".into()));
        }
        let out = Self::lazy(candidates, dictionary, rig, view)?;
        for (cell, s) in out.systems.iter().zip(systems) {
            let _ = cell.set(s);
        }
        Ok(out)
    }

    /// Renders every candidate now.
    pub fn materialize(&self) {
        (0..self.systems.len()).into_par_iter().for_each(|i| {
            self.system(i);
        });
    }

    pub fn system(&self, i: usize) -> &CandidateSystem {
        self.systems[i].get_or_init(|| {
            let matrices = render_matrix(&self.dictionary, &self.candidates.get(i), &self.rig, &self.view);
            CandidateSystem::from_matrices(matrices, self.rig.len(), self.dictionary.len())
        })
    }

    pub fn is_rendered(&self, i: usize) -> bool {
        self.systems[i].get().is_some()
    }

    pub fn candidates(&self) -> &CandidateSet {
        &self.candidates
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }

    pub fn rig(&self) -> &LightingRig {
        &self.rig
    }

    pub fn view(&self) -> Vec3 {
        self.view
    }

    pub fn lights(&self) -> usize {
        self.rig.len()
    }

    pub fn atoms(&self) -> usize {
        self.dictionary.len()
    }

    pub fn len(&self) -> usize {
        self.systems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.systems.is_empty()
    }
}

/// Renders `B(ñ)` for all candidates.
pub fn render_dictionary(
    dict: &Dictionary,
    candidates: &CandidateSet,
    rig: &LightingRig,
    view: &Vec3,
) -> Result<RenderedDictionary> {
    let out = RenderedDictionary::lazy(candidates.clone(), dict.clone(), rig.clone(), *view)?;
    out.materialize();
    Ok(out)
}

/// Rendered dictionaries for each resolution of a coarse-to-fine schedule.
#[derive(Debug)]
pub struct RenderedPyramid {
    levels: Vec<RenderedDictionary>,
}

impl RenderedPyramid {
    /// One lazily rendered level per resolution (degrees).
    pub fn lazy(dict: &Dictionary, rig: &LightingRig, view: &Vec3, resolutions: &[f64]) -> Result<Self> {
        let levels = resolutions
            .iter()
            .map(|&r| RenderedDictionary::lazy(equiangular_hemisphere(r)?, dict.clone(), rig.clone(), *view))
            .collect::<Result<Vec<_>>>()?;
        Self::from_levels(levels)
    }

    /// Every level fully rendered.
    pub fn render(dict: &Dictionary, rig: &LightingRig, view: &Vec3, resolutions: &[f64]) -> Result<Self> {
        let p = Self::lazy(dict, rig, view, resolutions)?;
        for level in &p.levels {
            level.materialize();
        }
        Ok(p)
    }

    pub fn from_levels(levels: Vec<RenderedDictionary>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        Ok(RenderedPyramid { levels })
    }

    pub fn levels(&self) -> &[RenderedDictionary] {
        &self.levels
    }

    /// The level rendered at `resolution` degrees.
    pub fn level(&self, resolution: f64) -> Option<&RenderedDictionary> {
        self.levels.iter().find(|l| (l.candidates().resolution() - resolution).abs() < 1e-12)
    }

    pub fn finest(&self) -> &RenderedDictionary {
        self.levels
            .iter()
            .min_by(|a, b| a.candidates().resolution().total_cmp(&b.candidates().resolution()))
            .expect("non-empty")
    }
}

/// Additive Gaussian noise with standard deviation `relative × mean intensity`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub relative_sigma: f64,
    pub seed: u64,
}

/// Renders a scene given per-pixel normals and abundances.
///
/// Intensities are `B(n_p)·c_p` per channel; pixels without a normal stay
/// black. Optional noise is added in pixel order from a seeded generator and
/// negative results are clamped to zero.
pub fn render_scene(
    normals: &NormalMap,
    abundances: &AbundanceMap,
    dict: &Dictionary,
    rig: &LightingRig,
    view: &Vec3,
    noise: Option<NoiseModel>,
) -> Result<ImageStack> {
    check_unit("view", view)?;
    if normals.width != abundances.width || normals.height != abundances.height {
        return Err(Error::DimensionMismatch("normal map and abundance map sizes differ".into()));
    }
    if abundances.atoms != dict.len() {
        return Err(Error::DimensionMismatch(format!(
            "abundances have {} atoms, dictionary has {}",
            abundances.atoms,
            dict.len()
        )));
    }
    let map = channel_map(abundances.channels, dict.channels())?;
    if abundances.coefficients.iter().any(|&c| !(c >= 0.0)) {
        return Err(Error::InvalidParameter("abundances must be finite and >= 0".into()));
    }
    let (w, h, channels, q, m) = (normals.width, normals.height, abundances.channels, rig.len(), dict.len());
    let pixels: Vec<Option<Vec<f64>>> = (0..w * h)
        .into_par_iter()
        .map(|p| {
            let (x, y) = (p % w, p / w);
            let n = normals.get(x, y)?;
            let b = render_matrix(dict, &n, rig, view);
            let mut out = vec![0.0; q * channels];
            for (c, &dc) in map.iter().enumerate() {
                let coeffs = abundances.get(x, y, c);
                for i in 0..q {
                    let mut acc = 0.0;
                    for j in 0..m {
                        acc += b[dc][j * q + i] * coeffs[j];
                    }
                    out[i * channels + c] = acc;
                }
            }
            Some(out)
        })
        .collect();

    let mut stack = ImageStack::zeros(w, h, channels, q);
    for (p, px) in pixels.iter().enumerate() {
        if let Some(values) = px {
            for i in 0..q {
                for c in 0..channels {
                    stack.images[i][p * channels + c] = values[i * channels + c];
                }
            }
        }
    }
    if let Some(noise) = noise {
        add_noise(&mut stack, &normals.mask().data, noise)?;
    }
    Ok(stack)
}

fn add_noise(stack: &mut ImageStack, mask: &[bool], noise: NoiseModel) -> Result<()> {
    if !(noise.relative_sigma >= 0.0 && noise.relative_sigma.is_finite()) {
        return Err(Error::InvalidParameter("noise sigma must be finite and >= 0".into()));
    }
    let channels = stack.channels;
    let mut sum = 0.0;
    let mut count = 0usize;
    for im in &stack.images {
        for (p, &inside) in mask.iter().enumerate() {
            if inside {
                sum += im[p * channels..(p + 1) * channels].iter().sum::<f64>();
                count += channels;
            }
        }
    }
    if count == 0 || noise.relative_sigma == 0.0 {
        return Ok(());
    }
    let sigma = noise.relative_sigma * sum / count as f64;
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    for im in &mut stack.images {
        for (p, &inside) in mask.iter().enumerate() {
            if inside {
                for v in &mut im[p * channels..(p + 1) * channels] {
                    *v = (*v + normal.sample(&mut rng)).max(0.0);
                }
            }
        }
    }
    Ok(())
}

/// Renders recovered normals and abundances under a new rig.
pub fn relight(
    normals: &NormalMap,
    abundances: &AbundanceMap,
    dict: &Dictionary,
    rig: &LightingRig,
    view: &Vec3,
) -> Result<ImageStack> {
    render_scene(normals, abundances, dict, rig, view, None)
}

/// Single-pixel forward model: `B(n)·c` per observation channel with optional
/// noise relative to the pixel's mean intensity.
pub fn render_pixel(
    dict: &Dictionary,
    normal: &Vec3,
    abundances: &[Vec<f64>],
    rig: &LightingRig,
    view: &Vec3,
    noise: Option<(f64, &mut ChaCha8Rng)>,
) -> Result<PixelObservation> {
    let map = channel_map(abundances.len(), dict.channels())?;
    let b = render_matrix(dict, normal, rig, view);
    let (q, m) = (rig.len(), dict.len());
    let mut intensities: Vec<Vec<f64>> = map
        .iter()
        .zip(abundances)
        .map(|(&dc, c)| (0..q).map(|i| (0..m).map(|j| b[dc][j * q + i] * c[j]).sum()).collect())
        .collect();
    if let Some((sigma, rng)) = noise {
        let n = (intensities.len() * q) as f64;
        let mean = intensities.iter().flatten().sum::<f64>() / n;
        if sigma > 0.0 && mean > 0.0 {
            let dist = Normal::new(0.0, sigma * mean).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            for v in intensities.iter_mut().flatten() {
                *v = (*v + dist.sample(rng)).max(0.0);
            }
        }
    }
    PixelObservation::new(intensities)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brdf::{generate_parametric, ParametricModel};

    fn ones() -> Brdf {
        Brdf::constant("one", 1, 1.0).unwrap()
    }

    #[test]
    fn shade_examples() {
        let z = Vec3::z();
        assert_eq!(shade(&ones(), &z, &z, &z, 0).unwrap(), 1.0);
        let grazing = Vec3::x();
        assert_eq!(shade(&ones(), &z, &grazing, &z, 0).unwrap(), 0.0);
        let l = from_spherical(60f64.to_radians(), 0.3);
        assert!((shade(&ones(), &z, &l, &z, 0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_lambertian_atom_column_is_cosine() {
        let dict = Dictionary::new(vec![ones()]).unwrap();
        let rig = LightingRig::random(40, 90.0, 3).unwrap();
        let n = Vec3::new(0.3, -0.2, 0.9).normalize();
        let b = render_matrix(&dict, &n, &rig, &Vec3::z());
        for (i, l) in rig.directions.iter().enumerate() {
            assert!((b[0][i] - n.dot(l).max(0.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn columns_are_shade_calls() {
        let atoms = vec![
            generate_parametric(&ParametricModel::Ward { diffuse: 0.3, specular: 0.2, roughness: 0.2 }, 1).unwrap(),
            generate_parametric(&ParametricModel::Lambertian { albedo: 0.7 }, 1).unwrap(),
        ];
        let dict = Dictionary::new(atoms).unwrap();
        let rig = LightingRig::spiral(25, 80.0).unwrap();
        let n = Vec3::new(-0.4, 0.1, 0.8).normalize();
        let v = Vec3::z();
        let b = render_matrix(&dict, &n, &rig, &v);
        for j in 0..2 {
            for (i, l) in rig.directions.iter().enumerate() {
                assert_eq!(b[0][j * 25 + i], shade(dict.atom(j), &n, l, &v, 0).unwrap());
            }
        }
    }

    #[test]
    fn lazy_and_eager_agree() {
        let dict = Dictionary::new(vec![ones()]).unwrap();
        let rig = LightingRig::spiral(12, 70.0).unwrap();
        let cands = equiangular_hemisphere(15.0).unwrap();
        let eager = render_dictionary(&dict, &cands, &rig, &Vec3::z()).unwrap();
        let lazy = RenderedDictionary::lazy(cands, dict, rig, Vec3::z()).unwrap();
        assert!(!lazy.is_rendered(3));
        assert_eq!(lazy.system(3), eager.system(3));
        assert!(lazy.is_rendered(3));
    }

    #[test]
    fn rig_validation() {
        assert!(LightingRig::unit(vec![]).is_err());
        assert!(LightingRig::new(vec![Vec3::z()], vec![-1.0]).is_err());
        assert!(LightingRig::new(vec![Vec3::z() * 2.0], vec![1.0]).is_err());
        assert!(LightingRig::new(vec![Vec3::z()], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn random_rig_respects_cap() {
        let rig = LightingRig::random(500, 60.0, 9).unwrap();
        let c = 60f64.to_radians().cos();
        assert!(rig.directions.iter().all(|d| d.z >= c - 1e-12));
    }
}
