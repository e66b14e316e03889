use std::fs;
use std::path::{Path, PathBuf};

use dictstereo::brdf::{generate_parametric, read_merl, Brdf, Dictionary, ParametricModel};
use dictstereo::io::Manifest;
use dictstereo::normals::Schedule;
use dictstereo::reflectance::LambdaPolicy;
use dictstereo::render::LightingRig;
use dictstereo::Vec3;
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

pub const CONFIG_VERSION: u32 = 1;

/// Where dictionary atoms come from. MERL files are loaded in file-name order,
/// followed by the parametric atoms in the order given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionarySpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merl_dir: Option<PathBuf>,
    #[serde(default)]
    pub atoms: Vec<ParametricModel>,
    /// Channel count of generated parametric tables; forced to 3 when MERL
    /// files are present.
    #[serde(default = "one")]
    pub channels: usize,
}

fn one() -> usize {
    1
}

impl Default for DictionarySpec {
    fn default() -> Self {
        DictionarySpec { merl_dir: None, atoms: default_atoms(), channels: 1 }
    }
}

/// Lambertian plus nine Ward atoms with roughness log-spaced over 0.05–0.5.
pub fn default_atoms() -> Vec<ParametricModel> {
    let mut atoms = vec![ParametricModel::Lambertian { albedo: 0.8 }];
    for k in 0..9 {
        let roughness = 0.05 * 10f64.powf(k as f64 / 8.0);
        atoms.push(ParametricModel::Ward { diffuse: 0.3, specular: 0.3, roughness });
    }
    atoms
}

impl DictionarySpec {
    pub fn build(&self) -> CliResult<Dictionary> {
        let mut tables: Vec<Brdf> = Vec::new();
        let mut channels = self.channels;
        if let Some(dir) = &self.merl_dir {
            let mut files: Vec<PathBuf> = fs::read_dir(dir)
                .map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("binary")))
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(CliError::input(format!("{}: no .binary MERL files", dir.display())));
            }
            for f in files {
                let load = read_merl(&f)?;
                if load.clamped > 0 {
                    eprintln!("{}: {} negative samples clamped to zero", f.display(), load.clamped);
                }
                tables.push(load.brdf);
            }
            channels = 3;
        }
        for model in &self.atoms {
            tables.push(generate_parametric(model, channels)?.with_name(model.label()));
        }
        if tables.is_empty() {
            return Err(CliError::input("the dictionary has no atoms"));
        }
        Ok(Dictionary::new(tables)?)
    }
}

/// Light directions for synthetic scenes and relighting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "pattern", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LightingSpec {
    /// Uniform on the cap within `max_polar_deg` of the view axis.
    Random { count: usize, max_polar_deg: f64, seed: u64 },
    /// Fibonacci spiral on the cap.
    Spiral { count: usize, max_polar_deg: f64 },
    /// Lights of an image manifest, or a JSON array of `{light, intensity}`.
    File { path: PathBuf },
}

impl Default for LightingSpec {
    fn default() -> Self {
        LightingSpec::Random { count: 100, max_polar_deg: 75.0, seed: 0 }
    }
}

#[derive(Deserialize)]
struct LightEntry {
    light: [f64; 3],
    #[serde(default = "unit_intensity")]
    intensity: f64,
}

fn unit_intensity() -> f64 {
    1.0
}

impl LightingSpec {
    pub fn rig(&self) -> CliResult<LightingRig> {
        match self {
            LightingSpec::Random { count: 0, .. } | LightingSpec::Spiral { count: 0, .. } => {
                Err(CliError::input("at least one light is required"))
            }
            LightingSpec::Random { count, max_polar_deg, seed } => {
                Ok(LightingRig::random(*count, *max_polar_deg, *seed)?)
            }
            LightingSpec::Spiral { count, max_polar_deg } => Ok(LightingRig::spiral(*count, *max_polar_deg)?),
            LightingSpec::File { path } => {
                let text = read_text(path)?;
                let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| json_error(path, e))?;
                let entries: Vec<LightEntry> = if value.is_array() {
                    serde_json::from_value(value).map_err(|e| json_error(path, e))?
                } else {
                    let m: Manifest = serde_json::from_value(value).map_err(|e| json_error(path, e))?;
                    m.images.into_iter().map(|i| LightEntry { light: i.light, intensity: i.intensity }).collect()
                };
                if entries.is_empty() {
                    return Err(CliError::input(format!("{}: no lights", path.display())));
                }
                Ok(LightingRig::new(
                    entries.iter().map(|e| Vec3::from(e.light)).collect(),
                    entries.iter().map(|e| e.intensity).collect(),
                )?)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    Sphere,
    Checkerboard,
}

/// Synthetic scene: geometry plus one abundance vector per material.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub shape: Shape,
    pub size: usize,
    /// Checker cell size in pixels.
    #[serde(default = "default_cell")]
    pub cell: usize,
    /// Sphere pixels whose normal is further than this from the view axis are
    /// left out of the mask.
    #[serde(default = "default_normal_polar")]
    pub max_normal_polar_deg: f64,
    /// Sparse abundance vectors as `(atom, weight)` pairs. Spheres use the
    /// first; checkerboards alternate between the first two.
    #[serde(default)]
    pub materials: Vec<Vec<(usize, f64)>>,
    #[serde(default)]
    pub lighting: LightingSpec,
}

fn default_cell() -> usize {
    8
}

fn default_normal_polar() -> f64 {
    70.0
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            shape: Shape::Sphere,
            size: 64,
            cell: 8,
            max_normal_polar_deg: 70.0,
            materials: Vec::new(),
            lighting: LightingSpec::default(),
        }
    }
}

/// Everything a run depends on besides its input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub version: u32,
    pub dictionary: DictionarySpec,
    /// Candidate spacings in degrees, coarse to fine.
    pub schedule: Vec<f64>,
    pub lambda: LambdaPolicy,
    /// Relative Gaussian noise for synthetic data.
    pub noise_sigma: f64,
    /// Foreground mask overriding the manifest's.
    pub mask: Option<PathBuf>,
    pub output: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub seed: u64,
    /// Render cache file read by `reconstruct` when present.
    pub cache: Option<PathBuf>,
    pub dark_threshold: f64,
    pub saturation: Option<f64>,
    pub solver_tol: f64,
    /// `reconstruct` exits with status 2 when the fraction of uncertified
    /// solves exceeds this.
    pub max_uncertified_fraction: f64,
    pub scene: SceneSpec,
    pub benchmark: BenchmarkSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            version: CONFIG_VERSION,
            dictionary: DictionarySpec::default(),
            schedule: Schedule::default().resolutions().to_vec(),
            lambda: LambdaPolicy::Auto,
            noise_sigma: 0.0,
            mask: None,
            output: None,
            threads: 0,
            seed: 0,
            cache: None,
            dark_threshold: 0.0,
            saturation: None,
            solver_tol: dictstereo::solvers::DEFAULT_TOL,
            max_uncertified_fraction: 0.01,
            scene: SceneSpec::default(),
            benchmark: BenchmarkSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkSpec {
    /// Image counts for the sweep.
    pub lights: Vec<usize>,
    /// Image count for the per-material runs.
    pub material_lights: usize,
    pub pixels: usize,
    pub max_polar_deg: f64,
    /// Cap for random normals.
    pub normal_polar_deg: f64,
    /// Drop the scene material from the dictionary.
    pub leave_one_out: bool,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        BenchmarkSpec {
            lights: vec![10, 20, 50, 100],
            material_lights: 100,
            pixels: 200,
            max_polar_deg: 75.0,
            normal_polar_deg: 60.0,
            leave_one_out: true,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = read_text(path)?;
        serde_json::from_str(&text).map_err(|e| json_error(path, e))
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.version != CONFIG_VERSION {
            return Err(CliError::input(format!("config version {}, expected {CONFIG_VERSION}", self.version)));
        }
        Schedule::new(self.schedule.clone())?;
        match self.lambda {
            LambdaPolicy::Fixed(v) | LambdaPolicy::Relative(v) if !(v >= 0.0 && v.is_finite()) => {
                return Err(CliError::input("lambda must be finite and >= 0"));
            }
            _ => {}
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(CliError::input("noise_sigma must be finite and >= 0"));
        }
        if !(self.solver_tol > 0.0 && self.solver_tol.is_finite()) {
            return Err(CliError::input("solver_tol must be positive"));
        }
        if !(0.0..=1.0).contains(&self.max_uncertified_fraction) {
            return Err(CliError::input("max_uncertified_fraction must lie in [0, 1]"));
        }
        if self.dictionary.channels != 1 && self.dictionary.channels != 3 {
            return Err(CliError::input("dictionary channels must be 1 or 3"));
        }
        for m in &self.dictionary.atoms {
            m.validate()?;
        }
        if self.scene.size == 0 || self.scene.cell == 0 {
            return Err(CliError::input("scene size and cell must be positive"));
        }
        if !(self.scene.max_normal_polar_deg > 0.0 && self.scene.max_normal_polar_deg < 90.0) {
            return Err(CliError::input("max_normal_polar_deg must lie in (0, 90)"));
        }
        let b = &self.benchmark;
        if b.pixels == 0 || b.lights.contains(&0) || b.material_lights == 0 {
            return Err(CliError::input("benchmark pixel and light counts must be positive"));
        }
        Ok(())
    }

    pub fn schedule(&self) -> CliResult<Schedule> {
        Ok(Schedule::new(self.schedule.clone())?)
    }

    pub fn thread_pool(&self) -> CliResult<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| CliError::input(format!("thread pool: {e}")))
    }
}

pub(crate) fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub(crate) fn json_error(path: &Path, e: serde_json::Error) -> CliError {
    CliError::input(format!("{}: {e}", path.display()))
}

/// `auto`, `fixed:<v>` or `relative:<v>`.
pub fn parse_lambda(s: &str) -> Result<LambdaPolicy, String> {
    let value = |v: &str| v.parse::<f64>().map_err(|e| format!("bad lambda value '{v}': {e}"));
    match s.split_once(':') {
        None if s == "auto" => Ok(LambdaPolicy::Auto),
        Some(("fixed", v)) => Ok(LambdaPolicy::Fixed(value(v)?)),
        Some(("relative", v)) => Ok(LambdaPolicy::Relative(value(v)?)),
        _ => Err(format!("expected auto, fixed:<v> or relative:<v>, got '{s}'")),
    }
}

/// `lambertian:<albedo>`, `ward:<rd>,<rs>,<alpha>` or
/// `cook-torrance:<kd>,<ks>,<m>,<f0>`.
pub fn parse_atom(s: &str) -> Result<ParametricModel, String> {
    let (kind, args) = s.split_once(':').ok_or_else(|| format!("expected <model>:<params>, got '{s}'"))?;
    let v = parse_list(args)?;
    let want =
        |n: usize| if v.len() == n { Ok(()) } else { Err(format!("{kind} takes {n} parameters, got {}", v.len())) };
    let model = match kind {
        "lambertian" => {
            want(1)?;
            ParametricModel::Lambertian { albedo: v[0] }
        }
        "ward" => {
            want(3)?;
            ParametricModel::Ward { diffuse: v[0], specular: v[1], roughness: v[2] }
        }
        "cook-torrance" => {
            want(4)?;
            ParametricModel::CookTorrance { diffuse: v[0], specular: v[1], roughness: v[2], f0: v[3] }
        }
        _ => return Err(format!("unknown model '{kind}'")),
    };
    model.validate().map_err(|e| e.to_string())?;
    Ok(model)
}

pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|t| t.trim().parse::<f64>().map_err(|e| format!("bad number '{t}': {e}"))).collect()
}

/// `<atom>:<weight>,...`, e.g. `0:1` or `2:0.5,4:0.25`.
pub fn parse_material(s: &str) -> Result<Vec<(usize, f64)>, String> {
    s.split(',')
        .map(|t| {
            let (a, w) = t.split_once(':').ok_or_else(|| format!("expected <atom>:<weight>, got '{t}'"))?;
            let a = a.trim().parse::<usize>().map_err(|e| format!("bad atom index '{a}': {e}"))?;
            let w = w.trim().parse::<f64>().map_err(|e| format!("bad weight '{w}': {e}"))?;
            if !(w >= 0.0 && w.is_finite()) {
                return Err(format!("weight must be finite and >= 0, got {w}"));
            }
            Ok((a, w))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_and_validates() {
        let c = PipelineConfig::default();
        c.validate().unwrap();
        let text = serde_json::to_string_pretty(&c).unwrap();
        let back: PipelineConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.dictionary.atoms.len(), 10);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c: PipelineConfig =
            serde_json::from_str(r#"{"seed": 7, "lambda": {"policy": "relative", "value": 0.01}}"#).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.lambda, LambdaPolicy::Relative(0.01));
        assert_eq!(c.schedule, vec![10.0, 5.0, 3.0, 1.0, 0.5]);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"sed": 7}"#).is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut c = PipelineConfig { schedule: vec![1.0, 5.0], ..Default::default() };
        assert!(c.validate().is_err());
        c.schedule = vec![5.0];
        c.noise_sigma = -1.0;
        assert!(c.validate().is_err());
        c.noise_sigma = 0.0;
        c.version = 9;
        assert!(c.validate().is_err());
    }

    #[test]
    fn flag_parsers() {
        assert_eq!(parse_lambda("auto").unwrap(), LambdaPolicy::Auto);
        assert_eq!(parse_lambda("fixed:0.5").unwrap(), LambdaPolicy::Fixed(0.5));
        assert!(parse_lambda("huge").is_err());
        assert_eq!(
            parse_atom("ward:0.3,0.2,0.1").unwrap(),
            ParametricModel::Ward { diffuse: 0.3, specular: 0.2, roughness: 0.1 }
        );
        assert!(parse_atom("ward:0.3").is_err());
        assert!(parse_atom("phong:1").is_err());
        assert_eq!(parse_material("0:1,3:0.5").unwrap(), vec![(0, 1.0), (3, 0.5)]);
        assert!(parse_material("0:-1").is_err());
    }

    #[test]
    fn zero_lights_is_an_error() {
        let spec = LightingSpec::Random { count: 0, max_polar_deg: 60.0, seed: 1 };
        assert!(spec.rig().is_err());
    }
}
