//! Pipeline driver behind the `dictstereo` binary.
//!
//! Every subcommand reads a [`PipelineConfig`] (from `--config`, defaults
//! otherwise), applies command-line overrides, validates, and runs inside a
//! worker pool of the configured size.

pub mod benchmark;
pub mod config;
pub mod outputs;
pub mod plot;
pub mod reconstruct;
pub mod relight;
pub mod render_dict;
pub mod synthesize;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::PipelineConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numerical(String),
    #[error(transparent)]
    Core(#[from] dictstereo::Error),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError::Input(message.into())
    }

    /// 1 for bad input, 2 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Core(e) => {
                if e.is_input_error() {
                    1
                } else {
                    2
                }
            }
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dictstereo", version, about = "Dictionary-based photometric stereo")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic dataset with ground-truth normals and abundances.
    Synthesize {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        scene: SceneArgs,
        /// Store images as 16-bit PNG instead of PFM.
        #[arg(long)]
        png: bool,
    },
    /// Estimate normals, abundances and depth from an image stack.
    Reconstruct {
        /// Image stack manifest.
        manifest: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
        /// Ground-truth normal PFM to score against.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Replace existing outputs.
        #[arg(long)]
        force: bool,
    },
    /// Image-count sweep and per-material normal and BRDF error curves.
    Benchmark {
        #[command(flatten)]
        common: CommonArgs,
        /// Image counts for the sweep, comma separated.
        #[arg(long, value_delimiter = ',')]
        sweep: Option<Vec<usize>>,
        /// Random normals per material.
        #[arg(long)]
        pixels: Option<usize>,
        /// Keep the scene material in the dictionary.
        #[arg(long)]
        include_truth: bool,
    },
    /// Render a reconstruction under new lights.
    Relight {
        /// Output directory of `reconstruct`.
        reconstruction: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        lights: LightArgs,
        #[arg(long)]
        force: bool,
    },
    /// Render every schedule level for a rig and write the render cache.
    RenderDict {
        /// Manifest whose lights and view are rendered.
        manifest: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
}

/// Flags shared by every subcommand; each overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Pipeline configuration JSON.
    #[arg(long, short = 'c')]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
    /// Seed for lights, noise and benchmark pixels.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, short = 'j')]
    pub threads: Option<usize>,
    /// Candidate spacings in degrees, coarse to fine.
    #[arg(long, value_delimiter = ',')]
    pub schedule: Option<Vec<f64>>,
    /// auto, fixed:<v> or relative:<v>.
    #[arg(long, value_parser = config::parse_lambda)]
    pub lambda: Option<dictstereo::reflectance::LambdaPolicy>,
    /// Relative noise sigma for synthetic data.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Mask image (PNG non-zero or PFM > 0.5 marks pixels to process).
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Directory of MERL .binary files.
    #[arg(long)]
    pub merl_dir: Option<PathBuf>,
    /// Parametric atom, e.g. ward:0.3,0.3,0.1 (repeatable; replaces the
    /// configured atoms).
    #[arg(long = "atom", value_parser = config::parse_atom)]
    pub atoms: Vec<dictstereo::brdf::ParametricModel>,
    /// Use only MERL atoms.
    #[arg(long, conflicts_with = "atoms")]
    pub no_parametric: bool,
    /// Channels of generated parametric tables (1 or 3).
    #[arg(long)]
    pub channels: Option<usize>,
    /// Render cache file.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Measurements at or above this value are ignored.
    #[arg(long)]
    pub saturation: Option<f64>,
    /// Largest tolerated fraction of uncertified abundance solves.
    #[arg(long)]
    pub max_uncertified: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct LightArgs {
    /// Number of lights.
    #[arg(long)]
    pub lights: Option<usize>,
    /// random or spiral.
    #[arg(long, default_value = "random")]
    pub light_pattern: String,
    /// Largest light polar angle in degrees.
    #[arg(long, default_value_t = 75.0)]
    pub max_polar: f64,
    /// Lights from an image manifest or a JSON list of {light, intensity}.
    #[arg(long, conflicts_with = "lights")]
    pub lights_from: Option<PathBuf>,
}

impl LightArgs {
    /// `None` when no lighting flag was given.
    pub fn spec(&self, seed: u64) -> CliResult<Option<config::LightingSpec>> {
        use config::LightingSpec;
        if let Some(path) = &self.lights_from {
            return Ok(Some(LightingSpec::File { path: path.clone() }));
        }
        let Some(count) = self.lights else { return Ok(None) };
        match self.light_pattern.as_str() {
            "random" => Ok(Some(LightingSpec::Random { count, max_polar_deg: self.max_polar, seed })),
            "spiral" => Ok(Some(LightingSpec::Spiral { count, max_polar_deg: self.max_polar })),
            other => Err(CliError::input(format!("unknown light pattern '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct SceneArgs {
    #[arg(long, value_enum)]
    pub shape: Option<config::Shape>,
    /// Image width and height in pixels.
    #[arg(long)]
    pub size: Option<usize>,
    /// Material as <atom>:<weight>,... (repeatable).
    #[arg(long = "material", value_parser = config::parse_material)]
    pub materials: Vec<Vec<(usize, f64)>>,
    #[command(flatten)]
    pub lights: LightArgs,
}

impl CommonArgs {
    /// Loads `--config` (or defaults), applies the flags and validates.
    pub fn resolve(&self) -> CliResult<PipelineConfig> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($field:ident, $value:expr) => {
                if let Some(v) = $value.clone() {
                    c.$field = v;
                }
            };
        }
        set!(seed, self.seed);
        set!(threads, self.threads);
        set!(schedule, self.schedule);
        set!(lambda, self.lambda);
        set!(noise_sigma, self.noise);
        set!(max_uncertified_fraction, self.max_uncertified);
        if self.output.is_some() {
            c.output = self.output.clone();
        }
        if self.mask.is_some() {
            c.mask = self.mask.clone();
        }
        if self.cache.is_some() {
            c.cache = self.cache.clone();
        }
        if self.saturation.is_some() {
            c.saturation = self.saturation;
        }
        if self.merl_dir.is_some() {
            c.dictionary.merl_dir = self.merl_dir.clone();
        }
        if !self.atoms.is_empty() {
            c.dictionary.atoms = self.atoms.clone();
        }
        if self.no_parametric {
            c.dictionary.atoms.clear();
        }
        if let Some(ch) = self.channels {
            c.dictionary.channels = ch;
        }
        c.validate()?;
        Ok(c)
    }
}

fn output_dir(c: &PipelineConfig) -> CliResult<PathBuf> {
    c.output.clone().ok_or_else(|| CliError::input("no output directory (use --output)"))
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synthesize { common, scene, png } => {
            let mut c = common.resolve()?;
            if let Some(s) = scene.shape {
                c.scene.shape = s;
            }
            if let Some(s) = scene.size {
                c.scene.size = s;
            }
            if !scene.materials.is_empty() {
                c.scene.materials = scene.materials.clone();
            }
            if let Some(l) = scene.lights.spec(c.seed)? {
                c.scene.lighting = l;
            }
            c.validate()?;
            let out = output_dir(&c)?;
            c.thread_pool()?.install(|| synthesize::synthesize(&c, &out, png))?;
            Ok(())
        }
        Command::Reconstruct { manifest, common, truth, force } => {
            let c = common.resolve()?;
            let out = output_dir(&c)?;
            let summary =
                c.thread_pool()?.install(|| reconstruct::reconstruct(&manifest, &c, &out, force, truth.as_deref()))?;
            summary.check(&c)
        }
        Command::Benchmark { common, sweep, pixels, include_truth } => {
            let mut c = common.resolve()?;
            if let Some(s) = sweep {
                c.benchmark.lights = s;
            }
            if let Some(p) = pixels {
                c.benchmark.pixels = p;
            }
            if include_truth {
                c.benchmark.leave_one_out = false;
            }
            c.validate()?;
            let out = output_dir(&c)?;
            c.thread_pool()?.install(|| benchmark::benchmark(&c, &out))?;
            Ok(())
        }
        Command::Relight { reconstruction, common, lights, force } => {
            let c = common.resolve()?;
            let out = output_dir(&c)?;
            let spec =
                lights.spec(c.seed)?.ok_or_else(|| CliError::input("relight needs --lights or --lights-from"))?;
            c.thread_pool()?.install(|| relight::relight(&reconstruction, &spec, &out, force))?;
            Ok(())
        }
        Command::RenderDict { manifest, common } => {
            let c = common.resolve()?;
            let path = c.cache.clone().ok_or_else(|| CliError::input("render-dict needs --cache"))?;
            c.thread_pool()?.install(|| render_dict::render_dict(&manifest, &c, &path))?;
            Ok(())
        }
    }
}

/// Parses `args`, runs and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
