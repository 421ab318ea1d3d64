//! `tilemat` command-line tool.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Bad user input; reported with exit status 1.
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;
pub const EXIT_TILECHECK: u8 = 3;

#[derive(Parser)]
#[command(name = "tilemat", version, about = "Tileable material sampling, decoding, rendering and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a latent, decode it and write a material map stack.
    Sample(SampleArgs),
    /// Measure the seam across an image's wrap boundary.
    Tilecheck(TilecheckArgs),
    /// Render a map stack under one light.
    Render(RenderArgs),
    /// Render the height map alone with neutral grey clay.
    Clay(ClayArgs),
    /// Fit the displacement factor linking a stack's height and normal maps.
    FitDisplacement(FitArgs),
    /// Compare two map stacks.
    Metrics(MetricsArgs),
    /// Generate an inpainting mask.
    Mask(MaskArgs),
    /// Write a seeded tileable latent for the attractor oracle.
    MakeTarget(MakeTargetArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum OracleKind {
    Attractor,
    Smoothing,
    Gaussian,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    /// Replay a saved run_config.json; sampling flags are then ignored.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "smoothing")]
    pub oracle: OracleKind,
    /// Latent JSON target for the attractor oracle, at the output resolution.
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Output resolution in pixels.
    #[arg(long, default_value_t = 512)]
    pub res: usize,
    /// First multiscale stage in pixels; defaults to --res (single stage).
    #[arg(long)]
    pub base_res: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = tilemat::sampler::DEFAULT_SAMPLING_STEPS)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.0)]
    pub eta: f64,
    /// Diffusion patch side in latent cells.
    #[arg(long, default_value_t = tilemat::tiling::DEFAULT_DIFFUSION_PATCH)]
    pub patch: usize,
    /// Largest roll per axis in latent cells; defaults to the grid size.
    #[arg(long)]
    pub max_roll: Option<usize>,
    #[arg(long, default_value_t = tilemat::multiscale::DEFAULT_RESTART_STRENGTH)]
    pub restart_strength: f64,
    /// Decode patch side in pixels.
    #[arg(long, default_value_t = 512)]
    pub decode_patch: usize,
    #[arg(long, default_value_t = 0.25)]
    pub overlap: f64,
    #[arg(long, default_value_t = 0.25)]
    pub sigma_frac: f64,
    #[arg(long, default_value_t = tilemat::tiling::DEFAULT_PATCH_BATCH)]
    pub max_parallel_patches: usize,
    #[arg(long, default_value_t = 0)]
    pub decoder_seed: u64,
    #[arg(long, default_value_t = tilemat::oracles::SmoothingDenoiser::DEFAULT_RADIUS)]
    pub smoothing_radius: usize,
    #[arg(long, default_value_t = tilemat::oracles::SmoothingDenoiser::DEFAULT_STRENGTH)]
    pub smoothing_strength: f64,
    /// Mean of the Gaussian oracle, shared by all channels.
    #[arg(long, default_value_t = 0.0)]
    pub mu: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Fixed displacement factor; fitted from the decoded maps when omitted.
    #[arg(long)]
    pub displacement: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TilecheckArgs {
    pub image: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    pub threshold: f64,
    /// Also write the report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct LightArgs {
    /// Direction toward a distant light, as x,y,z.
    #[arg(long, value_delimiter = ',', conflicts_with = "light_pos")]
    pub light_dir: Option<Vec<f64>>,
    /// Point light position in tile units, as x,y,z.
    #[arg(long, value_delimiter = ',')]
    pub light_pos: Option<Vec<f64>>,
    /// Light intensity: one value or r,g,b.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub intensity: Vec<f64>,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    /// Directory holding manifest.json and its maps.
    #[arg(long)]
    pub maps: PathBuf,
    #[command(flatten)]
    pub light: LightArgs,
    /// Overrides the manifest's displacement factor.
    #[arg(long)]
    pub displacement: Option<f64>,
    /// Encode the PNG as sRGB instead of linear.
    #[arg(long)]
    pub srgb: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ClayArgs {
    #[arg(long)]
    pub maps: PathBuf,
    #[command(flatten)]
    pub light: LightArgs,
    #[arg(long)]
    pub displacement: Option<f64>,
    #[arg(long)]
    pub srgb: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long)]
    pub maps: PathBuf,
    #[arg(long, default_value_t = tilemat::svbrdf::DEFAULT_MAX_DISPLACEMENT)]
    pub d_max: f64,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    /// Predicted map stack directory.
    pub a: PathBuf,
    /// Reference map stack directory.
    pub b: PathBuf,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MaskKind {
    Border,
    Random,
}

#[derive(Args, Debug)]
pub struct MaskArgs {
    #[arg(value_enum)]
    pub kind: MaskKind,
    #[arg(long)]
    pub height: usize,
    #[arg(long)]
    pub width: usize,
    /// Border width as a fraction of each dimension.
    #[arg(long, default_value_t = 1.0 / 16.0)]
    pub frac: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the mask as a 16-bit PNG.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MakeTargetArgs {
    /// Output resolution in pixels the target is meant for.
    #[arg(long)]
    pub res: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Highest spatial frequency, in cycles per tile.
    #[arg(long, default_value_t = 3)]
    pub max_freq: usize,
    #[arg(long)]
    pub out: PathBuf,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<Invalid>().is_some() {
            return EXIT_VALIDATION;
        }
        if let Some(e) = cause.downcast_ref::<tilemat::Error>() {
            return if e.is_validation() { EXIT_VALIDATION } else { EXIT_RUNTIME };
        }
    }
    EXIT_RUNTIME
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_VALIDATION } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Sample(a) => commands::sample(&a),
        Command::Tilecheck(a) => commands::tilecheck(&a),
        Command::Render(a) => commands::render(&a),
        Command::Clay(a) => commands::clay(&a),
        Command::FitDisplacement(a) => commands::fit_displacement(&a),
        Command::Metrics(a) => commands::metrics(&a),
        Command::Mask(a) => commands::mask(&a),
        Command::MakeTarget(a) => commands::make_target(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
