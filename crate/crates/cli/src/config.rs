use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use tilemat::decode::PatchedDecodeConfig;
use tilemat::grid::{Grid, LATENT_CHANNELS, LATENT_SCALE};
use tilemat::multiscale::ScaleChain;
use tilemat::sampler::SamplerConfig;
use tilemat::tiling::TilingConfig;

use crate::Invalid;

pub const RUN_CONFIG_FILE: &str = "run_config.json";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OracleConfig {
    Attractor { target: PathBuf },
    Smoothing { radius: usize, strength: f64 },
    Gaussian { mu: f64, sigma: f64 },
}

/// Everything needed to replay a `sample` run bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    pub oracle: OracleConfig,
    /// Output resolution in pixels (square).
    pub res: usize,
    /// Resolution of the first multiscale stage in pixels.
    pub base_res: usize,
    pub seed: u64,
    pub steps: usize,
    pub eta: f64,
    /// Diffusion patch side in latent cells.
    pub patch: usize,
    pub max_roll: Option<usize>,
    pub restart_strength: f64,
    /// Decode patch side in pixels.
    pub decode_patch: usize,
    pub overlap: f64,
    pub sigma_frac: f64,
    pub max_parallel_patches: usize,
    pub decoder_seed: u64,
    /// Fixed displacement factor; fitted from the maps when absent.
    pub displacement: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Invalid(format!("{} is not a valid run config: {e}", path.display())))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Invalid(format!("unsupported run config schema version {}", cfg.schema_version)).into());
        }
        Ok(cfg)
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            steps: self.steps,
            eta: self.eta,
            seed: self.seed,
        }
    }

    pub fn tiling(&self) -> TilingConfig {
        TilingConfig {
            patch: self.patch,
            max_roll: self.max_roll,
            batch: self.max_parallel_patches,
        }
    }

    pub fn decode(&self) -> PatchedDecodeConfig {
        PatchedDecodeConfig {
            patch: self.decode_patch / LATENT_SCALE,
            overlap: self.overlap,
            sigma_frac: self.sigma_frac,
            max_parallel: self.max_parallel_patches,
            ..Default::default()
        }
    }

    pub fn latent_side(&self) -> usize {
        self.res / LATENT_SCALE
    }

    /// Pixel resolutions of every stage, coarsest first.
    pub fn stage_resolutions(&self) -> Result<Vec<usize>> {
        let chain = ScaleChain::new((self.base_res, self.base_res), (self.res, self.res))
            .map_err(|e| Invalid(format!("--res {} / --base-res {}: {e}", self.res, self.base_res)))?;
        Ok(chain.resolutions.iter().map(|r| r.0).collect())
    }

    /// Checks every field and every stage before any work is done.
    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| -> Result<()> { Err(Invalid(m).into()) };
        if self.patch == 0 {
            return invalid("--patch must be positive".into());
        }
        let stride = self.patch * LATENT_SCALE;
        if self.res == 0 || !self.res.is_multiple_of(LATENT_SCALE) {
            return invalid(format!(
                "resolution must be divisible by patch stride: --res {} is not a multiple of {LATENT_SCALE}",
                self.res
            ));
        }
        if self.base_res == 0 || !self.base_res.is_multiple_of(LATENT_SCALE) {
            return invalid(format!(
                "resolution must be divisible by patch stride: --base-res {} is not a multiple of {LATENT_SCALE}",
                self.base_res
            ));
        }
        for res in self.stage_resolutions()? {
            let cells = res / LATENT_SCALE;
            if cells >= self.patch && !cells.is_multiple_of(self.patch) {
                return invalid(format!(
                    "resolution must be divisible by patch stride: stage {res} px is not a multiple of {stride} px ({}-cell patch)",
                    self.patch
                ));
            }
        }
        if self.steps == 0 || self.steps > 1000 {
            return invalid(format!("--steps must be in 1..=1000, got {}", self.steps));
        }
        if !(self.eta >= 0.0 && self.eta <= 1.0) {
            return invalid(format!("--eta must be in [0, 1], got {}", self.eta));
        }
        if !(self.restart_strength > 0.0 && self.restart_strength <= 1.0) {
            return invalid(format!("--restart-strength must be in (0, 1], got {}", self.restart_strength));
        }
        if self.decode_patch == 0 || !self.decode_patch.is_multiple_of(LATENT_SCALE) {
            return invalid(format!(
                "--decode-patch must be a positive multiple of {LATENT_SCALE} px, got {}",
                self.decode_patch
            ));
        }
        if self.max_parallel_patches == 0 {
            return invalid("--max-parallel-patches must be at least 1".into());
        }
        self.decode().validate().map_err(|e| Invalid(e.to_string()))?;
        let latent = self.latent_side();
        if latent > self.decode().patch {
            tilemat::decode::reference_factor(
                tilemat::Shape::new(latent, latent, 1),
                self.decode().patch,
            )
            .map_err(|e| Invalid(e.to_string()))?;
        }
        if let Some(d) = self.displacement {
            if !(d >= 0.0 && d.is_finite()) {
                return invalid(format!("--displacement must be non-negative, got {d}"));
            }
        }
        match &self.oracle {
            OracleConfig::Attractor { .. } => {}
            OracleConfig::Smoothing { strength, .. } => {
                if !(*strength > 0.0 && *strength <= 1.0) {
                    return invalid(format!("--smoothing-strength must be in (0, 1], got {strength}"));
                }
            }
            OracleConfig::Gaussian { sigma, .. } => {
                if !(*sigma > 0.0) {
                    return invalid(format!("--sigma must be positive, got {sigma}"));
                }
            }
        }
        Ok(())
    }
}

/// Latent grid on disk: row-major, channel-last values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentFile {
    pub schema_version: u32,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub values: Vec<f64>,
}

impl LatentFile {
    pub fn from_grid(grid: &Grid) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            height: grid.height(),
            width: grid.width(),
            channels: grid.channels(),
            values: grid.data().to_vec(),
        }
    }

    pub fn load(path: &Path) -> Result<Grid> {
        let text = fs::read_to_string(path).with_context(|| format!("reading latent {}", path.display()))?;
        let file: LatentFile = serde_json::from_str(&text)
            .map_err(|e| Invalid(format!("{} is not a valid latent file: {e}", path.display())))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Invalid(format!("unsupported latent schema version {}", file.schema_version)).into());
        }
        let grid = Grid::from_vec(file.height, file.width, file.channels, file.values)
            .map_err(|e| Invalid(format!("{}: {e}", path.display())))?;
        if grid.channels() != LATENT_CHANNELS {
            return Err(Invalid(format!(
                "{}: latent must have {LATENT_CHANNELS} channels, got {}",
                path.display(),
                grid.channels()
            ))
            .into());
        }
        grid.ensure_finite("latent file").map_err(|e| Invalid(e.to_string()))?;
        Ok(grid)
    }
}
