//! Coarse-to-fine diffusion.
//!
//! A full rolled-patched run at the base resolution is followed, for each
//! doubling, by bilinear upsampling, re-noising to an intermediate timestep
//! and a shortened rolled-patched run from there. The coarse result seeds the
//! low frequencies of every finer stage.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{LatentGrid, Shape};
use crate::rng::{normal_grid, Purpose, StreamId};
use crate::sampler::{forward_diffuse, initial_noise, Denoiser, NoiseSchedule, SamplerConfig};
use crate::tiling::{rolled_patched_denoise, TilingConfig, TilingStats};

pub const DEFAULT_RESTART_STRENGTH: f64 = 0.6;

/// Resolutions visited by a multiscale run, each twice the previous.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleChain {
    pub resolutions: Vec<(usize, usize)>,
}

impl ScaleChain {
    pub fn new(base: (usize, usize), target: (usize, usize)) -> Result<Self> {
        let (bh, bw) = base;
        let (th, tw) = target;
        if bh == 0 || bw == 0 {
            return Err(Error::invalid("base resolution must be positive"));
        }
        if th % bh != 0 || tw % bw != 0 || th / bh != tw / bw || !(th / bh).is_power_of_two() {
            return Err(Error::invalid(format!(
                "target {th}x{tw} must be the base {bh}x{bw} times a power of two"
            )));
        }
        let stages = (th / bh).trailing_zeros() as usize + 1;
        Ok(Self {
            resolutions: (0..stages).map(|s| (bh << s, bw << s)).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.resolutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resolutions.is_empty()
    }
}

pub fn upsample_latent(z: &LatentGrid, factor: usize) -> Result<LatentGrid> {
    if factor < 2 {
        return Err(Error::invalid(format!("upsampling factor must be at least 2, got {factor}")));
    }
    Ok(z.upsample_bilinear(factor))
}

/// Timestep at which a stage restarted with `strength` resumes denoising.
pub fn restart_timestep(strength: f64, sched: &NoiseSchedule) -> Result<usize> {
    if !(strength > 0.0 && strength <= 1.0) {
        return Err(Error::invalid(format!("restart strength must be in (0, 1], got {strength}")));
    }
    Ok((strength * (sched.len() - 1) as f64).round() as usize)
}

/// Forward-diffuses `z` to the restart timestep with fresh noise from `rng`.
pub fn renoise(
    z: &LatentGrid,
    restart_strength: f64,
    sched: &NoiseSchedule,
    rng: &mut impl Rng,
) -> Result<(LatentGrid, usize)> {
    let t = restart_timestep(restart_strength, sched)?;
    let eps = normal_grid(z.shape(), rng);
    Ok((forward_diffuse(z, t, &eps, sched)?, t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub shape: Shape,
    pub start_timestep: usize,
    pub tiling: TilingStats,
}

#[derive(Debug, Clone)]
pub struct MultiscaleOutput {
    pub latent: LatentGrid,
    /// Final latent of every stage, coarsest first.
    pub stage_latents: Vec<LatentGrid>,
    pub stages: Vec<StageReport>,
}

/// Patch size used at a given stage: the configured size, capped by the grid.
fn stage_tiling(tiling: &TilingConfig, shape: Shape) -> TilingConfig {
    let mut t = tiling.clone();
    t.patch = tiling.patch.min(shape.height).min(shape.width);
    t
}

#[allow(clippy::too_many_arguments)]
pub fn multiscale_sample(
    denoiser: &dyn Denoiser,
    target_shape: Shape,
    base_shape: Shape,
    config: &SamplerConfig,
    sched: &NoiseSchedule,
    tiling: &TilingConfig,
    restart_strength: f64,
) -> Result<MultiscaleOutput> {
    multiscale_sample_with(denoiser, target_shape, base_shape, config, sched, tiling, restart_strength, |_| {})
}

/// Like [`multiscale_sample`], calling `on_stage` after each stage completes.
#[allow(clippy::too_many_arguments)]
pub fn multiscale_sample_with(
    denoiser: &dyn Denoiser,
    target_shape: Shape,
    base_shape: Shape,
    config: &SamplerConfig,
    sched: &NoiseSchedule,
    tiling: &TilingConfig,
    restart_strength: f64,
    mut on_stage: impl FnMut(&StageReport),
) -> Result<MultiscaleOutput> {
    config.validate(sched)?;
    if target_shape.channels != base_shape.channels {
        return Err(Error::invalid("base and target channel counts differ"));
    }
    let chain = ScaleChain::new(
        (base_shape.height, base_shape.width),
        (target_shape.height, target_shape.width),
    )?;
    restart_timestep(restart_strength, sched)?;
    let streams = config.streams();

    let mut stage_latents = Vec::with_capacity(chain.len());
    let mut stages = Vec::with_capacity(chain.len());
    for (stage, &(h, w)) in chain.resolutions.iter().enumerate() {
        let shape = Shape::new(h, w, base_shape.channels);
        let (start, timesteps) = match stage_latents.last() {
            None => (initial_noise(shape, &streams, 0), config.timesteps(sched)),
            Some(prev) => {
                let up = upsample_latent(prev, 2)?;
                let mut rng = streams.rng(StreamId::new(Purpose::Renoise).stage(stage));
                let (z, t) = renoise(&up, restart_strength, sched, &mut rng)?;
                (z, config.timesteps_from(sched, t))
            }
        };
        let stage_tiling = stage_tiling(tiling, shape);
        let start_timestep = timesteps[0];
        let (z, stats) =
            rolled_patched_denoise(denoiser, start, &timesteps, config, sched, &stage_tiling, stage)?;
        let report = StageReport {
            shape,
            start_timestep,
            tiling: stats,
        };
        on_stage(&report);
        stages.push(report);
        stage_latents.push(z);
    }
    let latent = stage_latents.last().expect("at least one stage").clone();
    Ok(MultiscaleOutput {
        latent,
        stage_latents,
        stages,
    })
}
