//! Noise schedules, forward diffusion and deterministic DDIM sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, LatentGrid, Shape};
use crate::rng::{normal_grid, Purpose, SeedStreams, StreamId};

pub const DEFAULT_TRAIN_STEPS: usize = 1000;
pub const DEFAULT_BETA_START: f64 = 8.5e-4;
pub const DEFAULT_BETA_END: f64 = 0.012;
pub const DEFAULT_SAMPLING_STEPS: usize = 50;

/// Per-timestep diffusion coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

/// Linearly spaced betas with cumulative products of `1 - beta`.
pub fn make_linear_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if steps < 2 {
        return Err(Error::invalid(format!("schedule needs at least 2 steps, got {steps}")));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::invalid(format!(
            "betas must satisfy 0 < start <= end < 1, got {beta_start}..{beta_end}"
        )));
    }
    let last = (steps - 1) as f64;
    let betas: Vec<f64> = (0..steps)
        .map(|t| beta_start + (beta_end - beta_start) * t as f64 / last)
        .collect();
    NoiseSchedule::from_betas(betas)
}

impl NoiseSchedule {
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.len() < 2 {
            return Err(Error::invalid("schedule needs at least 2 steps"));
        }
        if betas.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
            return Err(Error::invalid("every beta must lie in (0, 1)"));
        }
        if betas.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("betas must be non-decreasing"));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let alpha_bars = alphas
            .iter()
            .scan(1.0, |acc, &a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        Ok(Self {
            betas,
            alphas,
            alpha_bars,
        })
    }

    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    #[inline]
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    fn check_timestep(&self, t: usize) -> Result<()> {
        if t >= self.len() {
            return Err(Error::invalid(format!(
                "timestep {t} outside schedule of length {}",
                self.len()
            )));
        }
        Ok(())
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        make_linear_schedule(DEFAULT_TRAIN_STEPS, DEFAULT_BETA_START, DEFAULT_BETA_END)
            .expect("default schedule is valid")
    }
}

/// `sqrt(abar_t) * z0 + sqrt(1 - abar_t) * eps`.
pub fn forward_diffuse(z0: &LatentGrid, t: usize, eps: &LatentGrid, sched: &NoiseSchedule) -> Result<LatentGrid> {
    sched.check_timestep(t)?;
    forward_diffuse_with(z0, sched.alpha_bar(t), eps)
}

/// Forward diffusion at an explicit cumulative alpha, including the `abar = 1` limit.
pub fn forward_diffuse_with(z0: &LatentGrid, alpha_bar: f64, eps: &LatentGrid) -> Result<LatentGrid> {
    let (a, s) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    z0.zip_map(eps, |x, e| a * x + s * e)
}

/// Denoising network contract: predicts the noise contained in `z_t` at timestep `t`.
///
/// Implementations see only the grid they are handed. Tiled samplers call
/// [`Denoiser::predict_noise_at`] with the placement of the patch; learned
/// denoisers must ignore it, which is what the default implementation does.
pub trait Denoiser: Sync {
    fn predict_noise(&self, z_t: &LatentGrid, t: usize) -> Result<LatentGrid>;

    fn predict_noise_at(&self, z_t: &LatentGrid, t: usize, _placement: &Placement) -> Result<LatentGrid> {
        self.predict_noise(z_t, t)
    }
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn predict_noise(&self, z_t: &LatentGrid, t: usize) -> Result<LatentGrid> {
        (**self).predict_noise(z_t, t)
    }

    fn predict_noise_at(&self, z_t: &LatentGrid, t: usize, placement: &Placement) -> Result<LatentGrid> {
        (**self).predict_noise_at(z_t, t, placement)
    }
}

/// Where a patch sits in the full, unrolled grid. Only analytic test oracles use this.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    pub row: usize,
    pub col: usize,
    pub grid_height: usize,
    pub grid_width: usize,
}

impl Placement {
    pub fn whole(shape: Shape) -> Self {
        Self {
            row: 0,
            col: 0,
            grid_height: shape.height,
            grid_width: shape.width,
        }
    }
}

/// Runs the denoiser and enforces its shape and finiteness contract.
pub(crate) fn checked_prediction(
    denoiser: &dyn Denoiser,
    z_t: &LatentGrid,
    t: usize,
    placement: &Placement,
) -> Result<LatentGrid> {
    let eps = denoiser.predict_noise_at(z_t, t, placement)?;
    if eps.shape() != z_t.shape() {
        return Err(Error::Contract(format!(
            "denoiser returned {} for input {}",
            eps.shape(),
            z_t.shape()
        )));
    }
    eps.ensure_finite("denoiser output")?;
    Ok(eps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub steps: usize,
    pub eta: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            steps: DEFAULT_SAMPLING_STEPS,
            eta: 0.0,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn new(steps: usize, seed: u64) -> Self {
        Self {
            steps,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self, sched: &NoiseSchedule) -> Result<()> {
        if self.steps == 0 || self.steps > sched.len() {
            return Err(Error::invalid(format!(
                "steps must be in 1..={}, got {}",
                sched.len(),
                self.steps
            )));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::invalid(format!("eta must be in [0, 1], got {}", self.eta)));
        }
        Ok(())
    }

    /// Uniformly strided timesteps over `[0, T)`, largest first.
    pub fn timesteps(&self, sched: &NoiseSchedule) -> Vec<usize> {
        let total = sched.len();
        (0..self.steps).rev().map(|i| i * total / self.steps).collect()
    }

    /// Timesteps for a run restarted at `start`: `start` itself, then every
    /// regular timestep below it.
    pub fn timesteps_from(&self, sched: &NoiseSchedule, start: usize) -> Vec<usize> {
        std::iter::once(start)
            .chain(self.timesteps(sched).into_iter().filter(|&t| t < start))
            .collect()
    }

    pub fn streams(&self) -> SeedStreams {
        SeedStreams::new(self.seed)
    }
}

/// One DDIM update from `t` to `t_prev`; `None` for `t_prev` returns the clean estimate.
pub fn ddim_step(
    z_t: &LatentGrid,
    eps_hat: &LatentGrid,
    t: usize,
    t_prev: Option<usize>,
    sched: &NoiseSchedule,
    eta: f64,
    rng: &mut impl Rng,
) -> Result<LatentGrid> {
    sched.check_timestep(t)?;
    if let Some(p) = t_prev {
        if p >= t {
            return Err(Error::invalid(format!("t_prev {p} must be below t {t}")));
        }
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::invalid(format!("eta must be in [0, 1], got {eta}")));
    }
    z_t.ensure_finite("ddim input")?;
    eps_hat.ensure_finite("predicted noise")?;

    let ab_t = sched.alpha_bar(t);
    let (sa_t, s1_t) = (ab_t.sqrt(), (1.0 - ab_t).sqrt());
    let x0 = z_t.zip_map(eps_hat, |z, e| (z - s1_t * e) / sa_t)?;
    let Some(prev) = t_prev else {
        return Ok(x0);
    };

    let ab_p = sched.alpha_bar(prev);
    let sigma = eta * ((1.0 - ab_p) / (1.0 - ab_t)).sqrt() * (1.0 - ab_t / ab_p).sqrt();
    let (sa_p, dir) = (ab_p.sqrt(), (1.0 - ab_p - sigma * sigma).max(0.0).sqrt());
    let mut out = x0.zip_map(eps_hat, |x, e| sa_p * x + dir * e)?;
    if sigma > 0.0 {
        let noise = normal_grid(out.shape(), rng);
        for (o, n) in out.data_mut().iter_mut().zip(noise.data()) {
            *o += sigma * n;
        }
    }
    out.ensure_finite("ddim output")?;
    Ok(out)
}

pub(crate) fn initial_noise(shape: Shape, streams: &SeedStreams, stage: usize) -> Grid {
    let mut rng = streams.rng(StreamId::new(Purpose::InitialNoise).stage(stage));
    normal_grid(shape, &mut rng)
}

pub(crate) fn step_stream(stage: usize, step: usize, patch: usize) -> StreamId {
    StreamId::new(Purpose::StepNoise)
        .stage(stage)
        .step(step)
        .index(patch)
}

/// Plain whole-grid DDIM loop from seeded noise.
pub fn ddim_sample(
    denoiser: &dyn Denoiser,
    shape: Shape,
    config: &SamplerConfig,
    sched: &NoiseSchedule,
) -> Result<LatentGrid> {
    config.validate(sched)?;
    let streams = config.streams();
    let z = initial_noise(shape, &streams, 0);
    let timesteps = config.timesteps(sched);
    denoise_from(denoiser, z, &timesteps, config, sched, 0)
}

/// Whole-grid DDIM over an explicit timestep list, starting from `z`.
pub fn denoise_from(
    denoiser: &dyn Denoiser,
    mut z: LatentGrid,
    timesteps: &[usize],
    config: &SamplerConfig,
    sched: &NoiseSchedule,
    stage: usize,
) -> Result<LatentGrid> {
    let streams = config.streams();
    let placement = Placement::whole(z.shape());
    for (n, &t) in timesteps.iter().enumerate() {
        let t_prev = timesteps.get(n + 1).copied();
        let eps = checked_prediction(denoiser, &z, t, &placement)?;
        let mut rng = streams.rng(step_stream(stage, n, 0));
        z = ddim_step(&z, &eps, t, t_prev, sched, config.eta, &mut rng)?;
    }
    Ok(z)
}
