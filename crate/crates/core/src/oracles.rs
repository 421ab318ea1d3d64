//! Closed-form denoisers that stand in for a trained network.
//!
//! Each one satisfies the [`Denoiser`] contract exactly, so sampler and
//! tiling properties can be checked against analytic expectations.

use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::{Grid, LatentGrid, Shape};
use crate::rng::{Purpose, SeedStreams, StreamId};
use crate::sampler::{Denoiser, NoiseSchedule, Placement};

/// Posterior-optimal noise for data `~ Normal(mu, sigma_data^2 I)` at cumulative alpha `alpha_bar`.
///
/// `mu` holds one mean per channel.
pub fn gaussian_eps(z_t: &LatentGrid, alpha_bar: f64, mu: &[f64], sigma_data: f64) -> Result<LatentGrid> {
    if !(sigma_data > 0.0) {
        return Err(Error::invalid(format!("sigma_data must be positive, got {sigma_data}")));
    }
    if mu.len() != z_t.channels() {
        return Err(Error::invalid(format!(
            "expected {} channel means, got {}",
            z_t.channels(),
            mu.len()
        )));
    }
    let (sa, s1) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    let denom = alpha_bar * sigma_data * sigma_data + (1.0 - alpha_bar);
    let mut out = z_t.clone();
    for px in out.data_mut().chunks_exact_mut(mu.len()) {
        for (v, m) in px.iter_mut().zip(mu) {
            *v = s1 * (*v - sa * m) / denom;
        }
    }
    Ok(out)
}

/// Noise that makes the clean estimate equal `target` exactly.
pub fn attractor_eps(z_t: &LatentGrid, alpha_bar: f64, target: &LatentGrid) -> Result<LatentGrid> {
    if alpha_bar >= 1.0 {
        return Err(Error::invalid("attractor noise is undefined at alpha_bar = 1"));
    }
    let (sa, s1) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    z_t.zip_map(target, |z, x| (z - sa * x) / s1)
}

#[derive(Debug, Clone)]
pub struct GaussianScoreDenoiser {
    pub mu: Vec<f64>,
    pub sigma_data: f64,
    sched: NoiseSchedule,
}

impl GaussianScoreDenoiser {
    pub fn new(mu: Vec<f64>, sigma_data: f64, sched: NoiseSchedule) -> Result<Self> {
        if !(sigma_data > 0.0) {
            return Err(Error::invalid(format!("sigma_data must be positive, got {sigma_data}")));
        }
        Ok(Self {
            mu,
            sigma_data,
            sched,
        })
    }
}

impl Denoiser for GaussianScoreDenoiser {
    fn predict_noise(&self, z_t: &LatentGrid, t: usize) -> Result<LatentGrid> {
        gaussian_eps(z_t, self.sched.alpha_bar(t), &self.mu, self.sigma_data)
    }
}

/// Pulls every sample onto a fixed target (the `sigma_data -> 0` limit of the Gaussian oracle).
///
/// Targets are kept for several resolutions so multiscale runs can be checked
/// stage by stage. Patches are matched to the target window given by their
/// placement, so this oracle is intentionally not position-agnostic.
#[derive(Debug, Clone)]
pub struct AttractorDenoiser {
    targets: Vec<LatentGrid>,
    sched: NoiseSchedule,
}

impl AttractorDenoiser {
    pub fn new(target: LatentGrid, sched: NoiseSchedule) -> Self {
        Self {
            targets: vec![target],
            sched,
        }
    }

    /// Adds `levels` successively 2x box-downsampled copies of `target`.
    pub fn with_pyramid(target: LatentGrid, levels: usize, sched: NoiseSchedule) -> Result<Self> {
        let mut targets = vec![target];
        for _ in 0..levels {
            let next = targets.last().expect("non-empty").downsample_box(2)?;
            targets.push(next);
        }
        Ok(Self { targets, sched })
    }

    pub fn targets(&self) -> &[LatentGrid] {
        &self.targets
    }

    fn target_for(&self, height: usize, width: usize, channels: usize) -> Result<&LatentGrid> {
        self.targets
            .iter()
            .find(|g| g.height() == height && g.width() == width && g.channels() == channels)
            .ok_or_else(|| {
                Error::Contract(format!("attractor has no target at {height}x{width}x{channels}"))
            })
    }
}

impl Denoiser for AttractorDenoiser {
    fn predict_noise(&self, z_t: &LatentGrid, t: usize) -> Result<LatentGrid> {
        let target = self.target_for(z_t.height(), z_t.width(), z_t.channels())?;
        attractor_eps(z_t, self.sched.alpha_bar(t), target)
    }

    fn predict_noise_at(&self, z_t: &LatentGrid, t: usize, placement: &Placement) -> Result<LatentGrid> {
        let full = self.target_for(placement.grid_height, placement.grid_width, z_t.channels())?;
        let window = full.crop_wrapped(placement.row, placement.col, z_t.height(), z_t.width());
        attractor_eps(z_t, self.sched.alpha_bar(t), &window)
    }
}

/// Toroidal separable blur with a triangular kernel of the given radius.
///
/// Each output value sums its neighbours in a fixed order, so the blur
/// commutes bitwise with toroidal translation.
pub fn toroidal_blur(grid: &Grid, radius: usize) -> Grid {
    if radius == 0 {
        return grid.clone();
    }
    let r = radius as isize;
    let taps: Vec<(isize, f64)> = (-r..=r).map(|d| (d, (r + 1 - d.abs()) as f64)).collect();
    let norm: f64 = taps.iter().map(|t| t.1).sum();
    let (h, w, c) = (grid.height(), grid.width(), grid.channels());

    let mut tmp = Grid::zeros(h, w, c);
    for i in 0..h {
        for j in 0..w {
            for k in 0..c {
                let mut acc = 0.0;
                for &(d, wt) in &taps {
                    acc += wt * grid.get_wrapped(i as isize, j as isize + d, k);
                }
                tmp.set(i, j, k, acc / norm);
            }
        }
    }
    let mut out = Grid::zeros(h, w, c);
    for i in 0..h {
        for j in 0..w {
            for k in 0..c {
                let mut acc = 0.0;
                for &(d, wt) in &taps {
                    acc += wt * tmp.get_wrapped(i as isize + d, j as isize, k);
                }
                out.set(i, j, k, acc / norm);
            }
        }
    }
    out
}

/// Stationary smooth-texture prior.
///
/// The clean estimate starts from the unit-Gaussian posterior mean
/// `sqrt(abar) * z_t`, is blended with its toroidal blur by `strength`, and the
/// returned noise is the one consistent with that estimate. Only the handed
/// grid is seen, with wrap-around inside it, so independently processed
/// patches do not agree at their shared borders.
#[derive(Debug, Clone)]
pub struct SmoothingDenoiser {
    pub radius: usize,
    pub strength: f64,
    sched: NoiseSchedule,
}

impl SmoothingDenoiser {
    pub const DEFAULT_RADIUS: usize = 2;
    pub const DEFAULT_STRENGTH: f64 = 1.0;

    pub fn new(radius: usize, strength: f64, sched: NoiseSchedule) -> Result<Self> {
        if !(strength > 0.0 && strength <= 1.0) {
            return Err(Error::invalid(format!("strength must be in (0, 1], got {strength}")));
        }
        Ok(Self {
            radius,
            strength,
            sched,
        })
    }

    pub fn with_defaults(sched: NoiseSchedule) -> Self {
        Self::new(Self::DEFAULT_RADIUS, Self::DEFAULT_STRENGTH, sched).expect("defaults are valid")
    }

    /// Clean-sample estimate at cumulative alpha `alpha_bar`.
    pub fn clean_estimate(&self, z_t: &LatentGrid, alpha_bar: f64) -> LatentGrid {
        let naive = z_t.map(|v| alpha_bar.sqrt() * v);
        let blurred = toroidal_blur(&naive, self.radius);
        let lambda = self.strength;
        naive
            .zip_map(&blurred, |a, b| (1.0 - lambda) * a + lambda * b)
            .expect("same shape")
    }
}

impl Denoiser for SmoothingDenoiser {
    fn predict_noise(&self, z_t: &LatentGrid, t: usize) -> Result<LatentGrid> {
        let ab = self.sched.alpha_bar(t);
        let x0 = self.clean_estimate(z_t, ab);
        attractor_eps(z_t, ab, &x0)
    }
}

/// Smooth random field that tiles exactly: a few plane waves per channel
/// with integer frequencies in `1..=max_freq` on each axis.
pub fn periodic_target(shape: Shape, seed: u64, max_freq: usize) -> Grid {
    const WAVES: usize = 4;
    let mut rng = SeedStreams::new(seed).rng(StreamId::new(Purpose::Fixture).index(1));
    let max_freq = max_freq.max(1) as i64;
    let waves: Vec<Vec<(f64, f64, f64, f64)>> = (0..shape.channels)
        .map(|_| {
            (0..WAVES)
                .map(|_| {
                    let fy = rng.random_range(-max_freq..=max_freq) as f64;
                    let fx = rng.random_range(1..=max_freq) as f64;
                    let amp = rng.random_range(0.1..0.4);
                    let phase = rng.random_range(0.0..std::f64::consts::TAU);
                    (fy, fx, amp, phase)
                })
                .collect()
        })
        .collect();
    let tau = std::f64::consts::TAU;
    Grid::from_fn(shape.height, shape.width, shape.channels, |i, j, k| {
        let (y, x) = (i as f64 / shape.height as f64, j as f64 / shape.width as f64);
        waves[k]
            .iter()
            .map(|&(fy, fx, a, p)| a * (tau * (fy * y + fx * x) + p).sin())
            .sum()
    })
}
