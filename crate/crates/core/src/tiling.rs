//! Noise rolling and patched diffusion.
//!
//! At every sampling step the latent is rolled toroidally by a random offset,
//! split into non-overlapping patches, each patch is denoised and stepped on
//! its own, and the result is reassembled and unrolled. Patch borders land on
//! different content at every step, so no seam survives and the wrap-around
//! border is treated like any interior line, which makes the output tileable.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, LatentGrid, Shape};
use crate::rng::{Purpose, StreamId};
use crate::sampler::{
    checked_prediction, ddim_step, initial_noise, step_stream, Denoiser, NoiseSchedule, Placement,
    SamplerConfig,
};

/// Default number of patches denoised concurrently.
pub const DEFAULT_PATCH_BATCH: usize = 8;

/// Default latent patch size for patched diffusion.
pub const DEFAULT_DIFFUSION_PATCH: usize = 32;

/// Toroidal translation in rows (`rx`) and columns (`ry`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RollOffset {
    pub rx: isize,
    pub ry: isize,
}

impl RollOffset {
    pub const fn new(rx: isize, ry: isize) -> Self {
        Self { rx, ry }
    }

    pub const fn inverse(self) -> Self {
        Self {
            rx: -self.rx,
            ry: -self.ry,
        }
    }
}

/// Translates `z` so that `out[(i + rx) mod h][(j + ry) mod w] = z[i][j]`.
pub fn roll(z: &Grid, offset: RollOffset) -> Grid {
    let (h, w) = (z.height() as isize, z.width() as isize);
    let rx = offset.rx.rem_euclid(h) as usize;
    let ry = offset.ry.rem_euclid(w) as usize;
    if rx == 0 && ry == 0 {
        return z.clone();
    }
    let mut out = Grid::zeros(z.height(), z.width(), z.channels());
    for i in 0..z.height() {
        let di = (i + rx) % z.height();
        for j in 0..z.width() {
            let dj = (j + ry) % z.width();
            out.pixel_mut(di, dj).copy_from_slice(z.pixel(i, j));
        }
    }
    out
}

/// Row-major grid of non-overlapping square patches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchLayout {
    pub patch: usize,
    pub rows: usize,
    pub cols: usize,
}

impl PatchLayout {
    pub fn new(shape: Shape, patch: usize) -> Result<Self> {
        if patch == 0 || !shape.height.is_multiple_of(patch) || !shape.width.is_multiple_of(patch) {
            return Err(Error::NotDivisible { shape, patch });
        }
        Ok(Self {
            patch,
            rows: shape.height / patch,
            cols: shape.width / patch,
        })
    }

    pub fn count(&self) -> usize {
        self.rows * self.cols
    }

    /// Top-left corner of patch `k`.
    pub fn origin(&self, k: usize) -> (usize, usize) {
        ((k / self.cols) * self.patch, (k % self.cols) * self.patch)
    }
}

pub fn patch_grid(z: &Grid, patch: usize) -> Result<Vec<Grid>> {
    let layout = PatchLayout::new(z.shape(), patch)?;
    Ok((0..layout.count())
        .map(|k| {
            let (r, c) = layout.origin(k);
            z.crop_wrapped(r, c, patch, patch)
        })
        .collect())
}

pub fn unpatch_grid(patches: &[Grid], shape: Shape, patch: usize) -> Result<Grid> {
    let layout = PatchLayout::new(shape, patch)?;
    if patches.len() != layout.count() {
        return Err(Error::invalid(format!(
            "expected {} patches for {shape} at patch size {patch}, got {}",
            layout.count(),
            patches.len()
        )));
    }
    let expected = Shape::new(patch, patch, shape.channels);
    let mut out = Grid::zeros(shape.height, shape.width, shape.channels);
    for (k, p) in patches.iter().enumerate() {
        p.ensure_shape(expected)?;
        let (r, c) = layout.origin(k);
        out.paste_wrapped(p, r, c)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TilingConfig {
    /// Patch side in latent cells; must divide the grid.
    pub patch: usize,
    /// Largest roll per axis; `None` rolls over the full grid dimension.
    pub max_roll: Option<usize>,
    /// Patches processed concurrently within a step.
    pub batch: usize,
}

impl Default for TilingConfig {
    fn default() -> Self {
        Self {
            patch: DEFAULT_DIFFUSION_PATCH,
            max_roll: None,
            batch: DEFAULT_PATCH_BATCH,
        }
    }
}

impl TilingConfig {
    pub fn new(patch: usize, max_roll: Option<usize>) -> Self {
        Self {
            patch,
            max_roll,
            ..Self::default()
        }
    }
}

/// Offsets for one step, each axis uniform in `[0, max_roll]`.
pub fn draw_roll(rng: &mut impl Rng, max_roll: usize) -> RollOffset {
    let rx = rng.random_range(0..=max_roll);
    let ry = rng.random_range(0..=max_roll);
    RollOffset::new(rx as isize, ry as isize)
}

/// Counters reported by a patched run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilingStats {
    pub steps: usize,
    pub patches_per_step: usize,
    pub peak_parallel_patches: usize,
}

/// Patched DDIM with noise rolling from seeded initial noise.
pub fn rolled_patched_sample(
    denoiser: &dyn Denoiser,
    shape: Shape,
    config: &SamplerConfig,
    sched: &NoiseSchedule,
    tiling: &TilingConfig,
) -> Result<LatentGrid> {
    config.validate(sched)?;
    PatchLayout::new(shape, tiling.patch)?;
    let z = initial_noise(shape, &config.streams(), 0);
    let timesteps = config.timesteps(sched);
    rolled_patched_denoise(denoiser, z, &timesteps, config, sched, tiling, 0).map(|(z, _)| z)
}

/// The rolled, patched loop over an explicit timestep list, starting from `z`.
pub fn rolled_patched_denoise(
    denoiser: &dyn Denoiser,
    mut z: LatentGrid,
    timesteps: &[usize],
    config: &SamplerConfig,
    sched: &NoiseSchedule,
    tiling: &TilingConfig,
    stage: usize,
) -> Result<(LatentGrid, TilingStats)> {
    let shape = z.shape();
    let layout = PatchLayout::new(shape, tiling.patch)?;
    let batch = tiling.batch.max(1);
    let max_roll = tiling.max_roll.unwrap_or(shape.height.max(shape.width));
    let streams = config.streams();
    let mut stats = TilingStats {
        steps: timesteps.len(),
        patches_per_step: layout.count(),
        peak_parallel_patches: batch.min(layout.count()),
    };

    for (n, &t) in timesteps.iter().enumerate() {
        let t_prev = timesteps.get(n + 1).copied();
        let mut roll_rng = streams.rng(StreamId::new(Purpose::Roll).stage(stage).step(n));
        let offset = draw_roll(&mut roll_rng, max_roll);
        let rolled = roll(&z, offset);
        let patches = patch_grid(&rolled, tiling.patch)?;

        let mut stepped = Vec::with_capacity(patches.len());
        for (chunk_idx, chunk) in patches.chunks(batch).enumerate() {
            let results: Vec<Result<Grid>> = chunk
                .par_iter()
                .enumerate()
                .map(|(i, patch)| {
                    let k = chunk_idx * batch + i;
                    let (r, c) = layout.origin(k);
                    let placement = Placement {
                        row: (r as isize - offset.rx).rem_euclid(shape.height as isize) as usize,
                        col: (c as isize - offset.ry).rem_euclid(shape.width as isize) as usize,
                        grid_height: shape.height,
                        grid_width: shape.width,
                    };
                    let eps = checked_prediction(denoiser, patch, t, &placement)?;
                    let mut rng = streams.rng(step_stream(stage, n, k));
                    ddim_step(patch, &eps, t, t_prev, sched, config.eta, &mut rng)
                })
                .collect();
            for r in results {
                stepped.push(r?);
            }
        }

        let merged = unpatch_grid(&stepped, shape, tiling.patch)?;
        z = roll(&merged, offset.inverse());
        z.ensure_finite("patched sampling step")?;
    }
    stats.peak_parallel_patches = stats.peak_parallel_patches.max(1);
    Ok((z, stats))
}

/// Direction of the pixel differences a seam measurement looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeamAxis {
    /// Differences between vertically adjacent pixels, across horizontal seams.
    Vertical,
    /// Differences between horizontally adjacent pixels, across vertical seams.
    Horizontal,
    Both,
}

impl SeamAxis {
    fn rows(self) -> bool {
        matches!(self, SeamAxis::Vertical | SeamAxis::Both)
    }

    fn cols(self) -> bool {
        matches!(self, SeamAxis::Horizontal | SeamAxis::Both)
    }
}

/// Running mean of squared adjacent-pixel differences.
#[derive(Debug, Clone, Copy, Default)]
struct PairEnergy {
    sum: f64,
    count: usize,
}

impl PairEnergy {
    fn add_pair(&mut self, a: &[f64], b: &[f64]) {
        let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        self.sum += d / a.len() as f64;
        self.count += 1;
    }

    fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }
}

/// Splits all toroidally adjacent pixel pairs into boundary and interior sets.
///
/// A pair straddles a boundary when its second pixel starts a patch (index a
/// multiple of `patch`); with `patch = None` only the wrap-around line counts.
fn pair_energies(img: &Grid, patch: Option<usize>, axis: SeamAxis) -> (PairEnergy, PairEnergy) {
    let (h, w) = (img.height(), img.width());
    let is_boundary = |idx: usize| match patch {
        Some(p) if p > 0 => idx.is_multiple_of(p),
        _ => idx == 0,
    };
    let (mut boundary, mut interior) = (PairEnergy::default(), PairEnergy::default());
    if axis.cols() && w > 1 {
        for i in 0..h {
            for j in 0..w {
                let jn = (j + 1) % w;
                let bucket = if is_boundary(jn) { &mut boundary } else { &mut interior };
                bucket.add_pair(img.pixel(i, j), img.pixel(i, jn));
            }
        }
    }
    if axis.rows() && h > 1 {
        for i in 0..h {
            let inext = (i + 1) % h;
            for j in 0..w {
                let bucket = if is_boundary(inext) { &mut boundary } else { &mut interior };
                bucket.add_pair(img.pixel(i, j), img.pixel(inext, j));
            }
        }
    }
    (boundary, interior)
}

/// Mean squared difference across patch boundaries and the wrap-around line,
/// averaged over channels and boundary pixel pairs.
pub fn seam_energy(img: &Grid, patch: Option<usize>, axis: SeamAxis) -> f64 {
    pair_energies(img, patch, axis).0.mean()
}

/// Mean squared difference between adjacent pixels that do not straddle a boundary.
pub fn interior_gradient_energy(img: &Grid, patch: Option<usize>, axis: SeamAxis) -> f64 {
    pair_energies(img, patch, axis).1.mean()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeamReport {
    pub seam_energy: f64,
    pub interior_energy: f64,
    /// `seam_energy / interior_energy`; 0 when both vanish, infinite for a seam on flat content.
    pub ratio: f64,
}

pub fn seam_report(img: &Grid, patch: Option<usize>, axis: SeamAxis) -> SeamReport {
    let (b, i) = pair_energies(img, patch, axis);
    let (seam, interior) = (b.mean(), i.mean());
    let ratio = if seam == 0.0 {
        0.0
    } else if interior == 0.0 {
        f64::INFINITY
    } else {
        seam / interior
    };
    SeamReport {
        seam_energy: seam,
        interior_energy: interior,
        ratio,
    }
}
