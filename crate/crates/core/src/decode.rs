//! Latent-to-pixel decoding in overlapping patches.
//!
//! A downsampled copy of the latent is decoded in one pass as a low-resolution
//! reference. Each full-resolution patch is shifted so its per-channel mean
//! matches the reference over the same region, then patches are blended with
//! truncated Gaussian weights normalised to a partition of unity. Only one
//! batch of patches is ever held in memory besides the reference and output.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, LatentGrid, Shape, LATENT_CHANNELS, LATENT_SCALE, MAP_CHANNELS};
use crate::rng::{Purpose, SeedStreams, StreamId};

/// Maps a latent grid to a pixel grid `scale()` times larger with
/// `out_channels()` channels. Implementations must be pure.
pub trait Decoder: Sync {
    fn decode(&self, z: &LatentGrid) -> Result<Grid>;

    fn out_channels(&self) -> usize {
        MAP_CHANNELS
    }

    fn scale(&self) -> usize {
        LATENT_SCALE
    }
}

impl<D: Decoder + ?Sized> Decoder for &D {
    fn decode(&self, z: &LatentGrid) -> Result<Grid> {
        (**self).decode(z)
    }

    fn out_channels(&self) -> usize {
        (**self).out_channels()
    }

    fn scale(&self) -> usize {
        (**self).scale()
    }
}

/// Decodes and verifies the output shape against the decoder's own contract.
pub fn checked_decode(decoder: &dyn Decoder, z: &LatentGrid) -> Result<Grid> {
    let s = decoder.scale();
    let expected = Shape::new(z.height() * s, z.width() * s, decoder.out_channels());
    let out = decoder.decode(z)?;
    if out.shape() != expected {
        return Err(Error::Contract(format!(
            "decoder returned {} for latent {}, expected {expected}",
            out.shape(),
            z.shape()
        )));
    }
    Ok(out)
}

/// Fixed random channel mix followed by toroidal bilinear upsampling.
///
/// Linear and translation covariant, so a patched decode can be compared
/// against a full decode exactly.
#[derive(Debug, Clone)]
pub struct LinearMockDecoder {
    in_channels: usize,
    /// Row-major `MAP_CHANNELS x in_channels`.
    mix: Vec<f64>,
}

impl LinearMockDecoder {
    pub fn new(seed: u64) -> Self {
        Self::with_channels(seed, LATENT_CHANNELS)
    }

    pub fn with_channels(seed: u64, in_channels: usize) -> Self {
        let mut rng = SeedStreams::new(seed).rng(StreamId::new(Purpose::Fixture));
        let scale = 1.0 / (in_channels.max(1) as f64).sqrt();
        let mix = (0..MAP_CHANNELS * in_channels)
            .map(|_| rng.random_range(-1.0..1.0) * scale)
            .collect();
        Self { in_channels, mix }
    }

    pub fn matrix(&self) -> &[f64] {
        &self.mix
    }

    /// Channel mix at latent resolution, before upsampling.
    pub fn mix_channels(&self, z: &LatentGrid) -> Result<Grid> {
        if z.channels() != self.in_channels {
            return Err(Error::ShapeMismatch {
                expected: Shape::new(z.height(), z.width(), self.in_channels),
                actual: z.shape(),
            });
        }
        let mut out = Grid::zeros(z.height(), z.width(), MAP_CHANNELS);
        for i in 0..z.height() {
            for j in 0..z.width() {
                let src = z.pixel(i, j);
                for (o, row) in out.pixel_mut(i, j).iter_mut().zip(self.mix.chunks(self.in_channels)) {
                    *o = row.iter().zip(src).map(|(m, v)| m * v).sum();
                }
            }
        }
        Ok(out)
    }
}

impl Decoder for LinearMockDecoder {
    fn decode(&self, z: &LatentGrid) -> Result<Grid> {
        Ok(self.mix_channels(z)?.upsample_bilinear(LATENT_SCALE))
    }
}

/// Square blending window, zero on its border ring and peaked at the centre.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendKernel {
    pub patch_px: usize,
    profile: Vec<f64>,
}

impl BlendKernel {
    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.profile[row] * self.profile[col]
    }

    /// The separable 1-D factor.
    pub fn profile(&self) -> &[f64] {
        &self.profile
    }

    pub fn to_grid(&self) -> Grid {
        Grid::from_fn(self.patch_px, self.patch_px, 1, |i, j, _| self.weight(i, j))
    }
}

/// Gaussian with `sigma = sigma_frac * n`, shifted down so both ends are 0.
pub fn gaussian_profile(n: usize, sigma_frac: f64) -> Result<Vec<f64>> {
    if n < 4 {
        return Err(Error::invalid(format!("blend window must be at least 4 pixels, got {n}")));
    }
    if !(sigma_frac > 0.0 && sigma_frac.is_finite()) {
        return Err(Error::invalid(format!("sigma fraction must be positive, got {sigma_frac}")));
    }
    let sigma = sigma_frac * n as f64;
    let c = (n - 1) as f64 / 2.0;
    let g = |x: f64| (-(x - c) * (x - c) / (2.0 * sigma * sigma)).exp();
    let floor = g(0.0);
    let mut p: Vec<f64> = (0..n).map(|x| g(x as f64) - floor).collect();
    p[0] = 0.0;
    p[n - 1] = 0.0;
    Ok(p)
}

pub fn gaussian_weights(patch_px: usize, sigma_frac: f64) -> Result<BlendKernel> {
    Ok(BlendKernel {
        patch_px,
        profile: gaussian_profile(patch_px, sigma_frac)?,
    })
}

/// Shifts every channel of `patch` so its mean equals that of `reference`.
pub fn mean_match(patch: &Grid, reference: &Grid) -> Result<Grid> {
    if patch.channels() != reference.channels() {
        return Err(Error::invalid(format!(
            "mean match channel mismatch: patch has {}, reference has {}",
            patch.channels(),
            reference.channels()
        )));
    }
    let shift: Vec<f64> = reference
        .channel_means()
        .iter()
        .zip(patch.channel_means())
        .map(|(r, p)| r - p)
        .collect();
    let mut out = patch.clone();
    for px in out.data_mut().chunks_mut(shift.len()) {
        for (v, s) in px.iter_mut().zip(&shift) {
            *v += s;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchedDecodeConfig {
    /// Patch edge in latent cells.
    pub patch: usize,
    /// Fraction of the patch shared with the next one, in (0, 0.5].
    pub overlap: f64,
    /// Blend Gaussian sigma as a fraction of the patch width.
    pub sigma_frac: f64,
    /// Latent cells of wrap-around context decoded around each patch and discarded.
    pub context: usize,
    /// Patches decoded concurrently.
    pub max_parallel: usize,
    /// Shift each patch to the low-resolution reference mean. Off only for ablations.
    pub mean_match: bool,
}

impl Default for PatchedDecodeConfig {
    fn default() -> Self {
        Self {
            patch: 64,
            overlap: 0.25,
            sigma_frac: 0.25,
            context: 1,
            max_parallel: 8,
            mean_match: true,
        }
    }
}

impl PatchedDecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch == 0 {
            return Err(Error::invalid("decode patch must be positive"));
        }
        if !(self.overlap > 0.0 && self.overlap <= 0.5) {
            return Err(Error::invalid(format!("overlap must be in (0, 0.5], got {}", self.overlap)));
        }
        if self.max_parallel == 0 {
            return Err(Error::invalid("max_parallel must be at least 1"));
        }
        Ok(())
    }
}

/// Patch placement along one axis, with per-pixel weight sums.
#[derive(Debug, Clone)]
pub struct AxisLayout {
    len_cells: usize,
    /// Patch start and length in latent cells.
    pub segments: Vec<(usize, usize)>,
    scale: usize,
    profile: Vec<f64>,
    sums: Vec<f64>,
}

impl AxisLayout {
    pub fn new(len_cells: usize, patch: usize, overlap: f64, sigma_frac: f64, scale: usize) -> Result<Self> {
        let len_px = len_cells * scale;
        if len_cells <= patch {
            return Ok(Self {
                len_cells,
                segments: vec![(0, len_cells)],
                scale,
                profile: vec![1.0; len_px],
                sums: vec![1.0; len_px],
            });
        }
        let stride = ((patch as f64 * (1.0 - overlap)).round() as usize).clamp(1, patch);
        let n = len_cells.div_ceil(stride);
        let segments: Vec<(usize, usize)> = (0..n)
            .map(|i| (((i * len_cells) as f64 / n as f64).round() as usize, patch))
            .collect();
        let profile = gaussian_profile(patch * scale, sigma_frac)?;
        let mut sums = vec![0.0; len_px];
        for &(origin, _) in &segments {
            for (p, w) in profile.iter().enumerate() {
                sums[(origin * scale + p) % len_px] += w;
            }
        }
        if let Some(x) = sums.iter().position(|&s| s <= 0.0) {
            return Err(Error::invalid(format!(
                "overlap {overlap} leaves pixel {x} uncovered by any patch"
            )));
        }
        Ok(Self {
            len_cells,
            segments,
            scale,
            profile,
            sums,
        })
    }

    pub fn len_px(&self) -> usize {
        self.len_cells * self.scale
    }

    /// Normalised weight of segment `seg` at offset `p` pixels into it.
    pub fn normalized_weight(&self, seg: usize, p: usize) -> f64 {
        let global = (self.segments[seg].0 * self.scale + p) % self.len_px();
        self.profile[p] / self.sums[global]
    }
}

/// Row and column layouts of a patched decode.
#[derive(Debug, Clone)]
pub struct DecodePlan {
    pub rows: AxisLayout,
    pub cols: AxisLayout,
}

impl DecodePlan {
    pub fn new(latent: Shape, config: &PatchedDecodeConfig, scale: usize) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            rows: AxisLayout::new(latent.height, config.patch, config.overlap, config.sigma_frac, scale)?,
            cols: AxisLayout::new(latent.width, config.patch, config.overlap, config.sigma_frac, scale)?,
        })
    }

    pub fn patch_count(&self) -> usize {
        self.rows.segments.len() * self.cols.segments.len()
    }

    /// Row-major `(row segment, column segment)` pair of patch `k`.
    pub fn patch_index(&self, k: usize) -> (usize, usize) {
        (k / self.cols.segments.len(), k % self.cols.segments.len())
    }

    pub fn normalized_weight(&self, k: usize, py: usize, px: usize) -> f64 {
        let (a, b) = self.patch_index(k);
        self.rows.normalized_weight(a, py) * self.cols.normalized_weight(b, px)
    }
}

/// Smallest box factor that brings the latent down to a single patch.
pub fn reference_factor(latent: Shape, patch: usize) -> Result<usize> {
    let (h, w) = (latent.height, latent.width);
    (1..=h.max(w))
        .find(|&k| h % k == 0 && w % k == 0 && h / k <= patch && w / k <= patch)
        .ok_or_else(|| {
            Error::invalid(format!(
                "latent {h}x{w} has no integer downsampling that fits a {patch}-cell reference patch"
            ))
        })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeStats {
    pub patches: usize,
    pub reference_factor: usize,
}

pub fn patched_decode(decoder: &dyn Decoder, z: &LatentGrid, config: &PatchedDecodeConfig) -> Result<Grid> {
    patched_decode_with_stats(decoder, z, config).map(|(g, _)| g)
}

pub fn patched_decode_with_stats(
    decoder: &dyn Decoder,
    z: &LatentGrid,
    config: &PatchedDecodeConfig,
) -> Result<(Grid, DecodeStats)> {
    config.validate()?;
    z.ensure_finite("latent")?;
    let (h, w) = (z.height(), z.width());
    if h <= config.patch && w <= config.patch {
        let stats = DecodeStats {
            patches: 1,
            reference_factor: 1,
        };
        return Ok((checked_decode(decoder, z)?, stats));
    }

    let s = decoder.scale();
    let c = decoder.out_channels();
    let k = reference_factor(z.shape(), config.patch)?;
    let reference = checked_decode(decoder, &z.downsample_box(k)?)?;
    let plan = DecodePlan::new(z.shape(), config, s)?;
    let ctx = config.context;

    let decode_one = |idx: usize| -> Result<(Grid, Vec<f64>)> {
        let (a, b) = plan.patch_index(idx);
        let (r0, ph) = plan.rows.segments[a];
        let (c0, pw) = plan.cols.segments[b];
        let crop = z.crop_wrapped(
            (r0 + h - ctx % h) % h,
            (c0 + w - ctx % w) % w,
            ph + 2 * ctx,
            pw + 2 * ctx,
        );
        let decoded = checked_decode(decoder, &crop)?;
        if !config.mean_match {
            return Ok((decoded, vec![0.0; c]));
        }
        let shift = reference_shift(&decoded, &reference, (r0 * s, c0 * s), (ph * s, pw * s), ctx * s, k)?;
        Ok((decoded, shift))
    };

    let mut out = Grid::zeros(h * s, w * s, c);
    let count = plan.patch_count();
    let mut start = 0;
    while start < count {
        let end = (start + config.max_parallel).min(count);
        let batch: Vec<Result<(Grid, Vec<f64>)>> = if config.max_parallel == 1 {
            (start..end).map(decode_one).collect()
        } else {
            (start..end).into_par_iter().map(decode_one).collect()
        };
        for (idx, res) in (start..end).zip(batch) {
            let (decoded, shift) = res?;
            accumulate(&mut out, &plan, idx, &decoded, &shift, ctx * s);
        }
        start = end;
    }
    out.ensure_finite("patched decode")?;
    Ok((
        out,
        DecodeStats {
            patches: count,
            reference_factor: k,
        },
    ))
}

/// Per-channel shift taking the patch mean to the reference mean over the
/// same pixels. The reference is sampled bilinearly at full resolution.
fn reference_shift(
    decoded: &Grid,
    reference: &Grid,
    origin: (usize, usize),
    size: (usize, usize),
    margin: usize,
    factor: usize,
) -> Result<Vec<f64>> {
    let c = decoded.channels();
    if reference.channels() != c {
        return Err(Error::Contract("reference and patch channel counts differ".into()));
    }
    let f = factor as f64;
    let mut ref_sum = vec![0.0; c];
    let mut patch_sum = vec![0.0; c];
    let mut buf = vec![0.0; c];
    for py in 0..size.0 {
        let y = ((origin.0 + py) as f64 + 0.5) / f - 0.5;
        for px in 0..size.1 {
            let x = ((origin.1 + px) as f64 + 0.5) / f - 0.5;
            reference.sample_bilinear_wrapped(y, x, &mut buf);
            let v = decoded.pixel(py + margin, px + margin);
            for ch in 0..c {
                ref_sum[ch] += buf[ch];
                patch_sum[ch] += v[ch];
            }
        }
    }
    let n = (size.0 * size.1) as f64;
    Ok(ref_sum.iter().zip(&patch_sum).map(|(r, p)| (r - p) / n).collect())
}

fn accumulate(out: &mut Grid, plan: &DecodePlan, idx: usize, decoded: &Grid, shift: &[f64], margin: usize) {
    let (a, b) = plan.patch_index(idx);
    let s = plan.rows.scale;
    let (r0, ph) = plan.rows.segments[a];
    let (c0, pw) = plan.cols.segments[b];
    let (hp, wp) = (out.height(), out.width());
    for py in 0..ph * s {
        let wy = plan.rows.normalized_weight(a, py);
        if wy == 0.0 {
            continue;
        }
        let gy = (r0 * s + py) % hp;
        for px in 0..pw * s {
            let wgt = wy * plan.cols.normalized_weight(b, px);
            if wgt == 0.0 {
                continue;
            }
            let gx = (c0 * s + px) % wp;
            let src = decoded.pixel(py + margin, px + margin);
            for ((o, v), sh) in out.pixel_mut(gy, gx).iter_mut().zip(src).zip(shift) {
                *o += wgt * (v + sh);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::rmse;
    use crate::tiling::{roll, seam_energy, interior_gradient_energy, RollOffset, SeamAxis};

    fn smooth_latent(h: usize, w: usize, c: usize) -> Grid {
        Grid::from_fn(h, w, c, |i, j, k| {
            let (y, x) = (i as f64 / h as f64, j as f64 / w as f64);
            let tau = std::f64::consts::TAU;
            (tau * (x + 0.3 * k as f64)).sin() * 0.7 + (tau * (2.0 * y - x)).cos() * 0.4 + 0.05 * k as f64
        })
    }

    #[test]
    fn kernel_shape() {
        for n in [4, 5, 16, 33] {
            let k = gaussian_weights(n, 0.25).unwrap();
            for i in 0..n {
                assert_eq!(k.weight(0, i), 0.0);
                assert_eq!(k.weight(i, 0), 0.0);
                assert_eq!(k.weight(n - 1, i), 0.0);
                for j in 0..n {
                    assert_eq!(k.weight(i, j), k.weight(n - 1 - i, j));
                    assert_eq!(k.weight(i, j), k.weight(i, n - 1 - j));
                    assert!(k.weight(i, j) >= 0.0);
                }
            }
            let c = (n - 1) / 2;
            let peak = k.weight(c, c);
            assert!(peak > 0.0);
            let ties = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .filter(|&(i, j)| k.weight(i, j) >= peak)
                .count();
            // Even sizes have a 2x2 plateau at the centre.
            assert_eq!(ties, if n % 2 == 1 { 1 } else { 4 });
        }
        assert!(gaussian_weights(3, 0.25).is_err());
        assert!(gaussian_weights(8, 0.0).is_err());
    }

    #[test]
    fn partition_of_unity() {
        for (len, patch, overlap) in [(12, 4, 0.5), (40, 8, 0.25), (21, 8, 0.25), (9, 8, 0.5)] {
            let cfg = PatchedDecodeConfig {
                patch,
                overlap,
                ..Default::default()
            };
            let plan = DecodePlan::new(Shape::new(len, len + 3, 1), &cfg, 8).unwrap();
            let (hp, wp) = (len * 8, (len + 3) * 8);
            let mut acc = vec![0.0; hp * wp];
            for k in 0..plan.patch_count() {
                let (a, b) = plan.patch_index(k);
                let (r0, ph) = plan.rows.segments[a];
                let (c0, pw) = plan.cols.segments[b];
                for py in 0..ph * 8 {
                    for px in 0..pw * 8 {
                        acc[((r0 * 8 + py) % hp) * wp + (c0 * 8 + px) % wp] += plan.normalized_weight(k, py, px);
                    }
                }
            }
            assert!(acc.iter().all(|v| (v - 1.0).abs() < 1e-12), "{len} {patch} {overlap}");
        }
    }

    #[test]
    fn mean_match_examples() {
        let p = Grid::filled(3, 3, 2, 0.5);
        let r = Grid::filled(5, 5, 2, 0.3);
        let m = mean_match(&p, &r).unwrap();
        assert!(m.data().iter().all(|v| (v - 0.3).abs() < 1e-15));

        let p = smooth_latent(6, 6, 2);
        assert_eq!(mean_match(&p, &p).unwrap(), p);

        let r = Grid::from_fn(4, 4, 2, |i, j, k| (i + j + k) as f64);
        let m = mean_match(&p, &r).unwrap();
        let var = |g: &Grid, ch: usize| {
            let c = g.channel(ch);
            let mu = c.mean();
            c.data().iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / c.data().len() as f64
        };
        for ch in 0..2 {
            assert!((m.channel(ch).mean() - r.channel(ch).mean()).abs() < 1e-12);
            assert!((var(&m, ch) - var(&p, ch)).abs() < 1e-9);
        }
        assert!(mean_match(&p, &Grid::zeros(2, 2, 3)).is_err());
    }

    #[test]
    fn mock_decoder_properties() {
        let d = LinearMockDecoder::new(5);
        let z = Grid::zeros(3, 4, LATENT_CHANNELS);
        let out = d.decode(&z).unwrap();
        assert_eq!(out.shape(), Shape::new(24, 32, MAP_CHANNELS));
        assert!(out.data().iter().all(|&v| v == 0.0));

        let z = Grid::filled(3, 4, LATENT_CHANNELS, 0.7);
        let out = d.decode(&z).unwrap();
        for k in 0..MAP_CHANNELS {
            let c = out.channel(k);
            let v0 = c.data()[0];
            assert!(c.data().iter().all(|v| (v - v0).abs() < 1e-12));
        }

        let z = smooth_latent(6, 5, LATENT_CHANNELS);
        let shifted = d.decode(&roll(&z, RollOffset::new(2, -1))).unwrap();
        let expected = roll(&d.decode(&z).unwrap(), RollOffset::new(16, -8));
        assert!(rmse(&shifted, &expected).unwrap() < 1e-12);

        assert_eq!(LinearMockDecoder::new(5).matrix(), d.matrix());
        assert_ne!(LinearMockDecoder::new(6).matrix(), d.matrix());
        assert!(d.decode(&Grid::zeros(2, 2, 3)).is_err());
    }

    #[test]
    fn single_patch_is_plain_decode() {
        let d = LinearMockDecoder::new(1);
        let z = smooth_latent(8, 6, LATENT_CHANNELS);
        let cfg = PatchedDecodeConfig {
            patch: 8,
            ..Default::default()
        };
        assert_eq!(patched_decode(&d, &z, &cfg).unwrap(), d.decode(&z).unwrap());
    }

    #[test]
    fn blending_alone_is_exact() {
        let d = LinearMockDecoder::new(2);
        let z = smooth_latent(32, 24, LATENT_CHANNELS);
        let cfg = PatchedDecodeConfig {
            patch: 8,
            mean_match: false,
            ..Default::default()
        };
        let (out, stats) = patched_decode_with_stats(&d, &z, &cfg).unwrap();
        assert_eq!(stats.reference_factor, 4);
        assert!(stats.patches > 1);
        assert!(rmse(&out, &d.decode(&z).unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn mean_match_is_exact_when_reference_agrees() {
        // Period of 4 cells: every 2x2 box average and every patch mean is zero.
        let d = LinearMockDecoder::new(2);
        let z = Grid::from_fn(24, 24, LATENT_CHANNELS, |i, j, k| {
            (std::f64::consts::FRAC_PI_2 * (i + 2 * j + k) as f64).sin()
        });
        let cfg = PatchedDecodeConfig {
            patch: 12,
            overlap: 0.5,
            ..Default::default()
        };
        let out = patched_decode(&d, &z, &cfg).unwrap();
        assert!(rmse(&out, &d.decode(&z).unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn mean_match_tracks_reference_scale() {
        // The shift follows a 4x coarser reference, so it is small but not zero.
        let d = LinearMockDecoder::new(2);
        let z = smooth_latent(32, 24, LATENT_CHANNELS);
        let cfg = PatchedDecodeConfig {
            patch: 8,
            ..Default::default()
        };
        let full = d.decode(&z).unwrap();
        let std = (full.data().iter().map(|v| v * v).sum::<f64>() / full.data().len() as f64).sqrt();
        let e = rmse(&patched_decode(&d, &z, &cfg).unwrap(), &full).unwrap();
        assert!(e > 0.0 && e < 0.1 * std, "{e} vs {std}");
    }

    #[test]
    fn parallelism_does_not_change_output() {
        let d = LinearMockDecoder::new(3);
        let z = smooth_latent(24, 24, LATENT_CHANNELS);
        let mut cfg = PatchedDecodeConfig {
            patch: 8,
            max_parallel: 1,
            ..Default::default()
        };
        let a = patched_decode(&d, &z, &cfg).unwrap();
        cfg.max_parallel = 5;
        assert_eq!(a, patched_decode(&d, &z, &cfg).unwrap());
    }

    #[test]
    fn no_visible_patch_seams() {
        let d = LinearMockDecoder::new(4);
        // 48 cells, patch 16, stride 12: four patches starting every 12 cells.
        let z = smooth_latent(48, 48, LATENT_CHANNELS);
        let cfg = PatchedDecodeConfig {
            patch: 16,
            ..Default::default()
        };
        let out = patched_decode(&d, &z, &cfg).unwrap();
        let seam = seam_energy(&out, Some(96), SeamAxis::Both);
        let interior = interior_gradient_energy(&out, Some(96), SeamAxis::Both);
        assert!(seam <= 2.0 * interior, "{seam} vs {interior}");
    }

    struct Broken;
    impl Decoder for Broken {
        fn decode(&self, z: &LatentGrid) -> Result<Grid> {
            Ok(Grid::zeros(z.height(), z.width(), MAP_CHANNELS))
        }
    }

    #[test]
    fn contract_violation_is_reported() {
        let z = Grid::zeros(16, 16, LATENT_CHANNELS);
        let cfg = PatchedDecodeConfig {
            patch: 8,
            ..Default::default()
        };
        assert!(matches!(patched_decode(&Broken, &z, &cfg), Err(Error::Contract(_))));
    }

    #[test]
    fn config_validation() {
        let z = Grid::zeros(16, 16, LATENT_CHANNELS);
        let d = LinearMockDecoder::new(0);
        for cfg in [
            PatchedDecodeConfig { overlap: 0.0, ..Default::default() },
            PatchedDecodeConfig { overlap: 0.6, ..Default::default() },
            PatchedDecodeConfig { max_parallel: 0, ..Default::default() },
        ] {
            assert!(patched_decode(&d, &z, &cfg).unwrap_err().is_validation());
        }
        assert_eq!(reference_factor(Shape::new(128, 192, 1), 64).unwrap(), 4);
        assert_eq!(reference_factor(Shape::new(192, 192, 1), 64).unwrap(), 3);
        assert!(reference_factor(Shape::new(67, 67, 1), 64).is_ok());
        assert!(reference_factor(Shape::new(131, 130, 1), 64).is_err());
    }
}
