//! Masks and condition packing for border inpainting.
//!
//! Regenerating a ring around the image border lets the rolled sampler
//! synthesize a boundary that wraps seamlessly. [`InpaintOracle`] is an
//! analytic stand-in for the conditioned generator: it pins the unmasked
//! cells to known content and smoothly fills the masked ones.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, LatentGrid, Shape};
use crate::oracles::attractor_eps;
use crate::sampler::{Denoiser, NoiseSchedule, Placement};

/// Per-pixel flags; 1 marks a pixel to regenerate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let data = (0..height * width).map(|n| f(n / width, n % width) as u8).collect();
        Self { height, width, data }
    }

    /// Reads a single-channel grid whose values must be exactly 0 or 1.
    pub fn from_grid(grid: &Grid) -> Result<Self> {
        if grid.channels() != 1 {
            return Err(Error::invalid(format!("mask grid must have 1 channel, got {}", grid.channels())));
        }
        let mut data = Vec::with_capacity(grid.data().len());
        for &v in grid.data() {
            data.push(match v {
                0.0 => 0,
                1.0 => 1,
                _ => return Err(Error::invalid(format!("mask values must be 0 or 1, found {v}"))),
            });
        }
        Ok(Self {
            height: grid.height(),
            width: grid.width(),
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col] == 1
    }

    pub fn masked_count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn masked_fraction(&self) -> f64 {
        self.masked_count() as f64 / self.data.len() as f64
    }

    pub fn to_grid(&self) -> Grid {
        Grid::from_fn(self.height, self.width, 1, |i, j, _| self.get(i, j) as u8 as f64)
    }
}

/// Border width in pixels for one axis.
pub fn border_width(dim: usize, frac: f64) -> usize {
    (frac * dim as f64).round() as usize
}

/// Ring of `round(frac * dim)` pixels on every side.
pub fn border_mask(height: usize, width: usize, frac: f64) -> Result<BinaryMask> {
    if !(frac > 0.0 && frac < 0.5) {
        return Err(Error::invalid(format!("border fraction must be in (0, 0.5), got {frac}")));
    }
    let (bh, bw) = (border_width(height, frac), border_width(width, frac));
    if bh == 0 || bw == 0 {
        return Err(Error::invalid(format!(
            "empty border: fraction {frac} of {height}x{width} rounds to zero pixels"
        )));
    }
    Ok(BinaryMask::from_fn(height, width, |i, j| {
        i < bh || i >= height - bh || j < bw || j >= width - bw
    }))
}

/// Axis-aligned rectangle covering a uniformly drawn 0 to 40% of the image.
///
/// Aspect ratio is drawn uniformly in [0.5, 2]; placement is uniform over
/// positions that keep the rectangle inside the image.
pub fn random_area_mask(height: usize, width: usize, rng: &mut impl Rng) -> BinaryMask {
    let area = rng.random_range(0.0..=0.4) * (height * width) as f64;
    let aspect: f64 = rng.random_range(0.5..=2.0);
    let rh = ((area * aspect).sqrt().round() as usize).min(height);
    let rw = ((area / aspect).sqrt().round() as usize).min(width);
    if rh == 0 || rw == 0 {
        return BinaryMask::zeros(height, width);
    }
    let r0 = rng.random_range(0..=height - rh);
    let c0 = rng.random_range(0..=width - rw);
    BinaryMask::from_fn(height, width, |i, j| {
        (r0..r0 + rh).contains(&i) && (c0..c0 + rw).contains(&j)
    })
}

/// Packs `[R, G, B, mask]` with masked colour zeroed.
pub fn pack_condition(rgb: &Grid, mask: &BinaryMask) -> Result<Grid> {
    if rgb.channels() != 3 {
        return Err(Error::invalid(format!("condition image must be RGB, got {} channels", rgb.channels())));
    }
    if (rgb.height(), rgb.width()) != (mask.height(), mask.width()) {
        return Err(Error::ShapeMismatch {
            expected: Shape::new(mask.height(), mask.width(), 3),
            actual: rgb.shape(),
        });
    }
    if let Some(v) = rgb.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid(format!("condition RGB must lie in [0, 1], found {v}")));
    }
    let mut out = Grid::zeros(rgb.height(), rgb.width(), 4);
    for i in 0..rgb.height() {
        for j in 0..rgb.width() {
            let dst = out.pixel_mut(i, j);
            if mask.get(i, j) {
                dst[3] = 1.0;
            } else {
                dst[..3].copy_from_slice(rgb.pixel(i, j));
            }
        }
    }
    Ok(out)
}

/// Splits a packed condition back into RGB and mask.
pub fn unpack_condition(packed: &Grid) -> Result<(Grid, BinaryMask)> {
    if packed.channels() != 4 {
        return Err(Error::invalid(format!("packed condition must have 4 channels, got {}", packed.channels())));
    }
    Ok((packed.channels_range(0, 3), BinaryMask::from_grid(&packed.channel(3))?))
}

/// Analytic inpainting denoiser over a global latent frame.
///
/// Unmasked cells predict the noise that leads to `known`; masked cells use a
/// blurred estimate of the current sample, so the ring is filled with content
/// continuous with its surroundings, including across the wrap.
#[derive(Debug, Clone)]
pub struct InpaintOracle {
    known: LatentGrid,
    mask: BinaryMask,
    radius: usize,
    sched: NoiseSchedule,
}

impl InpaintOracle {
    pub fn new(known: LatentGrid, mask: BinaryMask, radius: usize, sched: NoiseSchedule) -> Result<Self> {
        if (known.height(), known.width()) != (mask.height(), mask.width()) {
            return Err(Error::invalid(format!(
                "mask {}x{} does not match latent {}",
                mask.height(),
                mask.width(),
                known.shape()
            )));
        }
        Ok(Self {
            known,
            mask,
            radius,
            sched,
        })
    }

    pub fn mask(&self) -> &BinaryMask {
        &self.mask
    }
}

impl Denoiser for InpaintOracle {
    fn predict_noise(&self, z_t: &LatentGrid, t: usize) -> Result<LatentGrid> {
        self.predict_noise_at(z_t, t, &Placement::whole(z_t.shape()))
    }

    fn predict_noise_at(&self, z_t: &LatentGrid, t: usize, placement: &Placement) -> Result<LatentGrid> {
        if (placement.grid_height, placement.grid_width) != (self.known.height(), self.known.width()) {
            return Err(Error::invalid(format!(
                "inpainting frame is {}x{}, sampler grid is {}x{}",
                self.known.height(),
                self.known.width(),
                placement.grid_height,
                placement.grid_width
            )));
        }
        let ab = self.sched.alpha_bar(t);
        let known = self.known.crop_wrapped(placement.row, placement.col, z_t.height(), z_t.width());
        let (gh, gw) = (placement.grid_height, placement.grid_width);
        let is_masked = |i: usize, j: usize| self.mask.get((placement.row + i) % gh, (placement.col + j) % gw);

        let mut estimate = z_t.map(|v| ab.sqrt() * v);
        for i in 0..z_t.height() {
            for j in 0..z_t.width() {
                if !is_masked(i, j) {
                    estimate.pixel_mut(i, j).copy_from_slice(known.pixel(i, j));
                }
            }
        }
        let wrap = [z_t.height() == gh, z_t.width() == gw];
        let blurred = bounded_blur(&estimate, self.radius, wrap);
        for i in 0..z_t.height() {
            for j in 0..z_t.width() {
                if is_masked(i, j) {
                    estimate.pixel_mut(i, j).copy_from_slice(blurred.pixel(i, j));
                }
            }
        }
        attractor_eps(z_t, ab, &estimate)
    }
}

/// Separable triangular blur. Along an axis flagged in `wrap` taps wrap
/// around; elsewhere they are dropped at the edge and the weights
/// renormalised, so a patch never borrows values from its opposite edge.
fn bounded_blur(grid: &Grid, radius: usize, wrap: [bool; 2]) -> Grid {
    let r = radius as isize;
    let (h, w, c) = (grid.height(), grid.width(), grid.channels());
    let pass = |src: &Grid, along_rows: bool| {
        let mut out = Grid::zeros(h, w, c);
        for i in 0..h {
            for j in 0..w {
                for k in 0..c {
                    let (mut acc, mut norm) = (0.0, 0.0);
                    for d in -r..=r {
                        let (mut ii, mut jj) = if along_rows {
                            (i as isize + d, j as isize)
                        } else {
                            (i as isize, j as isize + d)
                        };
                        if wrap[0] {
                            ii = ii.rem_euclid(h as isize);
                        }
                        if wrap[1] {
                            jj = jj.rem_euclid(w as isize);
                        }
                        if ii < 0 || jj < 0 || ii >= h as isize || jj >= w as isize {
                            continue;
                        }
                        let wt = (r + 1 - d.abs()) as f64;
                        acc += wt * src.get(ii as usize, jj as usize, k);
                        norm += wt;
                    }
                    out.set(i, j, k, acc / norm);
                }
            }
        }
        out
    };
    pass(&pass(grid, false), true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn border_16_at_one_sixteenth() {
        let m = border_mask(16, 16, 1.0 / 16.0).unwrap();
        assert_eq!(m.masked_count(), 60);
        assert_eq!(m.masked_fraction(), 0.234375);
        assert!(m.get(0, 5) && m.get(15, 5) && m.get(7, 0) && m.get(7, 15));
        assert!(!m.get(1, 1) && !m.get(14, 14));
    }

    #[test]
    fn border_errors() {
        assert!(border_mask(16, 16, 0.0).is_err());
        assert!(border_mask(16, 16, 0.5).is_err());
        let e = border_mask(16, 16, 0.01).unwrap_err();
        assert!(e.to_string().contains("empty border"));
        assert!(border_mask(64, 8, 1.0 / 32.0).unwrap_err().is_validation());
    }

    proptest! {
        #[test]
        fn border_fraction_formula(h in 4usize..80, w in 4usize..80, frac in 0.05f64..0.45) {
            let Ok(m) = border_mask(h, w, frac) else { return Ok(()); };
            let (bh, bw) = (border_width(h, frac) as f64, border_width(w, frac) as f64);
            let inner = (h as f64 - 2.0 * bh).max(0.0) * (w as f64 - 2.0 * bw).max(0.0);
            prop_assert_eq!(m.masked_count() as f64, (h * w) as f64 - inner);
            for i in 0..h {
                for j in 0..w {
                    prop_assert_eq!(m.get(i, j), m.get(h - 1 - i, j));
                    prop_assert_eq!(m.get(i, j), m.get(i, w - 1 - j));
                }
            }
        }
    }

    #[test]
    fn random_masks_follow_uniform_area() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (h, w) = (64, 64);
        let mut total = 0.0;
        let n = 10_000;
        for _ in 0..n {
            let m = random_area_mask(h, w, &mut rng);
            let f = m.masked_fraction();
            assert!(f <= 0.4 + (h + w + 1) as f64 / (h * w) as f64);
            total += f;
        }
        let mean = total / n as f64;
        assert!((mean - 0.2).abs() < 0.01, "{mean}");
    }

    #[test]
    fn pack_roundtrip() {
        let rgb = Grid::from_fn(5, 4, 3, |i, j, k| ((i + j + k) % 5) as f64 / 4.0);
        let none = BinaryMask::zeros(5, 4);
        let p = pack_condition(&rgb, &none).unwrap();
        assert_eq!(p.channels_range(0, 3), rgb);
        assert!(p.channel(3).data().iter().all(|&v| v == 0.0));

        let all = BinaryMask::from_fn(5, 4, |_, _| true);
        let p = pack_condition(&rgb, &all).unwrap();
        assert!(p.channels_range(0, 3).data().iter().all(|&v| v == 0.0));
        assert!(p.channel(3).data().iter().all(|&v| v == 1.0));

        let ring = border_mask(5, 4, 0.25).unwrap();
        let (back_rgb, back_mask) = unpack_condition(&pack_condition(&rgb, &ring).unwrap()).unwrap();
        assert_eq!(back_mask, ring);
        for i in 0..5 {
            for j in 0..4 {
                if !ring.get(i, j) {
                    assert_eq!(back_rgb.pixel(i, j), rgb.pixel(i, j));
                }
            }
        }
    }

    #[test]
    fn pack_rejects_bad_input() {
        let rgb = Grid::zeros(4, 4, 3);
        assert!(pack_condition(&rgb, &BinaryMask::zeros(4, 5)).is_err());
        assert!(pack_condition(&Grid::zeros(4, 4, 2), &BinaryMask::zeros(4, 4)).is_err());
        assert!(pack_condition(&Grid::filled(4, 4, 3, 1.5), &BinaryMask::zeros(4, 4)).is_err());
        assert!(unpack_condition(&Grid::filled(2, 2, 4, 0.5)).is_err());
    }

    #[test]
    fn bounded_blur_edges() {
        let g = Grid::from_fn(6, 7, 2, |i, j, k| ((i * 7 + j * 3 + k) % 5) as f64);
        let wrapped = bounded_blur(&g, 2, [true, true]);
        let reference = crate::oracles::toroidal_blur(&g, 2);
        assert!(crate::grid::rmse(&wrapped, &reference).unwrap() < 1e-12);
        // Constants survive the edge renormalisation.
        let c = bounded_blur(&Grid::filled(5, 5, 1, 0.3), 2, [false, false]);
        assert!(c.data().iter().all(|v| (v - 0.3).abs() < 1e-15));
        // A step at the right edge does not leak into the left column.
        let step = Grid::from_fn(4, 8, 1, |_, j, _| if j == 7 { 1.0 } else { 0.0 });
        let b = bounded_blur(&step, 2, [false, false]);
        assert_eq!(b.get(1, 0, 0), 0.0);
        assert!(bounded_blur(&step, 2, [false, true]).get(1, 0, 0) > 0.0);
    }

    #[test]
    fn oracle_pins_known_cells() {
        use crate::sampler::forward_diffuse;
        let s = NoiseSchedule::default();
        let known = Grid::from_fn(8, 8, 2, |i, j, k| (i * 8 + j + k) as f64 / 64.0);
        let mask = border_mask(8, 8, 0.125).unwrap();
        let o = InpaintOracle::new(known.clone(), mask.clone(), 1, s.clone()).unwrap();
        let eps = Grid::from_fn(8, 8, 2, |i, j, k| ((i * 3 + j * 5 + k) % 7) as f64 / 3.0 - 1.0);
        let z = forward_diffuse(&known, 300, &eps, &s).unwrap();
        let pred = o.predict_noise(&z, 300).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                if !mask.get(i, j) {
                    for k in 0..2 {
                        assert!((pred.get(i, j, k) - eps.get(i, j, k)).abs() < 1e-9);
                    }
                }
            }
        }
    }
}
