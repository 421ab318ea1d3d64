//! Height-derived normals and displacement-factor fitting.
//!
//! The tile is the unit square, so one pixel spans `1/W` horizontally and
//! `1/H` vertically. Tangent x follows columns, y follows rows.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{rmse, Grid};

/// Upper end of the displacement search, in height units per tile width.
pub const DEFAULT_MAX_DISPLACEMENT: f64 = 10.0;

/// Toroidal central-difference gradients of a height map times `factor`,
/// as a 2-channel `(dh/dx, dh/dy)` grid.
pub fn height_gradients(height: &Grid, factor: f64) -> Grid {
    let (h, w) = (height.height(), height.width());
    let (sx, sy) = (factor * w as f64 / 2.0, factor * h as f64 / 2.0);
    let mut out = Grid::zeros(h, w, 2);
    for i in 0..h {
        for j in 0..w {
            let (ii, jj) = (i as isize, j as isize);
            let gx = height.get_wrapped(ii, jj + 1, 0) - height.get_wrapped(ii, jj - 1, 0);
            let gy = height.get_wrapped(ii + 1, jj, 0) - height.get_wrapped(ii - 1, jj, 0);
            out.pixel_mut(i, j).copy_from_slice(&[gx * sx, gy * sy]);
        }
    }
    out
}

/// Unit normals `normalize(-gx, -gy, 1)` from a height map.
pub fn height_to_normal(height: &Grid, factor: f64) -> Result<Grid> {
    if height.channels() != 1 {
        return Err(Error::invalid(format!("height map must have 1 channel, got {}", height.channels())));
    }
    if !(factor >= 0.0 && factor.is_finite()) {
        return Err(Error::invalid(format!("displacement factor must be non-negative, got {factor}")));
    }
    let g = height_gradients(height, factor);
    let mut out = Grid::zeros(height.height(), height.width(), 3);
    for (dst, src) in out.data_mut().chunks_mut(3).zip(g.data().chunks(2)) {
        let inv = 1.0 / (src[0] * src[0] + src[1] * src[1] + 1.0).sqrt();
        dst.copy_from_slice(&[-src[0] * inv, -src[1] * inv, inv]);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisplacementFit {
    pub factor: f64,
    pub residual_rmse: f64,
    /// Set when the height map is flat, so any factor fits equally well.
    pub degenerate: bool,
}

/// Finds the factor in `[0, d_max]` whose height normals best match
/// `target` in RMSE: a coarse scan brackets the minimum, golden-section
/// search refines it.
pub fn fit_displacement_factor(height: &Grid, target: &Grid, d_max: f64) -> Result<DisplacementFit> {
    if target.shape() != crate::grid::Shape::new(height.height(), height.width(), 3) {
        return Err(Error::ShapeMismatch {
            expected: crate::grid::Shape::new(height.height(), height.width(), 3),
            actual: target.shape(),
        });
    }
    if !(d_max > 0.0 && d_max.is_finite()) {
        return Err(Error::invalid(format!("search bound must be positive, got {d_max}")));
    }
    height.ensure_finite("height")?;
    target.ensure_finite("target normals")?;
    let grad = height_gradients(height, 1.0);
    if grad.data().iter().all(|&g| g == 0.0) {
        return Ok(DisplacementFit {
            factor: 0.0,
            residual_rmse: rmse(&height_to_normal(height, 0.0)?, target)?,
            degenerate: true,
        });
    }
    // Same value as rmse(height_to_normal(height, d), target), without the
    // intermediate grid; rows run in parallel and are summed in order.
    let width = height.width();
    let residual = |d: f64| -> Result<f64> {
        let rows: Vec<f64> = grad
            .data()
            .par_chunks(2 * width)
            .zip(target.data().par_chunks(3 * width))
            .map(|(g, t)| {
                g.chunks(2)
                    .zip(t.chunks(3))
                    .map(|(g, t)| {
                        let (gx, gy) = (g[0] * d, g[1] * d);
                        let inv = 1.0 / (gx * gx + gy * gy + 1.0).sqrt();
                        let e = [-gx * inv - t[0], -gy * inv - t[1], inv - t[2]];
                        e[0] * e[0] + e[1] * e[1] + e[2] * e[2]
                    })
                    .sum::<f64>()
            })
            .collect();
        Ok((rows.iter().sum::<f64>() / target.data().len() as f64).sqrt())
    };

    const SCAN: usize = 100;
    let mut best = (0, f64::INFINITY);
    for k in 0..=SCAN {
        let r = residual(d_max * k as f64 / SCAN as f64)?;
        if r < best.1 {
            best = (k, r);
        }
    }
    let step = d_max / SCAN as f64;
    let (mut a, mut b) = (
        (best.0 as f64 - 1.0).max(0.0) * step,
        (best.0 as f64 + 1.0).min(SCAN as f64) * step,
    );
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (residual(c)?, residual(d)?);
    while b - a > 1e-10 * d_max {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = residual(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = residual(d)?;
        }
    }
    let mid = (a + b) / 2.0;
    let (factor, residual_rmse) = [(mid, residual(mid)?), (best.0 as f64 * step, best.1)]
        .into_iter()
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .expect("two candidates");
    Ok(DisplacementFit {
        factor,
        residual_rmse,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn bumps(h: usize, w: usize) -> Grid {
        Grid::from_fn(h, w, 1, |i, j, _| {
            let tau = std::f64::consts::TAU;
            let (y, x) = (i as f64 / h as f64, j as f64 / w as f64);
            0.5 + 0.25 * (tau * x).sin() * (tau * 2.0 * y).cos() + 0.1 * (tau * 3.0 * (x + y)).sin()
        })
    }

    #[test]
    fn constant_height_is_flat() {
        let n = height_to_normal(&Grid::filled(5, 6, 1, 0.7), 3.0).unwrap();
        for px in n.data().chunks(3) {
            assert_eq!(px, &[0.0, 0.0, 1.0]);
        }
        let n = height_to_normal(&bumps(8, 8), 0.0).unwrap();
        for px in n.data().chunks(3) {
            assert_eq!(px, &[-0.0, -0.0, 1.0]);
        }
    }

    #[test]
    fn unit_ramp_tilts_45_degrees() {
        // h = x in tile units, so the slope is 1 away from the wrap.
        let w = 16;
        let h = Grid::from_fn(4, w, 1, |_, j, _| j as f64 / w as f64);
        let n = height_to_normal(&h, 1.0).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        for j in 1..w - 1 {
            let p = n.pixel(2, j);
            assert!((p[0] + r).abs() < 1e-12 && p[1].abs() < 1e-12 && (p[2] - r).abs() < 1e-12);
        }
    }

    #[test]
    fn offset_invariance() {
        // Dyadic heights keep the additions exact.
        let h = Grid::from_fn(8, 8, 1, |i, j, _| ((i * 5 + j * 3) % 16) as f64 / 64.0);
        let a = height_to_normal(&h, 1.3).unwrap();
        let b = height_to_normal(&h.map(|v| v + 0.5), 1.3).unwrap();
        assert_eq!(a, b);
        let c = height_to_normal(&bumps(8, 8), 1.3).unwrap();
        let d = height_to_normal(&bumps(8, 8).map(|v| v + 0.123), 1.3).unwrap();
        assert!(rmse(&c, &d).unwrap() < 1e-12);
    }

    #[test]
    fn roundtrip_fit() {
        let h = bumps(32, 32);
        let target = height_to_normal(&h, 0.5).unwrap();
        let fit = fit_displacement_factor(&h, &target, DEFAULT_MAX_DISPLACEMENT).unwrap();
        assert!((fit.factor - 0.5).abs() < 1e-3, "{fit:?}");
        assert!(fit.residual_rmse < 1e-6);
        assert!(!fit.degenerate);
        let direct = rmse(&height_to_normal(&h, fit.factor).unwrap(), &target).unwrap();
        assert!((direct - fit.residual_rmse).abs() < 1e-12);
    }

    #[test]
    fn noisy_fit() {
        let h = bumps(32, 32);
        let mut target = height_to_normal(&h, 0.5).unwrap();
        let noise = Normal::new(0.0, 0.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        target.data_mut().iter_mut().for_each(|v| *v += noise.sample(&mut rng));
        let fit = fit_displacement_factor(&h, &target, DEFAULT_MAX_DISPLACEMENT).unwrap();
        assert!((fit.factor - 0.5).abs() < 0.01, "{fit:?}");
    }

    #[test]
    fn flat_height_is_degenerate() {
        let h = Grid::filled(8, 8, 1, 0.4);
        let flat = height_to_normal(&h, 1.0).unwrap();
        let fit = fit_displacement_factor(&h, &flat, DEFAULT_MAX_DISPLACEMENT).unwrap();
        assert_eq!((fit.factor, fit.residual_rmse, fit.degenerate), (0.0, 0.0, true));

        let tilted = height_to_normal(&bumps(8, 8), 1.0).unwrap();
        let fit = fit_displacement_factor(&h, &tilted, DEFAULT_MAX_DISPLACEMENT).unwrap();
        assert!(fit.degenerate && fit.factor == 0.0 && fit.residual_rmse > 0.01);
    }

    #[test]
    fn shape_errors() {
        let h = Grid::zeros(4, 4, 1);
        assert!(fit_displacement_factor(&h, &Grid::zeros(4, 5, 3), 10.0).is_err());
        assert!(height_to_normal(&Grid::zeros(4, 4, 2), 1.0).is_err());
        assert!(height_to_normal(&h, -1.0).is_err());
    }
}
