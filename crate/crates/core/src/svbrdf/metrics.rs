use crate::error::{Error, Result};
use crate::grid::Grid;

pub use crate::grid::rmse;

/// Mean of `1 - a.b` over pixels of two 3-channel unit-normal maps.
pub fn normal_cosine_error(a: &Grid, b: &Grid) -> Result<f64> {
    if a.channels() != 3 {
        return Err(Error::invalid(format!("normal maps need 3 channels, got {}", a.channels())));
    }
    b.ensure_shape(a.shape())?;
    let sum: f64 = a
        .data()
        .chunks(3)
        .zip(b.data().chunks(3))
        .map(|(p, q)| 1.0 - (p[0] * q[0] + p[1] * q[1] + p[2] * q[2]))
        .sum();
    Ok(sum / a.shape().pixels() as f64)
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Structural similarity with an 11x11 Gaussian window over valid positions,
/// values assumed in [0, 1], averaged over channels.
pub fn ssim(a: &Grid, b: &Grid) -> Result<f64> {
    b.ensure_shape(a.shape())?;
    let (h, w, c) = (a.height(), a.width(), a.channels());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid(format!("ssim needs images at least {SSIM_WINDOW} pixels across")));
    }
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|k| (-((k as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let norm: f64 = g.iter().sum::<f64>().powi(2);
    let (c1, c2) = (SSIM_K1 * SSIM_K1, SSIM_K2 * SSIM_K2);

    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for ch in 0..c {
        for i in 0..oh {
            for j in 0..ow {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for (di, gi) in g.iter().enumerate() {
                    for (dj, gj) in g.iter().enumerate() {
                        let wt = gi * gj / norm;
                        let (x, y) = (a.get(i + di, j + dj, ch), b.get(i + di, j + dj, ch));
                        ma += wt * x;
                        mb += wt * y;
                        saa += wt * x * x;
                        sbb += wt * y * y;
                        sab += wt * x * y;
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
        }
    }
    Ok(total / (oh * ow * c) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texture() -> Grid {
        Grid::from_fn(16, 14, 2, |i, j, k| (((i * 7 + j * 3 + k) % 11) as f64) / 10.0)
    }

    #[test]
    fn identical_inputs() {
        let t = texture();
        assert_eq!(rmse(&t, &t).unwrap(), 0.0);
        assert!((ssim(&t, &t).unwrap() - 1.0).abs() < 1e-12);
        let n = Grid::from_fn(3, 3, 3, |_, _, k| if k == 2 { 1.0 } else { 0.0 });
        assert_eq!(normal_cosine_error(&n, &n).unwrap(), 0.0);
    }

    #[test]
    fn simple_values() {
        assert_eq!(rmse(&Grid::zeros(4, 4, 2), &Grid::filled(4, 4, 2, 1.0)).unwrap(), 1.0);
        let up = Grid::from_fn(2, 2, 3, |_, _, k| if k == 2 { 1.0 } else { 0.0 });
        let down = up.map(|v| -v);
        assert_eq!(normal_cosine_error(&up, &down).unwrap(), 2.0);
    }

    #[test]
    fn ssim_orders_degradations() {
        let t = texture();
        let slight = t.map(|v| v * 0.95 + 0.02);
        let heavy = t.map(|v| 1.0 - v);
        let s1 = ssim(&t, &slight).unwrap();
        let s2 = ssim(&t, &heavy).unwrap();
        assert!(s1 < 1.0 && s1 > 0.9, "{s1}");
        assert!(s2 < 0.0, "{s2}");
        assert!((ssim(&slight, &t).unwrap() - s1).abs() < 1e-12);
    }

    #[test]
    fn ssim_constant_images() {
        // Zero variance: the score reduces to the luminance term.
        let a = Grid::filled(11, 11, 1, 0.2);
        let b = Grid::filled(11, 11, 1, 0.4);
        let expected = (2.0 * 0.2 * 0.4 + 1e-4) / (0.04 + 0.16 + 1e-4);
        assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-12);
        assert!(ssim(&Grid::zeros(10, 12, 1), &Grid::zeros(10, 12, 1)).is_err());
    }
}
