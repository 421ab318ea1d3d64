//! Dense `height × width × channels` grids stored in row-major, channel-last order.
//!
//! The same container backs latent tensors and decoded pixel maps. Spatial
//! operations that need a boundary rule treat the grid as a torus, since the
//! materials produced by this crate are meant to tile.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default latent channel count of the material autoencoder.
pub const LATENT_CHANNELS: usize = 14;

/// Spatial downscale between decoded pixels and latent cells.
pub const LATENT_SCALE: usize = 8;

/// Channels in a decoded material map stack.
pub const MAP_CHANNELS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    pub const fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn pixels(&self) -> usize {
        self.height * self.width
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    shape: Shape,
    data: Vec<f64>,
}

/// Latent-space grid (`h = H/8`, `w = W/8`, `c = 14` by default).
pub type LatentGrid = Grid;

impl Grid {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        let shape = Shape::new(height, width, channels);
        Self {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        let shape = Shape::new(height, width, channels);
        if shape.is_empty() {
            return Err(Error::invalid(format!("grid dimensions must be positive, got {shape}")));
        }
        if data.len() != shape.len() {
            return Err(Error::invalid(format!(
                "grid {shape} needs {} values, got {}",
                shape.len(),
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    /// Builds a grid by evaluating `f(row, col, channel)` everywhere.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for i in 0..height {
            for j in 0..width {
                for k in 0..channels {
                    data.push(f(i, j, k));
                }
            }
        }
        Self {
            shape: Shape::new(height, width, channels),
            data,
        }
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.shape
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.shape.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.shape.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    fn offset(&self, row: usize, col: usize) -> usize {
        (row * self.shape.width + col) * self.shape.channels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[self.offset(row, col) + channel]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: f64) {
        let o = self.offset(row, col);
        self.data[o + channel] = value;
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let o = self.offset(row, col);
        &self.data[o..o + self.shape.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [f64] {
        let o = self.offset(row, col);
        let c = self.shape.channels;
        &mut self.data[o..o + c]
    }

    /// Value at a possibly out-of-range coordinate, wrapped toroidally.
    #[inline]
    pub fn get_wrapped(&self, row: isize, col: isize, channel: usize) -> f64 {
        let r = row.rem_euclid(self.shape.height as isize) as usize;
        let c = col.rem_euclid(self.shape.width as isize) as usize;
        self.get(r, c, channel)
    }

    pub fn ensure_shape(&self, expected: Shape) -> Result<()> {
        if self.shape != expected {
            return Err(Error::ShapeMismatch {
                expected,
                actual: self.shape,
            });
        }
        Ok(())
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination of two grids of identical shape.
    pub fn zip_map(&self, other: &Grid, f: impl Fn(f64, f64) -> f64) -> Result<Grid> {
        other.ensure_shape(self.shape)?;
        Ok(Grid {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn channel_means(&self) -> Vec<f64> {
        let c = self.shape.channels;
        let mut acc = vec![0.0; c];
        for px in self.data.chunks_exact(c) {
            for (a, v) in acc.iter_mut().zip(px) {
                *a += v;
            }
        }
        let n = self.shape.pixels() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    /// Extracts a single channel as a one-channel grid.
    pub fn channel(&self, channel: usize) -> Grid {
        let c = self.shape.channels;
        Grid {
            shape: Shape::new(self.shape.height, self.shape.width, 1),
            data: self.data.iter().skip(channel).step_by(c).copied().collect(),
        }
    }

    /// Extracts channels `start..start+count`.
    pub fn channels_range(&self, start: usize, count: usize) -> Grid {
        let c = self.shape.channels;
        let mut data = Vec::with_capacity(self.shape.pixels() * count);
        for px in self.data.chunks_exact(c) {
            data.extend_from_slice(&px[start..start + count]);
        }
        Grid {
            shape: Shape::new(self.shape.height, self.shape.width, count),
            data,
        }
    }

    /// Concatenates grids of equal spatial size along the channel axis.
    pub fn concat_channels(parts: &[&Grid]) -> Result<Grid> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat_channels needs at least one grid"))?;
        let (h, w) = (first.height(), first.width());
        let mut total = 0;
        for p in parts {
            if p.height() != h || p.width() != w {
                return Err(Error::ShapeMismatch {
                    expected: Shape::new(h, w, p.channels()),
                    actual: p.shape(),
                });
            }
            total += p.channels();
        }
        let mut data = Vec::with_capacity(h * w * total);
        for idx in 0..h * w {
            for p in parts {
                let c = p.channels();
                data.extend_from_slice(&p.data[idx * c..(idx + 1) * c]);
            }
        }
        Grid::from_vec(h, w, total, data)
    }

    /// Copies a `height × width` window starting at `(row, col)`, wrapping around the torus.
    pub fn crop_wrapped(&self, row: usize, col: usize, height: usize, width: usize) -> Grid {
        let c = self.shape.channels;
        let mut data = Vec::with_capacity(height * width * c);
        for i in 0..height {
            let r = (row + i) % self.shape.height;
            for j in 0..width {
                let cc = (col + j) % self.shape.width;
                data.extend_from_slice(self.pixel(r, cc));
            }
        }
        Grid {
            shape: Shape::new(height, width, c),
            data,
        }
    }

    /// Writes `src` into this grid with its top-left corner at `(row, col)`, wrapping around.
    pub fn paste_wrapped(&mut self, src: &Grid, row: usize, col: usize) -> Result<()> {
        if src.channels() != self.channels() {
            return Err(Error::ShapeMismatch {
                expected: Shape::new(src.height(), src.width(), self.channels()),
                actual: src.shape(),
            });
        }
        for i in 0..src.height() {
            let r = (row + i) % self.shape.height;
            for j in 0..src.width() {
                let cc = (col + j) % self.shape.width;
                self.pixel_mut(r, cc).copy_from_slice(src.pixel(i, j));
            }
        }
        Ok(())
    }

    /// Box-average downsampling by an integer factor that divides both dimensions.
    pub fn downsample_box(&self, factor: usize) -> Result<Grid> {
        if factor == 0 || !self.height().is_multiple_of(factor) || !self.width().is_multiple_of(factor) {
            return Err(Error::invalid(format!(
                "box downsample factor {factor} must divide grid {}",
                self.shape
            )));
        }
        let (h, w, c) = (self.height() / factor, self.width() / factor, self.channels());
        let norm = 1.0 / (factor * factor) as f64;
        let mut out = Grid::zeros(h, w, c);
        for i in 0..h {
            for j in 0..w {
                let dst = out.pixel_mut(i, j);
                for di in 0..factor {
                    for dj in 0..factor {
                        let src = &self.data[self.offset(i * factor + di, j * factor + dj)..][..c];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
                dst.iter_mut().for_each(|d| *d *= norm);
            }
        }
        Ok(out)
    }

    /// Bilinear sample at continuous coordinates with pixel centres at integer
    /// positions, wrapping around the torus. Writes one value per channel.
    pub fn sample_bilinear_wrapped(&self, y: f64, x: f64, out: &mut [f64]) {
        let (y0, x0) = (y.floor(), x.floor());
        let (fy, fx) = (y - y0, x - x0);
        let (h, w) = (self.height() as isize, self.width() as isize);
        let r0 = (y0 as isize).rem_euclid(h) as usize;
        let r1 = (y0 as isize + 1).rem_euclid(h) as usize;
        let c0 = (x0 as isize).rem_euclid(w) as usize;
        let c1 = (x0 as isize + 1).rem_euclid(w) as usize;
        let (p00, p01, p10, p11) = (
            self.pixel(r0, c0),
            self.pixel(r0, c1),
            self.pixel(r1, c0),
            self.pixel(r1, c1),
        );
        for k in 0..out.len() {
            let top = p00[k] + (p01[k] - p00[k]) * fx;
            let bottom = p10[k] + (p11[k] - p10[k]) * fx;
            out[k] = top + (bottom - top) * fy;
        }
    }

    /// Bilinear upsampling by an integer factor on the torus, with half-pixel
    /// aligned centres. Every source value spreads total weight `factor^2`, so
    /// channel means are preserved.
    pub fn upsample_bilinear(&self, factor: usize) -> Grid {
        let (h, w, c) = (self.height() * factor, self.width() * factor, self.channels());
        let f = factor as f64;
        let mut out = Grid::zeros(h, w, c);
        let mut buf = vec![0.0; c];
        for i in 0..h {
            let y = (i as f64 + 0.5) / f - 0.5;
            for j in 0..w {
                let x = (j as f64 + 0.5) / f - 0.5;
                self.sample_bilinear_wrapped(y, x, &mut buf);
                out.pixel_mut(i, j).copy_from_slice(&buf);
            }
        }
        out
    }
}

/// Root-mean-square difference over every element.
pub fn rmse(a: &Grid, b: &Grid) -> Result<f64> {
    b.ensure_shape(a.shape())?;
    let sq: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok((sq / a.data().len() as f64).sqrt())
}
