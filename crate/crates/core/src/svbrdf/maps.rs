use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, MAP_CHANNELS};

/// Channel offsets inside the 9-channel map stack.
pub mod channel {
    pub const BASECOLOR: usize = 0;
    pub const NORMAL_XY: usize = 3;
    pub const HEIGHT: usize = 5;
    pub const ROUGHNESS: usize = 6;
    pub const METALNESS: usize = 7;
    pub const OPACITY: usize = 8;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    Basecolor,
    Normal,
    Height,
    Roughness,
    Metalness,
    Opacity,
}

impl MapKind {
    pub const ALL: [MapKind; 6] = [
        MapKind::Basecolor,
        MapKind::Normal,
        MapKind::Height,
        MapKind::Roughness,
        MapKind::Metalness,
        MapKind::Opacity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MapKind::Basecolor => "basecolor",
            MapKind::Normal => "normal",
            MapKind::Height => "height",
            MapKind::Roughness => "roughness",
            MapKind::Metalness => "metalness",
            MapKind::Opacity => "opacity",
        }
    }

    /// First channel and channel count in the stack.
    pub fn channels(self) -> (usize, usize) {
        match self {
            MapKind::Basecolor => (channel::BASECOLOR, 3),
            MapKind::Normal => (channel::NORMAL_XY, 2),
            MapKind::Height => (channel::HEIGHT, 1),
            MapKind::Roughness => (channel::ROUGHNESS, 1),
            MapKind::Metalness => (channel::METALNESS, 1),
            MapKind::Opacity => (channel::OPACITY, 1),
        }
    }
}

/// Basecolor, normal xy, height, roughness, metalness and opacity in one
/// 9-channel grid. Normal z is implied by unit length.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialMaps {
    stack: Grid,
}

impl MaterialMaps {
    /// Wraps a stack already in map ranges, clamping every channel into range.
    pub fn from_stack(mut stack: Grid) -> Result<Self> {
        if stack.channels() != MAP_CHANNELS {
            return Err(Error::invalid(format!(
                "material stack needs {MAP_CHANNELS} channels, got {}",
                stack.channels()
            )));
        }
        stack.ensure_finite("material maps")?;
        for px in stack.data_mut().chunks_mut(MAP_CHANNELS) {
            clamp_pixel(px);
        }
        Ok(Self { stack })
    }

    /// Converts decoder output, where every channel lives in [-1, 1].
    pub fn from_decoded(decoded: &Grid) -> Result<Self> {
        let n = channel::NORMAL_XY;
        let mut stack = decoded.clone();
        if stack.channels() == MAP_CHANNELS {
            for px in stack.data_mut().chunks_mut(MAP_CHANNELS) {
                for (k, v) in px.iter_mut().enumerate() {
                    if k != n && k != n + 1 {
                        *v = (*v + 1.0) / 2.0;
                    }
                }
            }
        }
        Self::from_stack(stack)
    }

    /// Uniform maps with a flat normal.
    pub fn uniform(
        height: usize,
        width: usize,
        basecolor: [f64; 3],
        roughness: f64,
        metalness: f64,
    ) -> Result<Self> {
        let mut px = [0.0; MAP_CHANNELS];
        px[..3].copy_from_slice(&basecolor);
        px[channel::HEIGHT] = 0.5;
        px[channel::ROUGHNESS] = roughness;
        px[channel::METALNESS] = metalness;
        px[channel::OPACITY] = 1.0;
        Self::from_stack(Grid::from_fn(height, width, MAP_CHANNELS, |_, _, k| px[k]))
    }

    pub fn stack(&self) -> &Grid {
        &self.stack
    }

    pub fn into_stack(self) -> Grid {
        self.stack
    }

    pub fn height(&self) -> usize {
        self.stack.height()
    }

    pub fn width(&self) -> usize {
        self.stack.width()
    }

    pub fn map(&self, kind: MapKind) -> Grid {
        let (start, count) = kind.channels();
        self.stack.channels_range(start, count)
    }

    /// Replaces one map, clamping into range.
    pub fn set_map(&mut self, kind: MapKind, values: &Grid) -> Result<()> {
        let (start, count) = kind.channels();
        if values.shape() != crate::grid::Shape::new(self.height(), self.width(), count) {
            return Err(Error::ShapeMismatch {
                expected: crate::grid::Shape::new(self.height(), self.width(), count),
                actual: values.shape(),
            });
        }
        values.ensure_finite(kind.name())?;
        for i in 0..self.height() {
            for j in 0..self.width() {
                let px = self.stack.pixel_mut(i, j);
                px[start..start + count].copy_from_slice(values.pixel(i, j));
                clamp_pixel(px);
            }
        }
        Ok(())
    }

    pub fn basecolor_at(&self, i: usize, j: usize) -> [f64; 3] {
        let p = self.stack.pixel(i, j);
        [p[0], p[1], p[2]]
    }

    pub fn normal_at(&self, i: usize, j: usize) -> [f64; 3] {
        let p = self.stack.pixel(i, j);
        let (x, y) = (p[channel::NORMAL_XY], p[channel::NORMAL_XY + 1]);
        [x, y, (1.0 - x * x - y * y).max(0.0).sqrt()]
    }

    pub fn scalar_at(&self, kind: MapKind, i: usize, j: usize) -> f64 {
        self.stack.get(i, j, kind.channels().0)
    }

    /// Full unit normals as a 3-channel grid.
    pub fn normals(&self) -> Grid {
        let mut out = Grid::zeros(self.height(), self.width(), 3);
        for i in 0..self.height() {
            for j in 0..self.width() {
                out.pixel_mut(i, j).copy_from_slice(&self.normal_at(i, j));
            }
        }
        out
    }
}

fn clamp_pixel(px: &mut [f64]) {
    for (k, v) in px.iter_mut().enumerate() {
        if k != channel::NORMAL_XY && k != channel::NORMAL_XY + 1 {
            *v = v.clamp(0.0, 1.0);
        }
    }
    let (x, y) = (px[channel::NORMAL_XY], px[channel::NORMAL_XY + 1]);
    let r = (x * x + y * y).sqrt();
    if r > 1.0 {
        px[channel::NORMAL_XY] = x / r;
        px[channel::NORMAL_XY + 1] = y / r;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_budget() {
        let total: usize = MapKind::ALL.iter().map(|k| k.channels().1).sum();
        assert_eq!(total, MAP_CHANNELS);
        let mut starts: Vec<usize> = MapKind::ALL.iter().map(|k| k.channels().0).collect();
        starts.sort();
        assert_eq!(starts, vec![0, 3, 5, 6, 7, 8]);
    }

    #[test]
    fn construction_clamps() {
        let g = Grid::from_fn(2, 2, MAP_CHANNELS, |i, _, k| match k {
            3 => 0.9 + i as f64,
            4 => 0.9,
            _ => 1.5 - 2.0 * i as f64,
        });
        let m = MaterialMaps::from_stack(g).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let n = m.normal_at(i, j);
                assert!(n[0] * n[0] + n[1] * n[1] <= 1.0 + 1e-12);
                assert!(((n[0] * n[0] + n[1] * n[1] + n[2] * n[2]) - 1.0).abs() < 1e-12);
                for kind in [MapKind::Height, MapKind::Roughness, MapKind::Metalness, MapKind::Opacity] {
                    let v = m.scalar_at(kind, i, j);
                    assert!((0.0..=1.0).contains(&v));
                }
            }
        }
        assert!(MaterialMaps::from_stack(Grid::zeros(2, 2, 4)).is_err());
    }

    #[test]
    fn decoded_ranges_map_to_unit_interval() {
        let d = Grid::from_fn(1, 2, MAP_CHANNELS, |_, j, _| if j == 0 { -1.0 } else { 0.0 });
        let m = MaterialMaps::from_decoded(&d).unwrap();
        assert_eq!(m.basecolor_at(0, 0), [0.0; 3]);
        assert_eq!(m.basecolor_at(0, 1), [0.5; 3]);
        assert_eq!(m.normal_at(0, 1), [0.0, 0.0, 1.0]);
        assert_eq!(m.scalar_at(MapKind::Opacity, 0, 1), 0.5);
    }
}
