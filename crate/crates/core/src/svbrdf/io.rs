//! 16-bit PNG map stacks with a JSON manifest.

use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, Rgb};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, MAP_CHANNELS};
use crate::svbrdf::maps::{channel, MapKind, MaterialMaps};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

pub fn srgb_encode(linear: f64) -> f64 {
    let x = linear.clamp(0.0, 1.0);
    if x <= 0.003_130_8 {
        12.92 * x
    } else {
        1.055 * x.powf(1.0 / 2.4) - 0.055
    }
}

pub fn srgb_decode(encoded: f64) -> f64 {
    let x = encoded.clamp(0.0, 1.0);
    if x <= 0.040_45 {
        x / 12.92
    } else {
        ((x + 0.055) / 1.055).powf(2.4)
    }
}

fn to_u16(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

fn from_u16(v: u16) -> f64 {
    v as f64 / 65535.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    Srgb,
    Linear,
    /// Unit normal `n` stored as `(n + 1) / 2`.
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapEntry {
    pub kind: MapKind,
    pub file: String,
    pub encoding: Encoding,
    pub channels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub width: usize,
    pub height: usize,
    pub displacement_factor: f64,
    pub bit_depth: u32,
    pub maps: Vec<MapEntry>,
}

fn entry(kind: MapKind) -> MapEntry {
    let (encoding, channels) = match kind {
        MapKind::Basecolor => (Encoding::Srgb, 3),
        MapKind::Normal => (Encoding::Normal, 3),
        _ => (Encoding::Linear, 1),
    };
    MapEntry {
        kind,
        file: format!("{}.png", kind.name()),
        encoding,
        channels,
    }
}

/// Writes an RGB grid as a 16-bit PNG, optionally sRGB-encoding it.
pub fn write_rgb16(path: &Path, img: &Grid, srgb: bool) -> Result<()> {
    if img.channels() != 3 {
        return Err(Error::invalid(format!("RGB export needs 3 channels, got {}", img.channels())));
    }
    let encode = |v: f64| if srgb { srgb_encode(v) } else { v };
    let raw: Vec<u16> = img.data().iter().map(|&v| to_u16(encode(v))).collect();
    let buf = ImageBuffer::<Rgb<u16>, _>::from_raw(img.width() as u32, img.height() as u32, raw)
        .expect("buffer length matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn write_gray16(path: &Path, img: &Grid) -> Result<()> {
    if img.channels() != 1 {
        return Err(Error::invalid(format!("grey export needs 1 channel, got {}", img.channels())));
    }
    let raw: Vec<u16> = img.data().iter().map(|&v| to_u16(v)).collect();
    let buf = ImageBuffer::<Luma<u16>, _>::from_raw(img.width() as u32, img.height() as u32, raw)
        .expect("buffer length matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Reads a PNG as a linear grid in [0, 1] with the requested channel count.
pub fn read_png(path: &Path, channels: usize, srgb: bool) -> Result<Grid> {
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match channels {
        1 => img.into_luma16().into_raw().into_iter().map(from_u16).collect(),
        3 => img.into_rgb16().into_raw().into_iter().map(from_u16).collect(),
        n => return Err(Error::invalid(format!("unsupported channel count {n}"))),
    };
    let data = if srgb { data.into_iter().map(srgb_decode).collect() } else { data };
    Grid::from_vec(h, w, channels, data)
}

/// Writes every map and the manifest into `dir`, creating it if needed.
pub fn save_maps(dir: &Path, maps: &MaterialMaps, displacement_factor: f64) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        width: maps.width(),
        height: maps.height(),
        displacement_factor,
        bit_depth: 16,
        maps: MapKind::ALL.iter().map(|&k| entry(k)).collect(),
    };
    for e in &manifest.maps {
        let path = dir.join(&e.file);
        match e.encoding {
            Encoding::Srgb => write_rgb16(&path, &maps.map(e.kind), true)?,
            Encoding::Normal => write_rgb16(&path, &maps.normals().map(|v| (v + 1.0) / 2.0), false)?,
            Encoding::Linear => write_gray16(&path, &maps.map(e.kind))?,
        }
    }
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Reads a map stack written by [`save_maps`].
pub fn load_maps(dir: &Path) -> Result<(MaterialMaps, Manifest)> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
    if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(Error::invalid(format!(
            "unsupported manifest schema version {}",
            manifest.schema_version
        )));
    }
    let mut stack = Grid::zeros(manifest.height, manifest.width, MAP_CHANNELS);
    for e in &manifest.maps {
        let path: PathBuf = dir.join(&e.file);
        let img = read_png(&path, e.channels, e.encoding == Encoding::Srgb)?;
        if (img.height(), img.width()) != (manifest.height, manifest.width) {
            return Err(Error::invalid(format!("{} has the wrong resolution", e.file)));
        }
        let (start, count) = e.kind.channels();
        for i in 0..manifest.height {
            for j in 0..manifest.width {
                let src = img.pixel(i, j);
                let dst = &mut stack.pixel_mut(i, j)[start..start + count];
                if e.encoding == Encoding::Normal {
                    dst.copy_from_slice(&[src[0] * 2.0 - 1.0, src[1] * 2.0 - 1.0]);
                } else {
                    dst.copy_from_slice(&src[..count]);
                }
            }
        }
    }
    debug_assert_eq!(channel::OPACITY + 1, MAP_CHANNELS);
    Ok((MaterialMaps::from_stack(stack)?, manifest))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
