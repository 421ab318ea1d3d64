//! Cook-Torrance shading with a GGX lobe and a metalness workflow.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::svbrdf::maps::{MapKind, MaterialMaps};
use crate::svbrdf::normals::height_gradients;

pub type Vec3 = [f64; 3];

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn normalize(v: Vec3) -> Vec3 {
    let n = dot(v, v).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Smallest GGX alpha used, to keep the lobe finite for roughness 0.
pub const MIN_ALPHA: f64 = 1e-3;

pub const DIELECTRIC_F0: f64 = 0.04;

pub fn ggx_alpha(roughness: f64) -> f64 {
    (roughness * roughness).max(MIN_ALPHA)
}

/// GGX normal distribution at `cos_h = n.h`.
pub fn ggx_d(cos_h: f64, alpha: f64) -> f64 {
    if cos_h <= 0.0 {
        return 0.0;
    }
    let a2 = alpha * alpha;
    let d = cos_h * cos_h * (a2 - 1.0) + 1.0;
    a2 / (PI * d * d)
}

fn smith_lambda(cos: f64, alpha: f64) -> f64 {
    let c2 = cos * cos;
    let tan2 = (1.0 - c2).max(0.0) / c2;
    ((1.0 + alpha * alpha * tan2).sqrt() - 1.0) / 2.0
}

/// Height-correlated Smith masking-shadowing.
pub fn smith_g2(cos_l: f64, cos_v: f64, alpha: f64) -> f64 {
    1.0 / (1.0 + smith_lambda(cos_l, alpha) + smith_lambda(cos_v, alpha))
}

pub fn schlick(f0: f64, cos: f64) -> f64 {
    f0 + (1.0 - f0) * (1.0 - cos.clamp(0.0, 1.0)).powi(5)
}

/// Surface parameters at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Surface {
    pub basecolor: Vec3,
    pub roughness: f64,
    pub metalness: f64,
}

/// BRDF value without the cosine factor. Zero unless both directions are
/// above the surface.
///
/// The diffuse lobe is weighted by the light transmitted through the
/// interface on the way in and out, so diffuse plus single-scatter
/// specular never reflects more than it receives.
pub fn brdf_value(s: &Surface, n: Vec3, l: Vec3, v: Vec3) -> Vec3 {
    let (nl, nv) = (dot(n, l), dot(n, v));
    if nl <= 0.0 || nv <= 0.0 {
        return [0.0; 3];
    }
    let h = normalize([l[0] + v[0], l[1] + v[1], l[2] + v[2]]);
    let (nh, vh) = (dot(n, h), dot(v, h));
    let alpha = ggx_alpha(s.roughness);
    let d = ggx_d(nh, alpha);
    let g = smith_g2(nl, nv, alpha);
    let mut out = [0.0; 3];
    for c in 0..3 {
        let f0 = DIELECTRIC_F0 + (s.basecolor[c] - DIELECTRIC_F0) * s.metalness;
        let spec = d * g * schlick(f0, vh) / (4.0 * nl * nv);
        let diffuse =
            (1.0 - s.metalness) * s.basecolor[c] / PI * (1.0 - schlick(f0, nl)) * (1.0 - schlick(f0, nv));
        out[c] = diffuse + spec;
    }
    out
}

/// Reflected radiance per unit irradiance: BRDF times `n.l`.
pub fn brdf_eval(s: &Surface, n: Vec3, l: Vec3, v: Vec3) -> Vec3 {
    let nl = dot(n, l).max(0.0);
    let f = brdf_value(s, n, l, v);
    [f[0] * nl, f[1] * nl, f[2] * nl]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Light {
    /// Distant light; `direction` points from the surface toward the light.
    Directional { direction: Vec3, intensity: Vec3 },
    /// Position in tile units (the tile spans [0, 1] in x), inverse-square falloff.
    Point { position: Vec3, intensity: Vec3 },
}

impl Light {
    pub fn directional(direction: Vec3, intensity: Vec3) -> Result<Self> {
        let len = dot(direction, direction).sqrt();
        if !(len > 0.0 && len.is_finite()) {
            return Err(Error::invalid("light direction must be a non-zero vector"));
        }
        Ok(Light::Directional {
            direction: normalize(direction),
            intensity,
        })
    }

    pub fn point(position: Vec3, intensity: Vec3) -> Self {
        Light::Point { position, intensity }
    }

    /// Unit direction toward the light and incident irradiance scale at `p`.
    pub fn incidence(&self, p: Vec3) -> (Vec3, Vec3) {
        match *self {
            Light::Directional { direction, intensity } => (normalize(direction), intensity),
            Light::Point { position, intensity } => {
                let d = [position[0] - p[0], position[1] - p[1], position[2] - p[2]];
                let r2 = dot(d, d);
                (normalize(d), intensity.map(|i| i / r2))
            }
        }
    }
}

pub const DEFAULT_VIEW: Vec3 = [0.0, 0.0, 1.0];

/// Blends a stored normal with height slopes by adding tangent-space slopes.
pub fn combine_normals(stored: Vec3, slope: [f64; 2]) -> Vec3 {
    let z = stored[2];
    normalize([stored[0] + z * slope[0], stored[1] + z * slope[1], z])
}

/// Shades every pixel under one light with an orthographic viewer.
///
/// Normals are the stored map combined with height slopes scaled by
/// `displacement`; opacity multiplies the result.
pub fn render(maps: &MaterialMaps, light: &Light, view: Vec3, displacement: f64) -> Result<Grid> {
    if !(displacement >= 0.0 && displacement.is_finite()) {
        return Err(Error::invalid(format!("displacement factor must be non-negative, got {displacement}")));
    }
    let view = normalize(view);
    let (h, w) = (maps.height(), maps.width());
    let slopes = height_gradients(&maps.map(MapKind::Height), displacement);
    let mut out = Grid::zeros(h, w, 3);
    for i in 0..h {
        for j in 0..w {
            let g = slopes.pixel(i, j);
            let n = combine_normals(maps.normal_at(i, j), [-g[0], -g[1]]);
            let surface = Surface {
                basecolor: maps.basecolor_at(i, j),
                roughness: maps.scalar_at(MapKind::Roughness, i, j),
                metalness: maps.scalar_at(MapKind::Metalness, i, j),
            };
            let p = [(j as f64 + 0.5) / w as f64, (i as f64 + 0.5) / h as f64, 0.0];
            let (l, e) = light.incidence(p);
            let f = brdf_eval(&surface, n, l, view);
            let opacity = maps.scalar_at(MapKind::Opacity, i, j);
            for (c, o) in out.pixel_mut(i, j).iter_mut().enumerate() {
                *o = f[c] * e[c] * opacity;
            }
        }
    }
    Ok(out)
}

pub const CLAY_BASECOLOR: f64 = 0.5;
pub const CLAY_ROUGHNESS: f64 = 0.6;

/// Neutral grey render driven only by the height map.
pub fn clay_render(height: &Grid, displacement: f64, light: &Light) -> Result<Grid> {
    if height.channels() != 1 {
        return Err(Error::invalid("clay render needs a single-channel height map"));
    }
    let mut maps = MaterialMaps::uniform(
        height.height(),
        height.width(),
        [CLAY_BASECOLOR; 3],
        CLAY_ROUGHNESS,
        0.0,
    )?;
    maps.set_map(MapKind::Height, height)?;
    render(&maps, light, DEFAULT_VIEW, displacement)
}
