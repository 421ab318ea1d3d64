//! Material maps, shading, height/normal tools and image metrics.

pub mod brdf;
pub mod io;
pub mod maps;
pub mod metrics;
pub mod normals;

pub use brdf::{brdf_eval, brdf_value, clay_render, render, Light, Surface, Vec3, DEFAULT_VIEW};
pub use io::{load_maps, save_maps, Manifest};
pub use maps::{MapKind, MaterialMaps};
pub use metrics::{normal_cosine_error, rmse, ssim};
pub use normals::{fit_displacement_factor, height_to_normal, DisplacementFit, DEFAULT_MAX_DISPLACEMENT};
