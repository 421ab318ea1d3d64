//! Tileable high-resolution latent diffusion sampling for material maps.
//!
//! The crate covers the sampling side (schedules, DDIM, noise rolling,
//! coarse-to-fine stages, patched decoding, inpainting conditions) and the
//! material side (map layout, GGX rendering, displacement fitting, metrics).
//! Analytic denoisers in [`oracles`] stand in for a trained network.

pub mod decode;
pub mod error;
pub mod grid;
pub mod inpaint;
pub mod multiscale;
pub mod oracles;
pub mod rng;
pub mod sampler;
pub mod svbrdf;
pub mod tiling;

pub use error::{Error, Result};
pub use grid::{Grid, LatentGrid, Shape, LATENT_CHANNELS, LATENT_SCALE, MAP_CHANNELS};
pub use sampler::{ddim_sample, ddim_step, make_linear_schedule, Denoiser, NoiseSchedule, Placement, SamplerConfig};
pub use tiling::{rolled_patched_sample, TilingConfig};
