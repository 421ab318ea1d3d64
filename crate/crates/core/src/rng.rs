//! Seeded, platform-independent random streams.
//!
//! Every random draw in a run derives from a single 64-bit seed. The seed keys a
//! ChaCha8 generator; each consumer gets its own ChaCha stream id, packed as
//!
//! ```text
//!   bits 56..64  purpose tag
//!   bits 48..56  multiscale stage
//!   bits 32..48  sampling step
//!   bits  0..32  patch / item index
//! ```
//!
//! Streams never overlap, and a stream's output does not depend on how many
//! values other streams consumed, so patch order and parallelism cannot change
//! results.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::grid::{Grid, Shape};

/// What a random stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    /// Starting noise of a sampling run.
    InitialNoise = 1,
    /// Stochastic DDIM noise (`eta > 0`), one stream per step and patch.
    StepNoise = 2,
    /// Noise-rolling offsets, one stream per step.
    Roll = 3,
    /// Fresh noise injected when restarting a finer multiscale stage.
    Renoise = 4,
    /// Random inpainting masks.
    Mask = 5,
    /// Parameters of mock decoders and synthetic fixtures.
    Fixture = 6,
}

/// Addresses one stream under a run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamId {
    pub purpose: Purpose,
    pub stage: u8,
    pub step: u16,
    pub index: u32,
}

impl StreamId {
    pub fn new(purpose: Purpose) -> Self {
        Self {
            purpose,
            stage: 0,
            step: 0,
            index: 0,
        }
    }

    pub fn stage(mut self, stage: usize) -> Self {
        self.stage = stage as u8;
        self
    }

    pub fn step(mut self, step: usize) -> Self {
        self.step = step as u16;
        self
    }

    pub fn index(mut self, index: usize) -> Self {
        self.index = index as u32;
        self
    }

    pub fn packed(&self) -> u64 {
        ((self.purpose as u64) << 56)
            | ((self.stage as u64) << 48)
            | ((self.step as u64) << 32)
            | self.index as u64
    }
}

/// Factory for the independent random streams of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStreams {
    seed: u64,
}

impl SeedStreams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rng(&self, id: StreamId) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(id.packed());
        rng
    }
}

/// Fills a grid with standard normal draws in storage order.
pub fn normal_grid(shape: Shape, rng: &mut impl Rng) -> Grid {
    let data = (0..shape.len())
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    Grid::from_vec(shape.height, shape.width, shape.channels, data)
        .expect("shape length matches by construction")
}
