//! Seed-addressed random streams.
//!
//! Every trajectory draws from its own ChaCha8 stream: the 256-bit key is
//! expanded from the run's base seed and the stream (nonce) is the trajectory
//! index. Streams for different indices share no state, so an ensemble gives
//! the same numbers whatever order or thread its trajectories run on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Identifier written into output headers next to the base seed.
pub const GAUSSIAN_STREAM_ALGORITHM: &str =
    "chacha8(key=splitmix64(base_seed),stream=trajectory_index)+ziggurat_normal";

/// Identifier of the Bernoulli outcome stream used by the discrete ancilla model.
pub const OUTCOME_STREAM_ALGORITHM: &str =
    "chacha8(key=splitmix64(base_seed^outcome_domain),stream=trajectory_index)+uniform53";

const OUTCOME_DOMAIN: u64 = 0x6f75_7463_6f6d_6573; // "outcomes"

pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic sub-seed, e.g. one per phase-diagram cell.
pub fn derive_seed(base_seed: u64, offset: u64) -> u64 {
    let mut s = base_seed ^ offset.wrapping_mul(0xd1b5_4a32_d192_ed03);
    splitmix64(&mut s)
}

fn keyed_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Gaussian Wiener increments for one trajectory.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    base_seed: u64,
    trajectory_index: u64,
    drawn: u64,
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(base_seed: u64, trajectory_index: u64) -> Self {
        Self {
            base_seed,
            trajectory_index,
            drawn: 0,
            rng: keyed_rng(base_seed, trajectory_index),
        }
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    pub fn trajectory_index(&self) -> u64 {
        self.trajectory_index
    }

    /// Number of increments consumed so far.
    pub fn drawn(&self) -> u64 {
        self.drawn
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.drawn += 1;
        self.rng.sample(StandardNormal)
    }

    /// Increment dξ with mean 0 and variance `dt`.
    pub fn increment(&mut self, dt: f64) -> f64 {
        dt.sqrt() * self.standard_normal()
    }
}

/// Uniform draws for the ancilla outcomes; keyed apart from [`NoiseStream`].
#[derive(Debug, Clone)]
pub struct OutcomeStream {
    rng: ChaCha8Rng,
}

impl OutcomeStream {
    pub fn new(base_seed: u64, trajectory_index: u64) -> Self {
        Self {
            rng: keyed_rng(base_seed ^ OUTCOME_DOMAIN, trajectory_index),
        }
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}
