//! Seed derivation.
//!
//! Every random draw in the crate flows from a single 64-bit seed. A stream is
//! addressed by `(seed, module, index)`: the seed and module id are mixed into a
//! ChaCha8 key, and the index selects the ChaCha stream. Draws within a stream
//! are consumed in order, so any sub-draw (one OSNAP column, one SRHT block, one
//! row's Bernoulli coins) can be regenerated in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Module ids for stream derivation. Values are part of the reproducibility
/// contract; do not renumber.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Module {
    Osnap = 1,
    Srht = 2,
    UniformSample = 3,
    PowerIteration = 4,
    LevStage1 = 5,
    LevStage2 = 6,
    LevRow = 7,
    RankSketch = 8,
    BasisGrow = 9,
    Bench = 10,
    Pipeline = 11,
    Amm = 12,
    Regression = 13,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives a child seed, used when one component hands a fresh seed to another.
pub fn derive_seed(seed: u64, module: Module, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(module as u64)) ^ index)
}

/// Independent stream for `(seed, module, index)`.
pub fn stream(seed: u64, module: Module, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = seed ^ splitmix64(module as u64).rotate_left(17);
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

pub fn gaussian<R: rand::Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn gaussian_vec<R: rand::Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| gaussian(rng)).collect()
}
