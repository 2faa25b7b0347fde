//! Per-sample seed derivation.
//!
//! A sample seed is `splitmix64(global + (index + 1) * GOLDEN_GAMMA)`. The
//! finalizer is a bijection on `u64` and the odd multiplier makes the inner
//! sum injective in `index`, so distinct indices under one global seed never
//! collide. Sub-streams reuse the same construction with the sample seed as
//! the new global seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// The splitmix64 output finalizer (Steele, Lea, Flood 2014).
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn mix(global_seed: u64, index: u64) -> u64 {
    splitmix64(global_seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub global_seed: u64,
    pub sample_index: u64,
}

impl SeedSpec {
    pub fn new(global_seed: u64, sample_index: u64) -> Self {
        Self {
            global_seed,
            sample_index,
        }
    }

    pub fn sample_seed(&self) -> u64 {
        mix(self.global_seed, self.sample_index)
    }

    /// Independent seed for a named sub-stream of this sample.
    pub fn child(&self, stream: u64) -> SeedSpec {
        SeedSpec::new(self.sample_seed(), stream)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.sample_seed())
    }
}
