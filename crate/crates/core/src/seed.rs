//! Seed derivation. Every random draw in the pipeline comes from a
//! [`ChaCha8Rng`] whose seed is derived from the global seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Pipeline stage indices used for seed splitting.
pub mod stage {
    pub const SYNTH: u64 = 0;
    pub const INGEST: u64 = 1;
    pub const CLUSTER: u64 = 2;
    pub const SPARSIFY: u64 = 3;
    pub const METRICS: u64 = 4;
    pub const ROIS: u64 = 5;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `(seed, stage) -> stage seed`: two rounds of splitmix64, the second keyed
/// by the stage index.
pub fn derive(seed: u64, stage: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ stage.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
