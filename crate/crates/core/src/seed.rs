//! Seed derivation. Every randomized operation takes a `u64` seed and builds a
//! ChaCha8 stream from it, so results are pure functions of (input, seed).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; used to derive independent sub-seeds.
pub fn mix(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Named streams so that the same global seed never feeds two consumers.
pub mod stream {
    pub const SPLIT: u64 = 1;
    pub const HOLDOUT: u64 = 2;
    pub const RESAMPLE: u64 = 3;
    pub const INIT: u64 = 4;
    pub const TRAIN: u64 = 5;
    pub const SHUFFLE: u64 = 6;
    pub const DROPOUT: u64 = 7;
    pub const MLM: u64 = 8;
    pub const PERMUTATION: u64 = 9;
    pub const VALIDATION: u64 = 10;
}
