//! Seed derivation.
//!
//! Every component seed is `derive(master, &[stream, a, b, ...])`: the
//! master seed is folded with each counter in turn through SplitMix64, so
//! distinct (stream, counters) tuples get independent, reproducible seeds.

/// Stream tags. Appending new tags never changes existing seeds.
pub mod stream {
    pub const DATA: u64 = 1;
    pub const FOLDS: u64 = 2;
    pub const MODEL_INIT: u64 = 3;
    pub const TRAIN: u64 = 4;
    pub const DROPOUT_FR: u64 = 5;
    pub const SHUFFLE: u64 = 6;
    pub const RANDOM: u64 = 7;
    pub const DEEP_FS: u64 = 8;
    pub const RETRAIN: u64 = 9;
    pub const NOISE: u64 = 10;
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(master: u64, counters: &[u64]) -> u64 {
    counters
        .iter()
        .fold(splitmix64(master), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}
