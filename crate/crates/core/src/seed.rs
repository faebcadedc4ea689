//! Seed derivation for independent, order-free random streams.
//!
//! Every stochastic loop in the crate draws from a ChaCha stream keyed by
//! `(master_seed, path...)`, so results never depend on which thread ran
//! which index.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream tags keep unrelated consumers of the same master seed apart.
pub mod tag {
    pub const CYCLE: u64 = 0x01;
    pub const SWITCH: u64 = 0x02;
    pub const FIT: u64 = 0x03;
    pub const INIT: u64 = 0x10;
    pub const SHUFFLE: u64 = 0x11;
    pub const TRAIN_SAMPLE: u64 = 0x12;
    pub const EVAL_SAMPLE: u64 = 0x13;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &p| {
        splitmix64(acc ^ splitmix64(p))
    })
}

pub fn stream(master: u64, path: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive(master, path))
}
