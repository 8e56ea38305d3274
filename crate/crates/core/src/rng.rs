//! Seeded random streams.
//!
//! Every stochastic component takes its own stream derived from the run seed
//! and a fixed tag, so adding draws in one place never shifts another.

use rand::SeedableRng;

pub type SimRng = rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer over `base` and `tag`.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(tag.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(base: u64, tag: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(base, tag))
}
