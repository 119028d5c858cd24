//! Deterministic RNG derivation for disorder sampling.
//!
//! Every disordered sample owns a ChaCha8 stream seeded from
//! `base_seed ^ splitmix64(index)`, so results never depend on the order in
//! which workers pick up samples.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for sample `index` of an ensemble rooted at `base_seed`.
pub fn derive_seed(base_seed: u64, index: u64) -> u64 {
    base_seed ^ splitmix64(index)
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
