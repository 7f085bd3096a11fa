//! Deterministic seed derivation.
//!
//! A run carries one 64-bit seed. Each network fit gets its own seed
//! `derive(run, n, m)`, built by folding the indices through the SplitMix64
//! finalizer, so results do not depend on the order fits are executed in.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the fit at time level `n`, belief node `m`.
pub fn derive(run_seed: u64, n: usize, m: usize) -> u64 {
    let a = splitmix64(run_seed ^ 0x6E5F_6C65_7665_6C00);
    let b = splitmix64(a ^ n as u64);
    splitmix64(b ^ (m as u64).rotate_left(32))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
