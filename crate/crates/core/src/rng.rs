//! Counter-based deterministic randomness.
//!
//! Batch indices are produced by hashing `(seed, iteration, slot)` instead of
//! advancing shared generator state, so independent runs and parallel
//! replicas reproduce bit-identically regardless of scheduling. Gaussian
//! draws used during problem construction come from a ChaCha stream keyed by
//! the same 64-bit seeds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// SplitMix64 finalizer; full-avalanche mix of a 64-bit word.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stateless hash of a (seed, iteration, slot) triple.
///
/// The two odd multipliers keep distinct (iteration, slot) pairs on distinct
/// inputs for any realistic iteration count and batch size.
#[inline]
pub fn counter_hash(seed: u64, iteration: u64, slot: u64) -> u64 {
    mix64(
        seed.wrapping_add(iteration.wrapping_mul(0x9E37_79B9_7F4A_7C15))
            .wrapping_add(slot.wrapping_mul(0xD1B5_4A32_D192_ED03)),
    )
}

/// Uniform sample index in `0..n` for one batch slot.
///
/// Uses the multiply-shift reduction; the bias is O(n / 2^64), far below
/// every tolerance used in this crate.
#[inline]
pub fn sample_index(seed: u64, iteration: u64, slot: u64, n: usize) -> usize {
    debug_assert!(n > 0);
    let h = counter_hash(seed, iteration, slot) as u128;
    ((h * n as u128) >> 64) as usize
}

/// Derived sub-seed for an independent stream (trial, sweep cell, ...).
#[inline]
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    counter_hash(seed, stream, 0x5EED)
}

/// Seeded standard-normal vector for minimizers and initial errors.
pub fn normal_vector(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Seeded uniform draw in `[lo, hi)`.
pub fn uniform_in(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    use rand::Rng;
    rng.gen_range(lo..hi)
}

/// Fresh ChaCha stream for construction-time randomness.
pub fn chacha(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
