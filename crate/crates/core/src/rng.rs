//! Seed derivation and portable random streams.
//!
//! Every random draw in the crate goes through a ChaCha8 generator seeded
//! from a 64-bit value. Sub-streams are derived by hashing a string label
//! into the parent seed, so draw order never depends on evaluation order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over a byte slice. Stable across platforms and releases.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Derive an independent sub-seed from a parent seed and a stream label.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in seed.to_le_bytes().iter() {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    for &b in label.as_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// ChaCha8 stream for a (seed, label) pair.
pub fn stream(seed: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, label))
}

/// One zero-mean gaussian draw with the given standard deviation.
///
/// `std_dev == 0` short-circuits to `0.0` so callers can disable noise
/// without special-casing.
pub fn gaussian(rng: &mut ChaCha8Rng, std_dev: f64) -> f64 {
    if std_dev == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, std_dev)
        .expect("finite non-negative std dev")
        .sample(rng)
}
