//! Seeded randomness.
//!
//! Every random draw in the crate comes from [`SeededRng`], a ChaCha8 stream
//! keyed by a 64-bit seed. Independent streams (per replicate, per control,
//! per Monte-Carlo path) get their own seed through [`derive_seed`], so a
//! result never depends on which thread ran which replicate.
//!
//! Gaussian variates are produced by inversion: a 53-bit uniform on the open
//! interval (0, 1) is pushed through the standard normal quantile function.
//! One uniform yields exactly one normal, which keeps the stream alignment
//! trivial to reason about.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `base` and a path of indices, e.g.
/// `derive_seed(seed, &[control, replicate])`.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix64(base), |acc, &p| mix64(acc ^ mix64(p)))
}

pub struct SeededRng {
    inner: ChaCha8Rng,
    normal: Normal,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { inner: ChaCha8Rng::seed_from_u64(seed), normal: Normal::standard() }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `lo..=hi`.
    pub fn uniform_int(&mut self, lo: usize, hi: usize) -> usize {
        debug_assert!(lo <= hi);
        let span = (hi - lo) as u64 + 1;
        // Lemire-style widening multiply; the bias is below 2^-40 for the
        // spans used here.
        lo + ((u128::from(self.next_u64()) * u128::from(span)) >> 64) as usize
    }

    pub fn standard_normal(&mut self) -> f64 {
        let u = self.uniform();
        self.normal.inverse_cdf(u)
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.standard_normal()
    }
}
