//! Deterministic random source shared by every simulation.
//!
//! The generator is SplitMix64: a 64-bit counter stepped by the odd constant
//! `0x9E3779B97F4A7C15` and passed through the finalizer
//!
//! ```text
//! z = state += 0x9E3779B97F4A7C15
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! return z ^ (z >> 31)
//! ```
//!
//! with wrapping arithmetic. Uniform reals are `(next_u64 >> 11) * 2^-53`,
//! which lies in `[0, 1)`. A run with replication index `i` is seeded with
//! `base_seed + i` (wrapping), so streams split without shared state.
//!
//! Every simulated round consumes draws in a fixed order:
//!
//! 1. one uniform for the market atom (always);
//! 2. one uniform for the policy mixture, only when the bidder consults a
//!    stochastic policy (budget guard passed and the algorithm is `fkors` or
//!    `static_opt`), regardless of how many components the mixture has;
//! 3. one uniform for the conversion coin, only on a win. The win converts
//!    iff `u < c`.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

/// Seeded SplitMix64 stream with the uniform conversion pinned down.
#[derive(Clone, Debug)]
pub struct SimRng {
    inner: SplitMix64,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: SplitMix64::seed_from_u64(seed),
        }
    }

    /// Stream for replication `index` of a base seed.
    pub fn for_replication(base_seed: u64, index: u64) -> Self {
        Self::new(base_seed.wrapping_add(index))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
