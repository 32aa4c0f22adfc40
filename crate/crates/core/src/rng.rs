//! Seeded random streams.
//!
//! Every sampler draws from a [`Stream`], which wraps xoshiro256++ seeded via
//! SplitMix64 (the `seed_from_u64` expansion of `rand_xoshiro`). The derived
//! draws are defined on top of the raw `u64` output so that another
//! implementation can replay a stream exactly:
//!
//! * `below(n)`: Lemire's multiply-shift with rejection. Let `x` be the next
//!   `u64` and `p = x * n` as a 128-bit product; if `low64(p) < n`, compute
//!   `t = (2^64 - n) mod n` and redraw while `low64(p) < t`. Result `high64(p)`.
//! * `unit()`: `(x >> 11) * 2^-53`, a double in `[0, 1)`.
//! * `gaussian()`: Box–Muller cosine branch from two `unit()` draws `a, b`:
//!   `sqrt(-2 ln(1 - a)) * cos(2 pi b)`. The sine branch is discarded.
//!
//! Independent streams derived from one master seed use
//! [`derive_seed`]`(master, index) = mix(master ^ mix(index + GOLDEN))`, where
//! `mix` is the SplitMix64 finalizer and `GOLDEN = 0x9E3779B97F4A7C15`.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Stream indices derived from a run's master seed.
pub mod streams {
    pub const INIT: u64 = 0;
    pub const TRAIN: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const SYNTHETIC: u64 = 3;
    pub const SIMULATE: u64 = 4;
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix(master ^ mix(index.wrapping_add(GOLDEN)))
}

#[derive(Clone, Debug)]
pub struct Stream {
    inner: Xoshiro256PlusPlus,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    pub fn derived(master: u64, index: u64) -> Self {
        Stream::new(derive_seed(master, index))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `0..n`. `n` must be nonzero.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        let n = n as u64;
        let mut product = (self.next_u64() as u128) * (n as u128);
        if (product as u64) < n {
            let threshold = n.wrapping_neg() % n;
            while (product as u64) < threshold {
                product = (self.next_u64() as u128) * (n as u128);
            }
        }
        (product >> 64) as usize
    }

    #[inline]
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn gaussian(&mut self) -> f64 {
        let a = self.unit();
        let b = self.unit();
        (-2.0 * (1.0 - a).ln()).sqrt() * (2.0 * std::f64::consts::PI * b).cos()
    }
}
