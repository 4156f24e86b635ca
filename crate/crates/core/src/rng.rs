//! Seeded random source shared by every stochastic component.
//!
//! Streams are derived from a master seed and a tuple of integer labels
//! (cell id, run index, sample index, ...) by a SplitMix64-style mix, so any
//! run can be replayed in isolation and parallel schedules never change the
//! draws a run sees.

use rand::{Rng, RngCore, SeedableRng};
use rand_distr::{Binomial, Distribution};
use rand_xoshiro::Xoshiro256PlusPlus;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a sequence of labels.
///
/// Distinct label sequences give statistically independent seeds; the result
/// depends only on its arguments.
pub fn derive_seed(parent: u64, labels: &[u64]) -> u64 {
    let mut h = mix64(parent ^ GOLDEN);
    for (i, &label) in labels.iter().enumerate() {
        h = mix64(h ^ mix64(label.wrapping_add((i as u64 + 1).wrapping_mul(GOLDEN))));
    }
    h
}

/// Deterministic random source. Single owner; never shared between threads.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    inner: Xoshiro256PlusPlus,
}

impl RandomSource {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            seed,
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    /// Independent stream for the given labels under this source's seed.
    pub fn derive(&self, labels: &[u64]) -> Self {
        Self::from_seed(derive_seed(self.seed, labels))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn bit(&mut self) -> bool {
        self.inner.next_u64() >> 63 == 1
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `0..bound`. `bound` must be positive.
    #[inline]
    pub fn below(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        self.inner.random_range(0..bound)
    }

    /// Uniform real in the open interval (0, 1).
    #[inline]
    pub fn unit_open(&mut self) -> f64 {
        loop {
            // 53 random mantissa bits, offset by half an ulp to exclude 0
            let u = ((self.inner.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
            if u > 0.0 && u < 1.0 {
                return u;
            }
        }
    }

    /// Uniform real in [0, 1).
    #[inline]
    pub fn unit(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    /// Binomial(n, p) sample. `p` is clamped to [0, 1].
    pub fn binomial(&mut self, n: u64, p: f64) -> u64 {
        let p = p.clamp(0.0, 1.0);
        Binomial::new(n, p)
            .expect("clamped probability is valid")
            .sample(&mut self.inner)
    }

    /// Sample from any `rand_distr` distribution with this source.
    pub fn sample<T, D: Distribution<T>>(&mut self, dist: &D) -> T {
        dist.sample(&mut self.inner)
    }
}

impl RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
