//! Standard bit mutation and bitwise uniform crossover.

use rand_distr::Binomial;

use crate::bitstring::{check_lengths, Bitstring};
use crate::error::{Error, Result};
use crate::rng::RandomSource;

/// Standard bit mutation with rate c/n, precomputed for one length.
///
/// The flip count is drawn from Binomial(n, c/n) and that many distinct
/// positions are chosen uniformly, which has the same law as n independent
/// coins but costs O(flips).
#[derive(Debug, Clone)]
pub struct Mutation {
    n: usize,
    c: f64,
    flips: Binomial,
}

impl Mutation {
    pub fn new(n: usize, c: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyBitstring);
        }
        if !(c >= 0.0 && c <= n as f64) {
            return Err(Error::MutationRate { c, n });
        }
        let flips = Binomial::new(n as u64, (c / n as f64).min(1.0))
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(Self { n, c, flips })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn rate(&self) -> f64 {
        self.c
    }

    /// Returns a mutated copy of `parent`.
    pub fn apply(&self, parent: &Bitstring, rng: &mut RandomSource) -> Result<Bitstring> {
        let mut child = parent.clone();
        self.apply_into(parent, &mut child, rng)?;
        Ok(child)
    }

    /// Writes a mutated copy of `parent` into `child`. Returns the flip count.
    pub fn apply_into(
        &self,
        parent: &Bitstring,
        child: &mut Bitstring,
        rng: &mut RandomSource,
    ) -> Result<usize> {
        if parent.len() != self.n {
            return Err(Error::LengthMismatch {
                left: parent.len(),
                right: self.n,
            });
        }
        check_lengths(parent, child)?;
        child.copy_from(parent);
        let k = rng.sample(&self.flips) as usize;
        flip_distinct(child, k, rng);
        Ok(k)
    }
}

/// Flips `k` distinct uniformly chosen positions.
fn flip_distinct(x: &mut Bitstring, k: usize, rng: &mut RandomSource) {
    const SMALL: usize = 16;
    let n = x.len();
    if k <= SMALL && k * 4 <= n {
        let mut chosen = [0usize; SMALL];
        let mut m = 0;
        while m < k {
            let p = rng.below(n);
            if !chosen[..m].contains(&p) {
                chosen[m] = p;
                m += 1;
                x.flip(p);
            }
        }
    } else {
        for p in rand::seq::index::sample(rng, n, k) {
            x.flip(p);
        }
    }
}

/// Convenience wrapper around [`Mutation`] for one-off use.
pub fn mutate(x: &Bitstring, c: f64, rng: &mut RandomSource) -> Result<Bitstring> {
    Mutation::new(x.len(), c)?.apply(x, rng)
}

/// Each output bit copied from `a` or `b` with probability 1/2.
pub fn uniform_crossover(a: &Bitstring, b: &Bitstring, rng: &mut RandomSource) -> Result<Bitstring> {
    let mut child = a.clone();
    crossover_into(a, b, &mut child, rng)?;
    Ok(child)
}

pub fn crossover_into(
    a: &Bitstring,
    b: &Bitstring,
    child: &mut Bitstring,
    rng: &mut RandomSource,
) -> Result<()> {
    check_lengths(a, b)?;
    check_lengths(a, child)?;
    for ((out, &wa), &wb) in child.words_mut().iter_mut().zip(a.words()).zip(b.words()) {
        let take_a = rng.next_u64();
        *out = (wa & take_a) | (wb & !take_a);
    }
    child.mask_tail();
    child.recount();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_bounds() {
        assert!(Mutation::new(10, -0.1).is_err());
        assert!(Mutation::new(10, 10.5).is_err());
        assert!(Mutation::new(10, f64::NAN).is_err());
        assert!(Mutation::new(10, 10.0).is_ok());
    }

    #[test]
    fn zero_rate_is_identity() {
        let mut rng = RandomSource::from_seed(2);
        let x = Bitstring::new_uniform(200, &mut rng).unwrap();
        for _ in 0..100 {
            assert_eq!(mutate(&x, 0.0, &mut rng).unwrap(), x);
        }
    }

    #[test]
    fn full_rate_flips_everything() {
        let mut rng = RandomSource::from_seed(2);
        let x = Bitstring::new_uniform(130, &mut rng).unwrap();
        let y = mutate(&x, 130.0, &mut rng).unwrap();
        assert_eq!(x.hamming(&y).unwrap(), 130);
        assert_eq!(y.ones(), x.zeros_count());
    }

    #[test]
    fn mean_flip_distance() {
        let mut rng = RandomSource::from_seed(77);
        let op = Mutation::new(100, 1.5).unwrap();
        let x = Bitstring::new_uniform(100, &mut rng).unwrap();
        let trials = 100_000;
        let total: usize = (0..trials)
            .map(|_| op.apply(&x, &mut rng).unwrap().hamming(&x).unwrap())
            .sum();
        let mean = total as f64 / trials as f64;
        assert!((mean - 1.5).abs() < 0.05, "mean distance {mean}");
    }

    #[test]
    fn parent_untouched() {
        let mut rng = RandomSource::from_seed(4);
        let x = Bitstring::new_uniform(64, &mut rng).unwrap();
        let snapshot = x.clone();
        let _ = mutate(&x, 10.0, &mut rng).unwrap();
        assert_eq!(x, snapshot);
    }

    #[test]
    fn crossover_of_identical_parents() {
        let mut rng = RandomSource::from_seed(8);
        let a = Bitstring::new_uniform(300, &mut rng).unwrap();
        assert_eq!(uniform_crossover(&a, &a, &mut rng).unwrap(), a);
    }

    #[test]
    fn crossover_mean_between_complements() {
        let mut rng = RandomSource::from_seed(10);
        let a = Bitstring::zeros(100).unwrap();
        let b = Bitstring::all_ones(100).unwrap();
        let trials = 100_000;
        let total: usize = (0..trials)
            .map(|_| uniform_crossover(&a, &b, &mut rng).unwrap().ones())
            .sum();
        let mean = total as f64 / trials as f64;
        assert!((mean - 50.0).abs() < 0.5, "mean ones {mean}");
    }

    #[test]
    fn crossover_length_mismatch() {
        let mut rng = RandomSource::from_seed(0);
        let a = Bitstring::zeros(5).unwrap();
        let b = Bitstring::zeros(6).unwrap();
        assert!(matches!(
            uniform_crossover(&a, &b, &mut rng),
            Err(Error::LengthMismatch { .. })
        ));
    }
}
