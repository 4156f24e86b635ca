//! Packed fixed-length bitstrings with a cached ones-count.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::RandomSource;

const WORD: usize = 64;

#[inline]
pub(crate) fn word_count(n: usize) -> usize {
    n.div_ceil(WORD)
}

/// Mask of the valid bits in the last word.
#[inline]
fn tail_mask(n: usize) -> u64 {
    match n % WORD {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

/// A search point in {0,1}^n.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Bitstring {
    words: Vec<u64>,
    n: usize,
    ones: usize,
}

impl Bitstring {
    pub fn zeros(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyBitstring);
        }
        Ok(Self {
            words: vec![0; word_count(n)],
            n,
            ones: 0,
        })
    }

    pub fn all_ones(n: usize) -> Result<Self> {
        let mut x = Self::zeros(n)?;
        x.words.iter_mut().for_each(|w| *w = u64::MAX);
        *x.words.last_mut().unwrap() &= tail_mask(n);
        x.ones = n;
        Ok(x)
    }

    /// Each bit independently 1 with probability 1/2.
    pub fn new_uniform(n: usize, rng: &mut RandomSource) -> Result<Self> {
        let mut x = Self::zeros(n)?;
        for w in x.words.iter_mut() {
            *w = rng.next_u64();
        }
        *x.words.last_mut().unwrap() &= tail_mask(n);
        x.recount();
        Ok(x)
    }

    /// A uniformly random string with exactly `zeros` zero-bits.
    pub fn with_zero_count(n: usize, zeros: usize, rng: &mut RandomSource) -> Result<Self> {
        if zeros > n {
            return Err(Error::InvalidParameter(format!(
                "zero count {zeros} exceeds length {n}"
            )));
        }
        let mut x = Self::all_ones(n)?;
        for pos in rand::seq::index::sample(rng, n, zeros) {
            x.flip(pos);
        }
        Ok(x)
    }

    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        let mut x = Self::zeros(bits.len())?;
        for (i, &b) in bits.iter().enumerate() {
            if b {
                x.flip(i);
            }
        }
        Ok(x)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    /// Always false; length zero is rejected at construction.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn ones(&self) -> usize {
        self.ones
    }

    #[inline]
    pub fn zeros_count(&self) -> usize {
        self.n - self.ones
    }

    #[inline]
    pub fn is_all_ones(&self) -> bool {
        self.ones == self.n
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.n);
        self.words[i / WORD] >> (i % WORD) & 1 == 1
    }

    /// Flips bit `i`, keeping the ones-count current.
    #[inline]
    pub fn flip(&mut self, i: usize) {
        debug_assert!(i < self.n);
        let w = &mut self.words[i / WORD];
        let m = 1u64 << (i % WORD);
        if *w & m == 0 {
            self.ones += 1;
        } else {
            self.ones -= 1;
        }
        *w ^= m;
    }

    pub fn set(&mut self, i: usize, value: bool) {
        if self.get(i) != value {
            self.flip(i);
        }
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Overwrites `self` with `other` without reallocating.
    #[inline]
    pub fn copy_from(&mut self, other: &Bitstring) {
        debug_assert_eq!(self.n, other.n);
        self.words.copy_from_slice(&other.words);
        self.ones = other.ones;
    }

    pub fn hamming(&self, other: &Bitstring) -> Result<usize> {
        check_lengths(self, other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum())
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.n).map(move |i| self.get(i))
    }

    pub(crate) fn words_mut(&mut self) -> &mut [u64] {
        &mut self.words
    }

    pub(crate) fn recount(&mut self) {
        self.ones = self.words.iter().map(|w| w.count_ones() as usize).sum();
    }

    pub(crate) fn mask_tail(&mut self) {
        let m = tail_mask(self.n);
        *self.words.last_mut().unwrap() &= m;
    }
}

pub(crate) fn check_lengths(a: &Bitstring, b: &Bitstring) -> Result<()> {
    if a.n != b.n {
        return Err(Error::LengthMismatch {
            left: a.n,
            right: b.n,
        });
    }
    Ok(())
}

impl fmt::Display for Bitstring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Bitstring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.n <= 128 {
            write!(f, "Bitstring({self})")
        } else {
            write!(f, "Bitstring(n={}, ones={})", self.n, self.ones)
        }
    }
}

/// Parses a string of `0`/`1` characters; character `i` is bit `i`.
impl FromStr for Bitstring {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|ch| match ch {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::InvalidParameter(format!(
                    "unexpected character {other:?} in bitstring"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_bits(&bits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_length_rejected() {
        let mut rng = RandomSource::from_seed(0);
        assert!(matches!(
            Bitstring::new_uniform(0, &mut rng),
            Err(Error::EmptyBitstring)
        ));
    }

    #[test]
    fn single_bit_is_fair() {
        let mut rng = RandomSource::from_seed(42);
        let draws = 100_000;
        let ones: usize = (0..draws)
            .map(|_| Bitstring::new_uniform(1, &mut rng).unwrap().ones())
            .sum();
        let frac = ones as f64 / draws as f64;
        assert!((frac - 0.5).abs() < 0.01, "fraction of ones {frac}");
    }

    #[test]
    fn ones_concentrate_at_n3000() {
        let mut rng = RandomSource::from_seed(5);
        let draws = 2000;
        let inside = (0..draws)
            .filter(|_| {
                let k = Bitstring::new_uniform(3000, &mut rng).unwrap().ones();
                (1350..=1650).contains(&k)
            })
            .count();
        assert!(inside as f64 >= 0.99 * draws as f64);
    }

    #[test]
    fn same_state_same_string() {
        let mut a = RandomSource::from_seed(9);
        let mut b = RandomSource::from_seed(9);
        assert_eq!(
            Bitstring::new_uniform(777, &mut a).unwrap(),
            Bitstring::new_uniform(777, &mut b).unwrap()
        );
    }

    #[test]
    fn flip_tracks_counts() {
        let mut x: Bitstring = "10110".parse().unwrap();
        assert_eq!(x.ones(), 3);
        x.flip(1);
        assert_eq!(x.ones(), 4);
        x.flip(0);
        assert_eq!(x.ones(), 3);
        assert_eq!(x.ones() + x.zeros_count(), x.len());
        assert_eq!(x.to_string(), "01110");
    }

    #[test]
    fn all_ones_respects_tail() {
        for n in [1, 63, 64, 65, 130] {
            let x = Bitstring::all_ones(n).unwrap();
            assert!(x.is_all_ones());
            assert_eq!(x.words().iter().map(|w| w.count_ones() as usize).sum::<usize>(), n);
        }
    }

    #[test]
    fn with_zero_count_is_exact() {
        let mut rng = RandomSource::from_seed(1);
        for zeros in [0, 1, 17, 300] {
            let x = Bitstring::with_zero_count(300, zeros, &mut rng).unwrap();
            assert_eq!(x.zeros_count(), zeros);
        }
        assert!(Bitstring::with_zero_count(10, 11, &mut rng).is_err());
    }
}
