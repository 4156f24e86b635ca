//! Dynamic objectives: Dynamic BinVal, dynamic linear functions, and static
//! OneMax, together with the per-generation comparator and worst-member
//! selection.
//!
//! DynBV values `sum 2^i x_{pi(i)}` are never formed numerically. Two strings
//! compare by the bit they hold at the highest-priority position where they
//! differ, which is order-isomorphic to the binary value and exact for any n.
//! When the objective is redrawn every generation only the ranking of the
//! positions where the candidates disagree matters, so that ranking is drawn
//! lazily, one decisive position at a time.

use std::cmp::Ordering;
use std::fmt;

use rand_distr::Pareto;

use crate::bitstring::{check_lengths, word_count, Bitstring};
use crate::error::{invalid, Error, Result};
use crate::rng::RandomSource;

/// Distribution of the weights of a dynamic linear function.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightDistribution {
    /// Pareto with scale 1 and the given shape, sampled as `U^(-1/shape)`.
    Pareto { shape: f64 },
    /// The same positive weight vector every round.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvironmentKind {
    DynBinVal,
    DynamicLinear(WeightDistribution),
    OneMax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentSpec {
    pub kind: EnvironmentKind,
    /// A fresh round is drawn every `change_period` generations.
    pub change_period: u64,
}

impl Default for EnvironmentSpec {
    fn default() -> Self {
        Self::dyn_binval()
    }
}

impl EnvironmentSpec {
    pub fn dyn_binval() -> Self {
        Self {
            kind: EnvironmentKind::DynBinVal,
            change_period: 1,
        }
    }

    pub fn onemax() -> Self {
        Self {
            kind: EnvironmentKind::OneMax,
            change_period: 1,
        }
    }

    pub fn pareto(shape: f64) -> Result<Self> {
        let spec = Self {
            kind: EnvironmentKind::DynamicLinear(WeightDistribution::Pareto { shape }),
            change_period: 1,
        };
        spec.validate(None)?;
        Ok(spec)
    }

    pub fn with_change_period(mut self, s: u64) -> Result<Self> {
        self.change_period = s;
        self.validate(None)?;
        Ok(self)
    }

    /// Checks the spec, and the weight vector length when `n` is known.
    pub fn validate(&self, n: Option<usize>) -> Result<()> {
        if self.change_period == 0 {
            return Err(invalid("change period must be at least 1"));
        }
        if let EnvironmentKind::DynamicLinear(dist) = &self.kind {
            match dist {
                WeightDistribution::Pareto { shape } => {
                    if !(*shape > 0.0 && shape.is_finite()) {
                        return Err(invalid(format!("Pareto shape must be positive, got {shape}")));
                    }
                }
                WeightDistribution::Fixed(w) => {
                    if w.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                        return Err(invalid("fixed weights must be positive and finite"));
                    }
                    if let Some(n) = n {
                        if w.len() != n {
                            return Err(Error::LengthMismatch {
                                left: w.len(),
                                right: n,
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// True when every generation sees a fresh uniform permutation, which is
    /// the case the lazy selector covers.
    pub fn is_lazy_dynbv(&self) -> bool {
        self.kind == EnvironmentKind::DynBinVal && self.change_period == 1
    }
}

impl fmt::Display for EnvironmentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            EnvironmentKind::DynBinVal => f.write_str("DynBV")?,
            EnvironmentKind::OneMax => f.write_str("OneMax")?,
            EnvironmentKind::DynamicLinear(WeightDistribution::Pareto { shape }) => {
                write!(f, "DynLin-Pareto({shape})")?
            }
            EnvironmentKind::DynamicLinear(WeightDistribution::Fixed(_)) => {
                f.write_str("Linear-Fixed")?
            }
        }
        if self.change_period != 1 {
            write!(f, "/s={}", self.change_period)?;
        }
        Ok(())
    }
}

/// One generation's objective instance.
#[derive(Debug, Clone, PartialEq)]
pub enum Round {
    /// `priority[i]` is the rank of position `i`; ranks are a permutation of
    /// `1..=n` and the highest rank is the most significant bit.
    Priorities(Vec<u32>),
    Weights(Vec<f64>),
    OneMax,
}

impl Round {
    pub fn len(&self) -> Option<usize> {
        match self {
            Round::Priorities(p) => Some(p.len()),
            Round::Weights(w) => Some(w.len()),
            Round::OneMax => None,
        }
    }

    fn check(&self, x: &Bitstring) -> Result<()> {
        match self.len() {
            Some(n) if n != x.len() => Err(Error::LengthMismatch {
                left: x.len(),
                right: n,
            }),
            _ => Ok(()),
        }
    }
}

/// Draws a fresh round for strings of length `n`.
pub fn sample_round(spec: &EnvironmentSpec, n: usize, rng: &mut RandomSource) -> Result<Round> {
    spec.validate(Some(n))?;
    if n == 0 {
        return Err(Error::EmptyBitstring);
    }
    Ok(match &spec.kind {
        EnvironmentKind::DynBinVal => {
            let mut ranks: Vec<u32> = (1..=n as u32).collect();
            rand::seq::SliceRandom::shuffle(ranks.as_mut_slice(), rng);
            Round::Priorities(ranks)
        }
        EnvironmentKind::DynamicLinear(WeightDistribution::Pareto { shape }) => {
            let dist = Pareto::new(1.0, *shape).map_err(|e| invalid(e.to_string()))?;
            Round::Weights((0..n).map(|_| rng.sample(&dist)).collect())
        }
        EnvironmentKind::DynamicLinear(WeightDistribution::Fixed(w)) => Round::Weights(w.clone()),
        EnvironmentKind::OneMax => Round::OneMax,
    })
}

/// Compensated (Neumaier) sum.
pub(crate) fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Visits the set bits of a word slice in increasing position order.
fn for_each_set_bit(words: &[u64], mut visit: impl FnMut(usize)) {
    for (wi, &w) in words.iter().enumerate() {
        let mut w = w;
        while w != 0 {
            let b = w.trailing_zeros() as usize;
            visit(wi * 64 + b);
            w &= w - 1;
        }
    }
}

/// Orders `a` against `b` under `round` (Greater means `a` is fitter).
pub fn compare(round: &Round, a: &Bitstring, b: &Bitstring) -> Result<Ordering> {
    check_lengths(a, b)?;
    round.check(a)?;
    let diff: Vec<u64> = a.words().iter().zip(b.words()).map(|(x, y)| x ^ y).collect();
    Ok(match round {
        Round::Priorities(rank) => {
            let mut best: Option<(u32, usize)> = None;
            for_each_set_bit(&diff, |p| {
                if best.is_none_or(|(r, _)| rank[p] > r) {
                    best = Some((rank[p], p));
                }
            });
            match best {
                None => Ordering::Equal,
                Some((_, p)) if a.get(p) => Ordering::Greater,
                Some(_) => Ordering::Less,
            }
        }
        Round::Weights(w) => {
            let mut terms = Vec::new();
            for_each_set_bit(&diff, |p| terms.push(if a.get(p) { w[p] } else { -w[p] }));
            neumaier_sum(terms)
                .partial_cmp(&0.0)
                .unwrap_or(Ordering::Equal)
        }
        Round::OneMax => a.ones().cmp(&b.ones()),
    })
}

/// Reusable buffers for worst-member selection.
#[derive(Debug, Default, Clone)]
pub struct Selector {
    alive: Vec<usize>,
    mask: Vec<u64>,
    scores: Vec<f64>,
}

impl Selector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fills `mask` with the positions where the alive candidates disagree and
    /// returns how many there are.
    fn disagreement(&mut self, candidates: &[Bitstring]) -> usize {
        let words = word_count(candidates[0].len());
        self.mask.clear();
        self.mask.resize(words, 0);
        let first = candidates[self.alive[0]].words();
        for &i in &self.alive[1..] {
            for (m, (x, y)) in self.mask.iter_mut().zip(first.iter().zip(candidates[i].words())) {
                *m |= x ^ y;
            }
        }
        self.mask.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// The `k`-th set bit of `mask`, counting from zero.
    fn nth_set_bit(&self, mut k: usize) -> usize {
        for (wi, &w) in self.mask.iter().enumerate() {
            let c = w.count_ones() as usize;
            if k < c {
                let mut w = w;
                for _ in 0..k {
                    w &= w - 1;
                }
                return wi * 64 + w.trailing_zeros() as usize;
            }
            k -= c;
        }
        unreachable!("k exceeds the number of set bits")
    }

    /// Keeps the alive candidates holding a zero at `pos`.
    fn eliminate_ones(&mut self, candidates: &[Bitstring], pos: usize) {
        self.alive.retain(|&i| !candidates[i].get(pos));
    }

    fn reset(&mut self, candidates: &[Bitstring]) -> Result<()> {
        if candidates.is_empty() {
            return Err(invalid("no candidates to select from"));
        }
        let n = candidates[0].len();
        if let Some(bad) = candidates.iter().find(|c| c.len() != n) {
            return Err(Error::LengthMismatch {
                left: bad.len(),
                right: n,
            });
        }
        self.alive.clear();
        self.alive.extend(0..candidates.len());
        Ok(())
    }

    /// Worst candidate under a fresh uniformly random DynBV permutation.
    ///
    /// The most significant position among those where the surviving
    /// candidates disagree is uniform over that set, so it is drawn directly;
    /// candidates holding a one there are fitter and drop out. Repeats until
    /// the survivors are identical, then breaks the tie uniformly.
    pub fn worst_lazy(&mut self, candidates: &[Bitstring], rng: &mut RandomSource) -> Result<usize> {
        self.reset(candidates)?;
        while self.alive.len() > 1 {
            let d = self.disagreement(candidates);
            if d == 0 {
                break;
            }
            let pos = self.nth_set_bit(rng.below(d));
            self.eliminate_ones(candidates, pos);
        }
        Ok(self.alive[rng.below(self.alive.len())])
    }

    /// Worst candidate under a materialized round; ties broken uniformly.
    pub fn worst(
        &mut self,
        round: &Round,
        candidates: &[Bitstring],
        rng: &mut RandomSource,
    ) -> Result<usize> {
        self.reset(candidates)?;
        round.check(&candidates[0])?;
        match round {
            Round::Priorities(rank) => {
                while self.alive.len() > 1 {
                    if self.disagreement(candidates) == 0 {
                        break;
                    }
                    let mut top: Option<(u32, usize)> = None;
                    for_each_set_bit(&self.mask, |p| {
                        if top.is_none_or(|(r, _)| rank[p] > r) {
                            top = Some((rank[p], p));
                        }
                    });
                    let (_, pos) = top.expect("mask is nonempty");
                    self.eliminate_ones(candidates, pos);
                }
            }
            Round::Weights(w) => {
                self.disagreement(candidates);
                let mask = std::mem::take(&mut self.mask);
                self.scores.clear();
                for cand in candidates {
                    let mut terms = Vec::new();
                    for_each_set_bit(&mask, |p| {
                        if cand.get(p) {
                            terms.push(w[p]);
                        }
                    });
                    self.scores.push(neumaier_sum(terms));
                }
                self.mask = mask;
                let min = self.scores.iter().copied().fold(f64::INFINITY, f64::min);
                let scores = &self.scores;
                self.alive.retain(|&i| scores[i] == min);
            }
            Round::OneMax => {
                let min = candidates.iter().map(Bitstring::ones).min().unwrap();
                self.alive.retain(|&i| candidates[i].ones() == min);
            }
        }
        Ok(self.alive[rng.below(self.alive.len())])
    }
}

/// Index of a candidate with minimal fitness under `round`, uniform among ties.
pub fn select_worst(round: &Round, candidates: &[Bitstring], rng: &mut RandomSource) -> Result<usize> {
    Selector::new().worst(round, candidates, rng)
}

/// Like [`select_worst`] for a fresh uniform DynBV permutation, sampling
/// priorities only where the candidates disagree.
pub fn select_worst_lazy(candidates: &[Bitstring], rng: &mut RandomSource) -> Result<usize> {
    Selector::new().worst_lazy(candidates, rng)
}

/// Generation-indexed objective: owns the current round and redraws it every
/// `change_period` generations.
#[derive(Debug, Clone)]
pub struct Environment {
    spec: EnvironmentSpec,
    n: usize,
    lazy: bool,
    current: Option<Round>,
    selector: Selector,
}

impl Environment {
    pub fn new(spec: EnvironmentSpec, n: usize) -> Result<Self> {
        spec.validate(Some(n))?;
        if n == 0 {
            return Err(Error::EmptyBitstring);
        }
        let lazy = spec.is_lazy_dynbv();
        Ok(Self {
            spec,
            n,
            lazy,
            current: None,
            selector: Selector::new(),
        })
    }

    /// Always materialize rounds, even where lazy selection applies.
    pub fn materialized(mut self) -> Self {
        self.lazy = false;
        self
    }

    pub fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn is_fresh(&self, generation: u64) -> bool {
        self.current.is_none() || generation.saturating_sub(1).is_multiple_of(self.spec.change_period)
    }

    /// The round in force at `generation` (1-based), drawing a new one when
    /// `(generation - 1) mod s == 0`.
    pub fn round(&mut self, generation: u64, rng: &mut RandomSource) -> Result<&Round> {
        if generation == 0 {
            return Err(invalid("generations are numbered from 1"));
        }
        if self.is_fresh(generation) {
            self.current = Some(sample_round(&self.spec, self.n, rng)?);
        }
        Ok(self.current.as_ref().unwrap())
    }

    /// Selects the worst of `candidates` under the round for `generation`.
    pub fn select_worst(
        &mut self,
        generation: u64,
        candidates: &[Bitstring],
        rng: &mut RandomSource,
    ) -> Result<usize> {
        if self.lazy {
            return self.selector.worst_lazy(candidates, rng);
        }
        self.round(generation, rng)?;
        let round = self.current.as_ref().unwrap();
        self.selector.worst(round, candidates, rng)
    }
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbabilityEstimate {
    pub estimate: f64,
    pub std_err: f64,
    pub trials: u64,
}

/// Probability that the largest of `k` i.i.d. Pareto(`shape`) weights exceeds
/// the sum of the other `k - 1`.
pub fn estimate_dominance_pk(
    k: usize,
    shape: f64,
    trials: u64,
    rng: &mut RandomSource,
) -> Result<ProbabilityEstimate> {
    if k < 2 {
        return Err(invalid("k must be at least 2"));
    }
    if trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    let dist = Pareto::new(1.0, shape).map_err(|e| invalid(e.to_string()))?;
    let mut weights = vec![0.0; k];
    let mut hits = 0u64;
    for _ in 0..trials {
        weights.iter_mut().for_each(|w| *w = rng.sample(&dist));
        let (imax, &wmax) = weights
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let rest = neumaier_sum(
            weights
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != imax)
                .map(|(_, &w)| w),
        );
        if wmax > rest {
            hits += 1;
        }
    }
    let p = hits as f64 / trials as f64;
    Ok(ProbabilityEstimate {
        estimate: p,
        std_err: (p * (1.0 - p) / trials as f64).sqrt(),
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bs(s: &str) -> Bitstring {
        s.parse().unwrap()
    }

    #[test]
    fn hand_evaluated_order() {
        // ranks pos1->1, pos2->2, pos3->3; position 3 decides and b holds the 1
        let round = Round::Priorities(vec![1, 2, 3]);
        assert_eq!(compare(&round, &bs("110"), &bs("001")).unwrap(), Ordering::Less);
        assert_eq!(compare(&round, &bs("001"), &bs("110")).unwrap(), Ordering::Greater);
    }

    #[test]
    fn equal_strings_compare_equal() {
        let mut rng = RandomSource::from_seed(1);
        let x = Bitstring::new_uniform(50, &mut rng).unwrap();
        for spec in [EnvironmentSpec::dyn_binval(), EnvironmentSpec::pareto(0.7).unwrap(), EnvironmentSpec::onemax()] {
            let round = sample_round(&spec, 50, &mut rng).unwrap();
            assert_eq!(compare(&round, &x, &x).unwrap(), Ordering::Equal);
        }
    }

    #[test]
    fn dominating_string_wins() {
        let mut rng = RandomSource::from_seed(2);
        let a = bs("1101101");
        let b = bs("0101001");
        for spec in [EnvironmentSpec::dyn_binval(), EnvironmentSpec::pareto(2.0).unwrap()] {
            for _ in 0..200 {
                let round = sample_round(&spec, 7, &mut rng).unwrap();
                assert_eq!(compare(&round, &a, &b).unwrap(), Ordering::Greater);
            }
        }
    }

    #[test]
    fn length_mismatch_rejected() {
        let round = Round::Priorities(vec![1, 2, 3]);
        assert!(compare(&round, &bs("110"), &bs("1100")).is_err());
        assert!(compare(&round, &bs("1101"), &bs("1100")).is_err());
    }

    #[test]
    fn permutations_uniform_for_n3() {
        let mut rng = RandomSource::from_seed(3);
        let spec = EnvironmentSpec::dyn_binval();
        let mut counts = std::collections::HashMap::new();
        for _ in 0..60_000 {
            let Round::Priorities(p) = sample_round(&spec, 3, &mut rng).unwrap() else {
                unreachable!()
            };
            *counts.entry(p).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 6);
        for (perm, c) in counts {
            assert!((9_600..=10_400).contains(&c), "{perm:?} seen {c} times");
        }
    }

    #[test]
    fn change_period_reuses_rounds() {
        let mut rng = RandomSource::from_seed(4);
        let spec = EnvironmentSpec::dyn_binval().with_change_period(5).unwrap();
        let mut env = Environment::new(spec, 40).unwrap();
        let first = env.round(1, &mut rng).unwrap().clone();
        for g in 2..=5 {
            assert_eq!(env.round(g, &mut rng).unwrap(), &first);
        }
        assert_ne!(env.round(6, &mut rng).unwrap(), &first);
    }

    #[test]
    fn period_one_redraws() {
        let mut rng = RandomSource::from_seed(4);
        let mut env = Environment::new(EnvironmentSpec::dyn_binval(), 40).unwrap();
        let first = env.round(1, &mut rng).unwrap().clone();
        assert_ne!(env.round(2, &mut rng).unwrap(), &first);
    }

    #[test]
    fn zero_period_rejected() {
        assert!(EnvironmentSpec::dyn_binval().with_change_period(0).is_err());
        assert!(EnvironmentSpec::pareto(0.0).is_err());
        assert!(EnvironmentSpec::pareto(-1.0).is_err());
    }

    #[test]
    fn uniform_tie_break_among_identical() {
        let mut rng = RandomSource::from_seed(5);
        let x = bs("1011");
        let cands = vec![x.clone(), x.clone(), x];
        let mut counts = [0usize; 3];
        for _ in 0..10_000 {
            counts[select_worst_lazy(&cands, &mut rng).unwrap()] += 1;
        }
        for c in counts {
            let f = c as f64 / 10_000.0;
            assert!((f - 1.0 / 3.0).abs() < 0.02, "frequency {f}");
        }
    }

    #[test]
    fn dominated_candidate_always_removed() {
        let mut rng = RandomSource::from_seed(6);
        let cands = vec![bs("1110"), bs("0100"), bs("1101")];
        for _ in 0..1000 {
            assert_eq!(select_worst_lazy(&cands, &mut rng).unwrap(), 1);
            let round = sample_round(&EnvironmentSpec::dyn_binval(), 4, &mut rng).unwrap();
            assert_eq!(select_worst(&round, &cands, &mut rng).unwrap(), 1);
        }
    }

    #[test]
    fn worst_of_three_is_loser_of_pair() {
        // 111 dominates both others, so the worst is whichever of 110/001 loses
        let cands = vec![bs("110"), bs("001"), bs("111")];
        let mut rng = RandomSource::from_seed(7);
        let mut ranks = vec![1u32, 2, 3];
        let perms = all_permutations(&mut ranks);
        for p in perms {
            let round = Round::Priorities(p);
            let w = select_worst(&round, &cands, &mut rng).unwrap();
            let loser = match compare(&round, &cands[0], &cands[1]).unwrap() {
                Ordering::Less => 0,
                _ => 1,
            };
            assert_eq!(w, loser);
        }
    }

    fn all_permutations(v: &mut [u32]) -> Vec<Vec<u32>> {
        fn rec(k: usize, v: &mut [u32], out: &mut Vec<Vec<u32>>) {
            if k == v.len() {
                out.push(v.to_vec());
                return;
            }
            for i in k..v.len() {
                v.swap(k, i);
                rec(k + 1, v, out);
                v.swap(k, i);
            }
        }
        let mut out = Vec::new();
        rec(0, v, &mut out);
        out
    }

    #[test]
    fn onemax_is_ones_count() {
        let round = Round::OneMax;
        assert_eq!(compare(&round, &bs("1100"), &bs("0011")).unwrap(), Ordering::Equal);
        assert_eq!(compare(&round, &bs("1110"), &bs("0011")).unwrap(), Ordering::Greater);
    }

    #[test]
    fn weights_compare_by_sum() {
        let round = Round::Weights(vec![1.0, 5.0, 2.0]);
        assert_eq!(compare(&round, &bs("101"), &bs("010")).unwrap(), Ordering::Less);
        assert_eq!(compare(&round, &bs("110"), &bs("011")).unwrap(), Ordering::Less);
    }

    #[test]
    fn pk_two_is_one() {
        let mut rng = RandomSource::from_seed(8);
        for shape in [0.3, 1.0, 5.0] {
            let est = estimate_dominance_pk(2, shape, 5000, &mut rng).unwrap();
            assert_eq!(est.estimate, 1.0);
        }
    }

    #[test]
    fn pk_heavy_tail_bound() {
        let mut rng = RandomSource::from_seed(9);
        let est = estimate_dominance_pk(3, 0.1, 20_000, &mut rng).unwrap();
        let bound = 2f64.powf(-0.1);
        assert!(est.estimate >= bound - 3.0 * est.std_err, "{est:?} vs {bound}");
    }

    #[test]
    fn pk_light_tail_is_rare() {
        let mut rng = RandomSource::from_seed(10);
        let est = estimate_dominance_pk(5, 10.0, 20_000, &mut rng).unwrap();
        assert!(est.estimate < 0.5, "{est:?}");
    }

    #[test]
    fn pk_rejects_bad_args() {
        let mut rng = RandomSource::from_seed(0);
        assert!(estimate_dominance_pk(1, 1.0, 10, &mut rng).is_err());
        assert!(estimate_dominance_pk(3, 1.0, 0, &mut rng).is_err());
    }

    #[test]
    fn neumaier_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16];
        assert_eq!(neumaier_sum(v), 1.0);
    }
}
