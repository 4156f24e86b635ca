//! Wilcoxon–Mann–Whitney rank-sum test and the largest-significant-factor
//! comparison of two runtime samples.
//!
//! Ties get midranks. The exact null distribution is computed by dynamic
//! programming over doubled midranks, which are integers, so tied data is
//! handled exactly too. The normal approximation uses the tie-corrected
//! variance and a continuity correction of 1/2.

use std::fmt;
use std::str::FromStr;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Error, Result};

/// Both samples at most this large: `Method::Auto` enumerates exactly.
pub const EXACT_LIMIT: usize = 10;
/// Largest pooled size the exact distribution supports.
pub const EXACT_MAX_POOLED: usize = 120;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alternative {
    /// Values of the first sample tend to be smaller.
    Less,
    Greater,
    TwoSided,
}

impl Alternative {
    pub fn as_str(self) -> &'static str {
        match self {
            Alternative::Less => "less",
            Alternative::Greater => "greater",
            Alternative::TwoSided => "two_sided",
        }
    }
}

impl fmt::Display for Alternative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Alternative {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "less" | "a_less" => Ok(Alternative::Less),
            "greater" | "a_greater" => Ok(Alternative::Greater),
            "two_sided" | "two-sided" => Ok(Alternative::TwoSided),
            _ => Err(invalid(format!("unknown alternative {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Exact when both samples have at most [`EXACT_LIMIT`] values.
    Auto,
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MwuResult {
    /// U statistic of the first sample: pairs where it is larger, ties half.
    pub u: f64,
    pub p_value: f64,
    /// `Exact` or `Normal`, never `Auto`.
    pub method: Method,
}

/// Observed generation counts, with a flag for runs stopped at the cap.
#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeSample {
    values: Vec<f64>,
    censored: Vec<bool>,
}

impl RuntimeSample {
    pub fn new(values: Vec<f64>, censored: Vec<bool>) -> Result<Self> {
        if values.len() != censored.len() {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: censored.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("runtime values must be finite"));
        }
        Ok(Self { values, censored })
    }

    pub fn uncensored(values: Vec<f64>) -> Result<Self> {
        let censored = vec![false; values.len()];
        Self::new(values, censored)
    }

    /// From (generations, success) pairs; failures are censored at their count.
    pub fn from_runs(runs: impl IntoIterator<Item = (u64, bool)>) -> Self {
        let (values, censored) = runs
            .into_iter()
            .map(|(g, success)| (g as f64, !success))
            .unzip();
        Self { values, censored }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn censored(&self) -> &[bool] {
        &self.censored
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn censored_count(&self) -> usize {
        self.censored.iter().filter(|&&c| c).count()
    }

    /// Only the runs that finished before the cap.
    pub fn without_censored(&self) -> Self {
        let (values, censored) = self
            .values
            .iter()
            .zip(&self.censored)
            .filter(|(_, &c)| !c)
            .map(|(&v, &c)| (v, c))
            .unzip();
        Self { values, censored }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            censored: self.censored.clone(),
        }
    }
}

/// How censored runs enter a comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CensorMode {
    /// Keep them at their cap value.
    #[default]
    AtCap,
    Exclude,
}

/// Doubled midranks of `a` followed by `b` in the pooled sample, plus the tie
/// correction term `sum (t^3 - t)`.
fn doubled_midranks(a: &[f64], b: &[f64]) -> (Vec<u64>, f64) {
    let mut pooled: Vec<(f64, usize)> = a.iter().chain(b).copied().zip(0..).collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut ranks = vec![0u64; pooled.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i + 1;
        while j < pooled.len() && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        // ranks i+1..=j, doubled midrank = i + 1 + j
        let doubled = (i + 1 + j) as u64;
        for item in &pooled[i..j] {
            ranks[item.1] = doubled;
        }
        let t = (j - i) as f64;
        ties += t * t * t - t;
        i = j;
    }
    (ranks, ties)
}

/// Counts of each doubled rank sum over all size-`m` subsets of `ranks`.
fn rank_sum_counts(ranks: &[u64], m: usize) -> Vec<u128> {
    let total: u64 = ranks.iter().sum();
    let width = total as usize + 1;
    // counts[k * width + s]
    let mut counts = vec![0u128; (m + 1) * width];
    counts[0] = 1;
    for &r in ranks {
        let r = r as usize;
        for k in (1..=m).rev() {
            let (lower, upper) = counts.split_at_mut(k * width);
            let prev = &lower[(k - 1) * width..];
            let cur = &mut upper[..width];
            for s in (r..width).rev() {
                cur[s] += prev[s - r];
            }
        }
    }
    counts[m * width..].to_vec()
}

fn exact_p(ranks: &[u64], m: usize, observed: u64, alternative: Alternative) -> f64 {
    let counts = rank_sum_counts(ranks, m);
    let total: u128 = counts.iter().sum();
    let n_pooled = ranks.len() as i128;
    // doubled expected rank sum m (N+1)
    let center = m as i128 * (n_pooled + 1);
    let obs_dev = (observed as i128 - center).abs();
    let hits: u128 = counts
        .iter()
        .enumerate()
        .filter(|&(s, &c)| {
            c > 0
                && match alternative {
                    Alternative::Less => s as u64 <= observed,
                    Alternative::Greater => s as u64 >= observed,
                    Alternative::TwoSided => (s as i128 - center).abs() >= obs_dev,
                }
        })
        .map(|(_, &c)| c)
        .sum();
    (hits as f64 / total as f64).min(1.0)
}

fn normal_p(u: f64, m: usize, n: usize, ties: f64, alternative: Alternative) -> f64 {
    let (mf, nf) = (m as f64, n as f64);
    let big_n = mf + nf;
    let mean = mf * nf / 2.0;
    let var = mf * nf / 12.0 * ((big_n + 1.0) - ties / (big_n * (big_n - 1.0)));
    if !(var > 0.0) {
        return 1.0;
    }
    let sd = var.sqrt();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let p = match alternative {
        Alternative::Less => std_normal.cdf((u - mean + 0.5) / sd),
        Alternative::Greater => std_normal.sf((u - mean - 0.5) / sd),
        Alternative::TwoSided => {
            let z = ((u - mean).abs() - 0.5).max(0.0) / sd;
            2.0 * std_normal.sf(z)
        }
    };
    p.min(1.0)
}

/// Rank-sum test of `a` against `b`.
pub fn mann_whitney_u(a: &[f64], b: &[f64], alternative: Alternative, method: Method) -> Result<MwuResult> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("both samples must be nonempty"));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(invalid("samples contain NaN"));
    }
    let (m, n) = (a.len(), b.len());
    let (ranks, ties) = doubled_midranks(a, b);
    let doubled_sum: u64 = ranks[..m].iter().sum();
    let m_u = m as u64;
    let u = (doubled_sum - m_u * (m_u + 1)) as f64 / 2.0;
    let method = match method {
        Method::Auto if m <= EXACT_LIMIT && n <= EXACT_LIMIT => Method::Exact,
        Method::Auto => Method::Normal,
        other => other,
    };
    let p_value = match method {
        Method::Exact => {
            if m + n > EXACT_MAX_POOLED {
                return Err(invalid(format!(
                    "exact distribution limited to {EXACT_MAX_POOLED} pooled values, got {}",
                    m + n
                )));
            }
            exact_p(&ranks, m, doubled_sum, alternative)
        }
        _ => normal_p(u, m, n, ties, alternative),
    };
    Ok(MwuResult { u, p_value, method })
}

/// Largest multiplier of the faster sample that keeps it significantly smaller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorResult {
    /// Largest factor found with p <= alpha.
    pub d_max: f64,
    /// Smallest factor found with p > alpha; infinite if none was found.
    pub d_upper: f64,
    pub alpha: f64,
    pub p_at_d_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FactorOutcome {
    Significant(FactorResult),
    /// The one-sided test already fails at d = 1.
    NotSignificant { alpha: f64, p_at_one: f64 },
}

impl FactorOutcome {
    pub fn d_max(&self) -> Option<f64> {
        match self {
            FactorOutcome::Significant(r) => Some(r.d_max),
            FactorOutcome::NotSignificant { .. } => None,
        }
    }

    pub fn p_value(&self) -> f64 {
        match self {
            FactorOutcome::Significant(r) => r.p_at_d_max,
            FactorOutcome::NotSignificant { p_at_one, .. } => *p_at_one,
        }
    }
}

pub const DEFAULT_ALPHA: f64 = 0.05;

/// Bisection over d for the largest factor such that `d * fast` is still
/// significantly smaller than `slow` (one-sided test, `method` as given).
///
/// The p-value is a step function of d, so the result is a bracket
/// `[d_max, d_upper]` around a jump, at most `tolerance` wide.
pub fn max_significant_factor(
    fast: &RuntimeSample,
    slow: &RuntimeSample,
    alpha: f64,
    tolerance: f64,
    censoring: CensorMode,
    method: Method,
) -> Result<FactorOutcome> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha = {alpha} outside (0, 1)")));
    }
    if !(tolerance > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    let (fast, slow) = match censoring {
        CensorMode::AtCap => (fast.clone(), slow.clone()),
        CensorMode::Exclude => (fast.without_censored(), slow.without_censored()),
    };
    if fast.is_empty() || slow.is_empty() {
        return Err(invalid("a sample is empty after removing censored runs"));
    }
    let p_at = |d: f64| -> Result<f64> {
        Ok(mann_whitney_u(fast.scaled(d).values(), slow.values(), Alternative::Less, method)?.p_value)
    };
    let p_one = p_at(1.0)?;
    if p_one > alpha {
        return Ok(FactorOutcome::NotSignificant {
            alpha,
            p_at_one: p_one,
        });
    }
    let slow_max = slow.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let fast_min = fast
        .values()
        .iter()
        .copied()
        .filter(|&v| v > 0.0)
        .fold(f64::INFINITY, f64::min);
    let mut hi = if fast_min.is_finite() && slow_max > 0.0 {
        (2.0 * slow_max / fast_min).max(2.0)
    } else {
        2.0
    };
    let mut doublings = 0;
    while p_at(hi)? <= alpha {
        doublings += 1;
        if doublings > 64 {
            return Ok(FactorOutcome::Significant(FactorResult {
                d_max: hi,
                d_upper: f64::INFINITY,
                alpha,
                p_at_d_max: p_at(hi)?,
            }));
        }
        hi *= 2.0;
    }
    let mut lo = 1.0;
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        if p_at(mid)? <= alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(FactorOutcome::Significant(FactorResult {
        d_max: lo,
        d_upper: hi,
        alpha,
        p_at_d_max: p_at(lo)?,
    }))
}

pub const COMPARISON_HEADER: [&str; 6] = ["cell_fast", "cell_slow", "alternative", "alpha", "d_max", "p_at_d_max"];
