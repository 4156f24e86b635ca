//! Degenerate-population drift.
//!
//! A degenerate population holds mu copies of one string. Starting from one
//! with `y` zero-bits, the algorithm runs until an offspring that differs from
//! the starting string has been accepted and the population is degenerate
//! again; the drift is the expected decrease in the zero-bit count between the
//! two degenerate populations.
//!
//! Two routes are provided: Monte-Carlo estimation on the real process for any
//! mu, variant and y, and asymptotic formulas for the (2+1)-EA and (2+1)-GA
//! close to the optimum (y = o(n), n large), obtained from Markov-chain state
//! diagrams in which a freshly accepted offspring that flipped one zero-bit and
//! `r` one-bits leads to a state whose expected outcome is `F(r)` (EA) or
//! `Fbar(r)` (GA).

use std::fmt;
use std::path::Path;

use rayon::prelude::*;

use crate::bitstring::Bitstring;
use crate::environments::{Environment, EnvironmentSpec};
use crate::error::{invalid, Error, Result};
use crate::evolve::{Algorithm, AlgorithmConfig};
use crate::harness::{fmt_f64, write_rows};
use crate::rng::{derive_seed, RandomSource};

pub const DEFAULT_SAMPLE_CAP: u64 = 1_000_000;
pub const DEFAULT_R_MAX: usize = 50;
/// Poisson tail mass allowed beyond the inner truncation index.
pub const POISSON_TAIL: f64 = 1e-12;

/// Outcome of one Monte-Carlo drift sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftSample {
    /// `y` minus the zero-bit count of the next degenerate population.
    Delta(i64),
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftEstimate {
    pub y: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub std_err: f64,
    pub samples: u64,
    pub timeouts: u64,
}

impl DriftEstimate {
    /// Aggregates deltas; timeouts are counted, not averaged.
    pub fn from_deltas(y: usize, deltas: &[i64], timeouts: u64) -> Result<Self> {
        if deltas.is_empty() {
            return Err(invalid(format!(
                "no completed drift samples at y = {y} ({timeouts} timeouts)"
            )));
        }
        let k = deltas.len() as f64;
        let sum: i128 = deltas.iter().map(|&d| d as i128).sum();
        let mean = sum as f64 / k;
        let std_dev = if deltas.len() > 1 {
            let ss: f64 = deltas.iter().map(|&d| (d as f64 - mean).powi(2)).sum();
            (ss / (k - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(Self {
            y,
            mean,
            std_dev,
            std_err: std_dev / k.sqrt(),
            samples: deltas.len() as u64,
            timeouts,
        })
    }

    /// Mean divided by standard error; infinite for a zero-variance nonzero mean.
    pub fn z_score(&self) -> f64 {
        if self.std_err > 0.0 {
            self.mean / self.std_err
        } else if self.mean == 0.0 {
            0.0
        } else {
            self.mean.signum() * f64::INFINITY
        }
    }
}

/// One drift sample from a degenerate population of strings with `y` zeros.
pub fn mc_drift_sample(
    alg: &Algorithm,
    spec: &EnvironmentSpec,
    y: usize,
    per_sample_cap: u64,
    rng: &mut RandomSource,
) -> Result<DriftSample> {
    let n = alg.len();
    if y < 1 || y > n {
        return Err(invalid(format!("y = {y} outside [1, {n}]")));
    }
    let start = Bitstring::with_zero_count(n, y, rng)?;
    let mut state = alg.degenerate_population(&start)?;
    let mut env = Environment::new(spec.clone(), n)?;
    let mut progressed = false;
    while state.generation() < per_sample_cap {
        let event = alg.step(&mut state, &mut env, rng)?;
        // until progress every member equals `start`, so an accepted non-copy
        // is exactly an accepted string different from it
        if !progressed && event.accepted && !event.offspring_is_copy {
            progressed = true;
        }
        if progressed && state.is_degenerate() {
            let zeros = state.members()[0].zeros_count();
            return Ok(DriftSample::Delta(y as i64 - zeros as i64));
        }
    }
    Ok(DriftSample::Timeout)
}

/// Monte-Carlo estimate of the drift at `y` from `samples` samples.
///
/// Sample `i` uses a stream derived from one draw of `rng` and `i`, so the
/// result does not depend on the thread count.
pub fn mc_drift(
    config: &AlgorithmConfig,
    spec: &EnvironmentSpec,
    n: usize,
    y: usize,
    samples: u64,
    per_sample_cap: u64,
    rng: &mut RandomSource,
) -> Result<DriftEstimate> {
    if samples == 0 {
        return Err(invalid("samples must be at least 1"));
    }
    let alg = Algorithm::new(*config, n)?;
    let base = rng.next_u64();
    let outcomes = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = RandomSource::from_seed(derive_seed(base, &[y as u64, i]));
            mc_drift_sample(&alg, spec, y, per_sample_cap, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut deltas = Vec::with_capacity(outcomes.len());
    let mut timeouts = 0;
    for o in outcomes {
        match o {
            DriftSample::Delta(d) => deltas.push(d),
            DriftSample::Timeout => timeouts += 1,
        }
    }
    DriftEstimate::from_deltas(y, &deltas, timeouts)
}

/// One estimate per grid point.
pub fn drift_profile(
    config: &AlgorithmConfig,
    spec: &EnvironmentSpec,
    n: usize,
    y_grid: &[usize],
    samples: u64,
    per_sample_cap: u64,
    rng: &mut RandomSource,
) -> Result<Vec<DriftEstimate>> {
    if y_grid.is_empty() {
        return Err(invalid("y grid is empty"));
    }
    if let Some(&bad) = y_grid.iter().find(|&&y| y < 1 || y > n) {
        return Err(invalid(format!("grid point y = {bad} outside [1, {n}]")));
    }
    y_grid
        .iter()
        .map(|&y| mc_drift(config, spec, n, y, samples, per_sample_cap, rng))
        .collect()
}

pub const DRIFT_HEADER: [&str; 10] = [
    "algorithm", "mu", "c", "n", "y", "mean", "std_dev", "std_err", "samples", "timeouts",
];

/// Estimates of one algorithm cell over a grid of y values.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftProfile {
    pub config: AlgorithmConfig,
    pub n: usize,
    pub estimates: Vec<DriftEstimate>,
}

pub fn write_drift_csv(path: &Path, profiles: &[DriftProfile]) -> Result<()> {
    let rows = profiles.iter().flat_map(|p| {
        p.estimates.iter().map(move |e| {
            vec![
                p.config.variant.to_string(),
                p.config.mu.to_string(),
                fmt_f64(p.config.c),
                p.n.to_string(),
                e.y.to_string(),
                fmt_f64(e.mean),
                fmt_f64(e.std_dev),
                fmt_f64(e.std_err),
                e.samples.to_string(),
                e.timeouts.to_string(),
            ]
        })
    });
    write_rows(path, &DRIFT_HEADER, rows)
}

/// `F(r) = (1 - r) / (r + 1)`: expected zero-bit decrease of the (2+1)-EA
/// once it holds the old string and an accepted offspring that flipped one
/// zero-bit and `r` one-bits.
pub fn ea_state_value(r: usize) -> Result<f64> {
    if r < 1 {
        return Err(invalid("r must be at least 1"));
    }
    let r = r as f64;
    Ok((1.0 - r) / (r + 1.0))
}

/// Truncated Poisson(c) probabilities `P[S = s]` for `s = 0..=s_max`.
fn poisson_pmf(c: f64, s_max: usize) -> Vec<f64> {
    let mut pmf = Vec::with_capacity(s_max + 1);
    let mut p = (-c).exp();
    for s in 0..=s_max {
        if s > 0 {
            p *= c / s as f64;
        }
        pmf.push(p);
    }
    pmf
}

/// Poisson(c) mass strictly above `s`.
fn poisson_tail_above(c: f64, s: usize) -> f64 {
    // sum forward from s+1 until terms are negligible and decreasing
    let mut p = (-c).exp();
    for k in 1..=s + 1 {
        p *= c / k as f64;
    }
    let mut tail = 0.0;
    let mut k = s + 1;
    loop {
        tail += p;
        k += 1;
        p *= c / k as f64;
        if k as f64 > c && p < tail * 1e-17 + 1e-300 {
            break;
        }
    }
    tail
}

/// Smallest `s_max` whose Poisson(c) tail is below [`POISSON_TAIL`].
pub fn poisson_truncation(c: f64) -> usize {
    let mut s = c.ceil() as usize;
    while poisson_tail_above(c, s) >= POISSON_TAIL {
        s += 1;
    }
    s
}

/// Inputs of the near-optimum drift formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticDriftParams {
    pub c: f64,
    pub n: usize,
    pub y: usize,
    /// Largest number of simultaneously flipped one-bits considered.
    pub r_max: usize,
    /// Truncation of the inner Poisson sums.
    pub s_max: usize,
}

impl AnalyticDriftParams {
    /// Default truncation: `r_max = 50`, `s_max` from the Poisson tail bound.
    pub fn new(c: f64, n: usize, y: usize) -> Result<Self> {
        Self::check(c, n, y)?;
        Ok(Self {
            c,
            n,
            y,
            r_max: DEFAULT_R_MAX,
            s_max: poisson_truncation(c),
        })
    }

    pub fn with_truncation(mut self, r_max: usize, s_max: usize) -> Result<Self> {
        if r_max < 1 || r_max > 1000 {
            return Err(invalid(format!("r_max = {r_max} outside [1, 1000]")));
        }
        let tail = poisson_tail_above(self.c, s_max);
        if tail >= POISSON_TAIL {
            return Err(invalid(format!(
                "s_max = {s_max} leaves Poisson tail {tail:e} >= {POISSON_TAIL:e}"
            )));
        }
        self.r_max = r_max;
        self.s_max = s_max;
        Ok(self)
    }

    fn check(c: f64, n: usize, y: usize) -> Result<()> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(invalid(format!("c must be positive, got {c}")));
        }
        if y < 1 || y >= n {
            return Err(invalid(format!("y = {y} outside [1, {n})")));
        }
        if c >= n as f64 {
            return Err(invalid(format!("c = {c} must be below n = {n}")));
        }
        Ok(())
    }
}

/// Elementary event probabilities of one mutation of the degenerate string.
#[derive(Debug, Clone)]
struct FlipProbabilities {
    /// No zero-bit flipped.
    no_zero_flip: f64,
    /// Exactly one zero-bit and no one-bit flipped.
    single_zero_only: f64,
    /// `one_and_r[r]`: one zero-bit and exactly `r` one-bits flipped, `r >= 1`.
    one_and_r: Vec<f64>,
}

impl FlipProbabilities {
    fn new(p: &AnalyticDriftParams) -> Self {
        let n = p.n as f64;
        let y = p.y as f64;
        let q = p.c / n;
        let log1mq = (-q).ln_1p();
        let no_zero_flip = (y * log1mq).exp();
        let single_zero_only = y * q * ((n - 1.0) * log1mq).exp();
        // y C(n-y, r) q^(r+1) (1-q)^(n-r-1), built up from r = 0
        let ratio = q / (1.0 - q);
        let mut one_and_r = vec![0.0; p.r_max + 1];
        let mut term = single_zero_only;
        let ones = p.n - p.y;
        for (r, slot) in one_and_r.iter_mut().enumerate().skip(1) {
            term = if r > ones {
                0.0
            } else {
                term * (ones - r + 1) as f64 / r as f64 * ratio
            };
            *slot = term;
        }
        Self {
            no_zero_flip,
            single_zero_only,
            one_and_r,
        }
    }

    /// One zero-bit and `r` one-bits flipped, and the offspring accepted.
    fn accepted(&self, r: usize) -> f64 {
        self.one_and_r[r] / (r as f64 + 1.0)
    }

    /// One zero-bit and at least one one-bit flipped, offspring rejected.
    fn rejected(&self) -> f64 {
        self.one_and_r
            .iter()
            .enumerate()
            .skip(1)
            .map(|(r, &p)| p * r as f64 / (r as f64 + 1.0))
            .sum()
    }

    fn weighted_outcomes(&self, state_value: impl Fn(usize) -> f64) -> f64 {
        self.single_zero_only
            + (1..self.one_and_r.len())
                .map(|r| self.accepted(r) * state_value(r))
                .sum::<f64>()
    }
}

/// Near-optimum degenerate-population drift of the (2+1)-EA.
pub fn ea_drift_near_optimum(params: &AnalyticDriftParams) -> Result<f64> {
    AnalyticDriftParams::check(params.c, params.n, params.y)?;
    let fp = FlipProbabilities::new(params);
    let progress = 1.0 - fp.no_zero_flip - fp.rejected();
    let numerator = fp.weighted_outcomes(|r| {
        let r = r as f64;
        (1.0 - r) / (r + 1.0)
    });
    Ok(numerator / progress)
}

/// `Fbar(1..=r_max)` for the (2+1)-GA (index 0 unused).
///
/// From the state holding the old string `x` and an accepted offspring that
/// gained one zero-bit position and lost `r` one-bits, every transition of the
/// GA either ends in a degenerate population, returns to the same state, or,
/// for crossovers that keep the gained bit and `s >= 1` of the lost ones, moves
/// to the state with `r - s`. Multiplying the balance equation by four:
///
/// ```text
/// 4 Fbar(r) = sum_s pi_s ((r+2s+1)/(r+s+1) Fbar(r) + (1-r)/(r+s+1))
///           + Fbar(r)/2 + (1-r)/(2(r+1))
///           + sum_{s<r} C(r,s) h (s+1-r)/(r+1)
///           + sum_{1<=s<r} C(r,s) h r/(r+1) Fbar(r-s) + h r/(r+1) Fbar(r)
///           + h + sum_{s<=r} C(r,s) h Fbar(r)/(s+1)
/// ```
///
/// with `pi_s` the Poisson(c) probabilities and `h = 2^-(r+1)`. Each equation
/// is linear in `Fbar(r)` once the smaller states are known.
pub fn ga_state_values(c: f64, r_max: usize, s_max: usize) -> Result<Vec<f64>> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(invalid(format!("c must be positive, got {c}")));
    }
    if r_max < 1 {
        return Err(invalid("r_max must be at least 1"));
    }
    let pmf = poisson_pmf(c, s_max);
    let mut values = vec![f64::NAN; r_max + 1];
    for r in 1..=r_max {
        let rf = r as f64;
        let h = 0.5f64.powi(r as i32 + 1);
        // C(r, s) * h for s = 0..=r
        let mut split = Vec::with_capacity(r + 1);
        let mut binom = 1.0f64;
        for s in 0..=r {
            if s > 0 {
                binom = binom * (r - s + 1) as f64 / s as f64;
            }
            split.push(binom * h);
        }

        let mut coeff = 0.0;
        let mut constant = 0.0;
        // mutation steps
        for (s, &pi) in pmf.iter().enumerate() {
            let sf = s as f64;
            coeff += pi * (rf + 2.0 * sf + 1.0) / (rf + sf + 1.0);
            constant += pi * (1.0 - rf) / (rf + sf + 1.0);
        }
        // crossover of a string with itself
        coeff += 0.5;
        constant += (1.0 - rf) / (2.0 * (rf + 1.0));
        // crossover of the two strings, gained bit kept, s < r lost bits restored
        for (s, &w) in split.iter().enumerate().take(r) {
            constant += w * (s as f64 + 1.0 - rf) / (rf + 1.0);
            if s >= 1 {
                constant += w * rf / (rf + 1.0) * values[r - s];
            }
        }
        coeff += h * rf / (rf + 1.0);
        // every lost bit restored as well
        constant += h;
        // gained bit dropped
        for (s, &w) in split.iter().enumerate() {
            coeff += w / (s as f64 + 1.0);
        }

        let denominator = 4.0 - coeff;
        if !(denominator > 0.0) {
            return Err(Error::Divergent { r, denominator });
        }
        values[r] = constant / denominator;
    }
    Ok(values)
}

pub fn ga_state_value(r: usize, c: f64, r_max: usize, s_max: usize) -> Result<f64> {
    if r < 1 || r > r_max {
        return Err(invalid(format!("r = {r} outside [1, {r_max}]")));
    }
    Ok(ga_state_values(c, r_max, s_max)?[r])
}

/// Near-optimum degenerate-population drift of the (2+1)-GA. Mutations happen
/// only every other generation on average, which halves both the progress
/// probability and the numerator.
pub fn ga_drift_near_optimum(params: &AnalyticDriftParams) -> Result<f64> {
    AnalyticDriftParams::check(params.c, params.n, params.y)?;
    let fp = FlipProbabilities::new(params);
    let values = ga_state_values(params.c, params.r_max, params.s_max)?;
    let progress = 0.5 - 0.5 * (fp.no_zero_flip + fp.rejected());
    let numerator = fp.weighted_outcomes(|r| values[r]);
    Ok(numerator / (2.0 * progress))
}

/// Which near-optimum formula to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalyticModel {
    Ea,
    Ga,
}

impl AnalyticModel {
    pub fn drift(self, params: &AnalyticDriftParams) -> Result<f64> {
        match self {
            AnalyticModel::Ea => ea_drift_near_optimum(params),
            AnalyticModel::Ga => ga_drift_near_optimum(params),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AnalyticModel::Ea => "(2+1)-EA",
            AnalyticModel::Ga => "(2+1)-GA",
        }
    }
}

impl fmt::Display for AnalyticModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for AnalyticModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ea" | "(2+1)-ea" => Ok(AnalyticModel::Ea),
            "ga" | "(2+1)-ga" => Ok(AnalyticModel::Ga),
            _ => Err(invalid(format!("unknown analytic model {s:?} (expected EA or GA)"))),
        }
    }
}

/// Drift at `c` with default truncation.
pub fn analytic_drift(model: AnalyticModel, c: f64, n: usize, y: usize) -> Result<f64> {
    model.drift(&AnalyticDriftParams::new(c, n, y)?)
}

/// Bisection root in c of the analytic drift, given positive drift at `c_lo`
/// and negative drift at `c_hi`.
pub fn drift_sign_threshold(
    model: AnalyticModel,
    n: usize,
    y: usize,
    c_lo: f64,
    c_hi: f64,
    tolerance: f64,
) -> Result<f64> {
    if !(tolerance > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    if !(c_lo < c_hi) {
        return Err(invalid(format!("empty bracket [{c_lo}, {c_hi}]")));
    }
    let f_lo = analytic_drift(model, c_lo, n, y)?;
    let f_hi = analytic_drift(model, c_hi, n, y)?;
    if !(f_lo > 0.0 && f_hi < 0.0) {
        return Err(Error::NoSignChange {
            lo: c_lo,
            hi: c_hi,
            f_lo,
            f_hi,
        });
    }
    let (mut lo, mut hi) = (c_lo, c_hi);
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        if analytic_drift(model, mid, n, y)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub const ANALYTIC_HEADER: [&str; 6] = ["algorithm", "c", "n", "y", "drift", "r_max"];

/// One evaluated point of an analytic sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticPoint {
    pub model: AnalyticModel,
    pub params: AnalyticDriftParams,
    pub drift: f64,
}

pub fn write_analytic_csv(path: &Path, points: &[AnalyticPoint]) -> Result<()> {
    let rows = points.iter().map(|p| {
        vec![
            p.model.label().to_string(),
            fmt_f64(p.params.c),
            p.params.n.to_string(),
            p.params.y.to_string(),
            fmt_f64(p.drift),
            p.params.r_max.to_string(),
        ]
    });
    write_rows(path, &ANALYTIC_HEADER, rows)
}
