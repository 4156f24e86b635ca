//! Experiment orchestration: generation caps, seeded batches of runs, runtime
//! aggregation and CSV output.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::environments::EnvironmentSpec;
use crate::error::{invalid, Error, Result};
use crate::evolve::{Algorithm, AlgorithmConfig, RunRecord, Variant};
use crate::rng::{derive_seed, RandomSource};

pub const DEFAULT_RUNS: usize = 30;
pub const DEFAULT_CAP_MULTIPLIER: f64 = 100.0;

/// `floor(multiplier * e^c / c * n * ln n)`.
pub fn generation_limit(c: f64, n: usize, multiplier: f64) -> Result<u64> {
    if !(c > 0.0) {
        return Err(invalid(format!("c must be positive, got {c}")));
    }
    if n < 2 {
        return Err(invalid("n must be at least 2"));
    }
    if !(multiplier > 0.0) {
        return Err(invalid(format!("cap multiplier must be positive, got {multiplier}")));
    }
    let cap = cap_value(c, n as f64, multiplier);
    // u64::MAX as f64 rounds up to 2^64
    if !cap.is_finite() || cap >= u64::MAX as f64 {
        return Err(Error::Overflow(format!(
            "cap for c = {c}, n = {n}, multiplier = {multiplier} is {cap:e}"
        )));
    }
    Ok((cap as u64).max(1))
}

fn cap_value(c: f64, n: f64, multiplier: f64) -> f64 {
    (multiplier * c.exp() / c * n * n.ln()).floor()
}

/// Aggregate runtime statistics of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuntimeSummary {
    /// Mean generations over successful runs; `None` without successes.
    pub mean_successful: Option<f64>,
    /// Total generations over all runs divided by the number of successes;
    /// infinite without successes.
    pub ert: f64,
    pub success_rate: f64,
    pub run_count: usize,
}

pub fn summarize(runs: &[RunRecord]) -> Result<RuntimeSummary> {
    if runs.is_empty() {
        return Err(invalid("cannot summarize zero runs"));
    }
    let mut total: u128 = 0;
    let mut success_total: u128 = 0;
    let mut successes = 0usize;
    for r in runs {
        total += r.generations as u128;
        if r.success {
            successes += 1;
            success_total += r.generations as u128;
        }
    }
    let (mean_successful, ert) = if successes == 0 {
        (None, f64::INFINITY)
    } else {
        (
            Some(success_total as f64 / successes as f64),
            total as f64 / successes as f64,
        )
    };
    Ok(RuntimeSummary {
        mean_successful,
        ert,
        success_rate: successes as f64 / runs.len() as f64,
        run_count: runs.len(),
    })
}

/// A batch of runs over a grid of algorithm cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub environment: EnvironmentSpec,
    pub algorithms: Vec<AlgorithmConfig>,
    pub n: usize,
    pub runs: usize,
    pub seed: u64,
    pub cap_multiplier: f64,
}

impl Experiment {
    pub fn new(environment: EnvironmentSpec, algorithms: Vec<AlgorithmConfig>, n: usize) -> Self {
        Self {
            environment,
            algorithms,
            n,
            runs: DEFAULT_RUNS,
            seed: 0,
            cap_multiplier: DEFAULT_CAP_MULTIPLIER,
        }
    }
}

/// Seed-derivation label of a cell; independent of its position in the grid.
pub fn cell_id(config: &AlgorithmConfig) -> u64 {
    derive_seed(
        config.variant.code(),
        &[
            config.mu as u64,
            config.c.to_bits(),
            config.crossover_probability.to_bits(),
        ],
    )
}

/// Seed of run `run_index` of `config` under `master`.
pub fn run_seed(master: u64, config: &AlgorithmConfig, run_index: usize) -> u64 {
    derive_seed(master, &[cell_id(config), run_index as u64])
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub config: AlgorithmConfig,
    pub cap: u64,
    pub runs: Vec<RunRecord>,
    pub summary: RuntimeSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentTable {
    pub environment: EnvironmentSpec,
    pub n: usize,
    pub cells: Vec<CellResult>,
}

/// Runs `f` on a pool of `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(invalid("worker count must be at least 1")),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| invalid(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Executes every (cell, run) pair. Results depend only on the experiment,
/// never on `workers` or scheduling.
pub fn run_experiment(exp: &Experiment, workers: Option<usize>) -> Result<ExperimentTable> {
    if exp.runs == 0 {
        return Err(invalid("runs per cell must be at least 1"));
    }
    if exp.algorithms.is_empty() {
        return Err(invalid("experiment has no algorithm cells"));
    }
    exp.environment.validate(Some(exp.n))?;
    let prepared = exp
        .algorithms
        .iter()
        .map(|config| {
            let cap = generation_limit(config.c, exp.n, exp.cap_multiplier)?;
            Ok((Algorithm::new(*config, exp.n)?, cap))
        })
        .collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, usize)> = (0..prepared.len())
        .flat_map(|cell| (0..exp.runs).map(move |run| (cell, run)))
        .collect();
    let records = with_workers(workers, || {
        jobs.par_iter()
            .map(|&(cell, run)| {
                let (alg, cap) = &prepared[cell];
                let mut rng = RandomSource::from_seed(run_seed(exp.seed, alg.config(), run));
                alg.run(&exp.environment, *cap, &mut rng)
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let mut records = records.into_iter();
    let cells = prepared
        .iter()
        .map(|(alg, cap)| {
            let runs: Vec<RunRecord> = records.by_ref().take(exp.runs).collect();
            Ok(CellResult {
                config: *alg.config(),
                cap: *cap,
                summary: summarize(&runs)?,
                runs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentTable {
        environment: exp.environment.clone(),
        n: exp.n,
        cells,
    })
}

/// (1+1)-EA on static OneMax with the default cap.
pub fn validate_onemax(
    n: usize,
    runs: usize,
    c: f64,
    seed: u64,
    workers: Option<usize>,
) -> Result<RuntimeSummary> {
    if n < 100 {
        return Err(invalid("OneMax validation needs n >= 100"));
    }
    let mut exp = Experiment::new(EnvironmentSpec::onemax(), vec![AlgorithmConfig::ea(1, c)?], n);
    exp.runs = runs;
    exp.seed = seed;
    let table = run_experiment(&exp, workers)?;
    Ok(table.cells[0].summary)
}

/// Leading-order expected runtime of the (1+1)-EA with rate c/n on OneMax.
pub fn onemax_reference_runtime(c: f64, n: usize) -> f64 {
    let n = n as f64;
    c.exp() / c * n * n.ln()
}

/// Formats an optional float as `NA` when absent.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), fmt_f64)
}

/// Shortest round-trip decimal; infinities as `inf`.
pub fn fmt_f64(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{v}")
    }
}

pub fn parse_f64(s: &str) -> Result<f64> {
    match s {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s
            .parse()
            .map_err(|_| invalid(format!("not a number: {s:?}"))),
    }
}

pub fn parse_opt_f64(s: &str) -> Result<Option<f64>> {
    if s == "NA" {
        Ok(None)
    } else {
        parse_f64(s).map(Some)
    }
}

pub const RUNS_HEADER: [&str; 9] = [
    "algorithm", "mu", "c", "n", "environment", "seed", "run_index", "generations", "success",
];
pub const FIXED_TARGET_HEADER: [&str; 7] = [
    "algorithm", "mu", "c", "n", "run_index", "ones_level", "first_hit_generation",
];
pub const SUMMARY_HEADER: [&str; 9] = [
    "algorithm", "mu", "c", "n", "mean_successful", "ert", "success_rate", "run_count", "cap",
];

/// Paths written by [`emit_csv`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvPaths {
    pub runs: PathBuf,
    pub fixed_target: PathBuf,
    pub summary: PathBuf,
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(csv::Writer::from_writer(file))
}

fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes `<prefix>runs.csv`, `<prefix>fixed_target.csv` and
/// `<prefix>summary.csv` into `dir`.
pub fn emit_csv(table: &ExperimentTable, dir: &Path, prefix: &str) -> Result<CsvPaths> {
    if table.cells.is_empty() {
        return Err(invalid("nothing to write: table is empty"));
    }
    let paths = CsvPaths {
        runs: dir.join(format!("{prefix}runs.csv")),
        fixed_target: dir.join(format!("{prefix}fixed_target.csv")),
        summary: dir.join(format!("{prefix}summary.csv")),
    };
    let n = table.n.to_string();
    let env = table.environment.to_string();

    let mut runs = create(&paths.runs)?;
    let mut fixed = create(&paths.fixed_target)?;
    let mut summary = create(&paths.summary)?;
    runs.write_record(RUNS_HEADER)?;
    fixed.write_record(FIXED_TARGET_HEADER)?;
    summary.write_record(SUMMARY_HEADER)?;
    for cell in &table.cells {
        let alg = cell.config.variant.to_string();
        let mu = cell.config.mu.to_string();
        let c = fmt_f64(cell.config.c);
        for (i, r) in cell.runs.iter().enumerate() {
            let idx = i.to_string();
            runs.write_record([
                alg.as_str(),
                &mu,
                &c,
                &n,
                &env,
                &r.seed.to_string(),
                &idx,
                &r.generations.to_string(),
                if r.success { "true" } else { "false" },
            ])?;
            for (level, gen) in &r.first_hit {
                fixed.write_record([
                    alg.as_str(),
                    &mu,
                    &c,
                    &n,
                    &idx,
                    &level.to_string(),
                    &gen.to_string(),
                ])?;
            }
        }
        let s = &cell.summary;
        summary.write_record([
            alg.as_str(),
            &mu,
            &c,
            &n,
            &fmt_opt(s.mean_successful),
            &fmt_f64(s.ert),
            &fmt_f64(s.success_rate),
            &s.run_count.to_string(),
            &cell.cap.to_string(),
        ])?;
    }
    finish(runs, &paths.runs)?;
    finish(fixed, &paths.fixed_target)?;
    finish(summary, &paths.summary)?;
    Ok(paths)
}

/// One row of a runs CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub variant: Variant,
    pub mu: usize,
    pub c: f64,
    pub n: usize,
    pub environment: String,
    pub seed: u64,
    pub run_index: usize,
    pub generations: u64,
    pub success: bool,
}

fn open(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(csv::Reader::from_reader(file))
}

fn field<'a>(rec: &'a csv::StringRecord, i: usize, path: &Path) -> Result<&'a str> {
    rec.get(i).ok_or_else(|| {
        invalid(format!(
            "{}: line {}: missing column {}",
            path.display(),
            rec.position().map_or(0, |p| p.line()),
            i + 1
        ))
    })
}

fn check_header(reader: &mut csv::Reader<File>, expected: &[&str], path: &Path) -> Result<()> {
    let header = reader.headers()?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(invalid(format!(
            "{}: unexpected header {:?}, expected {:?}",
            path.display(),
            header.iter().collect::<Vec<_>>(),
            expected
        )));
    }
    Ok(())
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str, path: &Path) -> Result<T> {
    s.parse()
        .map_err(|_| invalid(format!("{}: bad {what} {s:?}", path.display())))
}

pub fn read_runs_csv(path: &Path) -> Result<Vec<RunRow>> {
    let mut reader = open(path)?;
    check_header(&mut reader, &RUNS_HEADER, path)?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let f = |i| field(&rec, i, path);
        rows.push(RunRow {
            variant: f(0)?.parse()?,
            mu: parse_num(f(1)?, "mu", path)?,
            c: parse_f64(f(2)?)?,
            n: parse_num(f(3)?, "n", path)?,
            environment: f(4)?.to_string(),
            seed: parse_num(f(5)?, "seed", path)?,
            run_index: parse_num(f(6)?, "run_index", path)?,
            generations: parse_num(f(7)?, "generations", path)?,
            success: parse_num(f(8)?, "success", path)?,
        });
    }
    Ok(rows)
}

/// One row of a summary CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub variant: Variant,
    pub mu: usize,
    pub c: f64,
    pub n: usize,
    pub summary: RuntimeSummary,
    pub cap: u64,
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut reader = open(path)?;
    check_header(&mut reader, &SUMMARY_HEADER, path)?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let f = |i| field(&rec, i, path);
        rows.push(SummaryRow {
            variant: f(0)?.parse()?,
            mu: parse_num(f(1)?, "mu", path)?,
            c: parse_f64(f(2)?)?,
            n: parse_num(f(3)?, "n", path)?,
            summary: RuntimeSummary {
                mean_successful: parse_opt_f64(f(4)?)?,
                ert: parse_f64(f(5)?)?,
                success_rate: parse_f64(f(6)?)?,
                run_count: parse_num(f(7)?, "run_count", path)?,
            },
            cap: parse_num(f(8)?, "cap", path)?,
        });
    }
    Ok(rows)
}

/// Writes a header and rows to `path`.
pub fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = create(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    finish(w, path)
}

/// Writes `text` to `path`, mapping errors to [`Error::Io`].
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    f.write_all(text.as_bytes()).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}
