pub mod config;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use dynbv_core::drift::{
    drift_profile, drift_sign_threshold, write_analytic_csv, write_drift_csv, AnalyticDriftParams, AnalyticModel,
    AnalyticPoint, DriftProfile, DEFAULT_SAMPLE_CAP,
};
use dynbv_core::harness::{
    cell_id, emit_csv, fmt_f64, fmt_opt, onemax_reference_runtime, read_runs_csv, run_experiment, validate_onemax,
    with_workers, write_rows, RunRow,
};
use dynbv_core::rng::derive_seed;
use dynbv_core::stats::{
    max_significant_factor, Alternative, CensorMode, FactorOutcome, Method, RuntimeSample, COMPARISON_HEADER,
    DEFAULT_ALPHA,
};
use dynbv_core::{Error, RandomSource, Variant};

pub use config::{emit_config, parse_config, ConfigError, ExperimentConfig};

/// Label mixed into drift seeds so they never collide with runtime seeds.
const DRIFT_STREAM: u64 = 0x64_7269_6674;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_)
            | Error::MutationRate { .. }
            | Error::NoSignChange { .. }
            | Error::LengthMismatch { .. }
            | Error::EmptyBitstring => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "dynbv", version, about = "(μ+1) EA/GA experiments on dynamic binary value functions")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Experiment configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: machine parallelism).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory (default: the configuration's output_dir, else `.`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every grid cell and write runs, fixed-target and summary CSVs.
    Runtimes,
    /// Monte-Carlo drift of degenerate populations for every grid cell.
    DriftMc(DriftMcArgs),
    /// Near-optimum drift formulas over a grid of c and y.
    DriftAnalytic(AnalyticArgs),
    /// Mutation parameter where the analytic drift changes sign.
    Threshold(ThresholdArgs),
    /// Largest significant runtime factor between cells of runs CSVs.
    Compare(CompareArgs),
    /// (1+1)-EA on OneMax against e^c/c · n ln n.
    ValidateOnemax(OnemaxArgs),
}

#[derive(Debug, Args)]
pub struct DriftMcArgs {
    /// Zero counts: `1,10,100` or `start:stop:step`.
    #[arg(long, default_value = "1")]
    pub y: String,
    #[arg(long, default_value_t = 10_000)]
    pub samples: u64,
    /// Generation cap of a single sample.
    #[arg(long, default_value_t = DEFAULT_SAMPLE_CAP)]
    pub sample_cap: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Ea,
    Ga,
    Both,
}

impl ModelArg {
    fn models(self) -> Vec<AnalyticModel> {
        match self {
            ModelArg::Ea => vec![AnalyticModel::Ea],
            ModelArg::Ga => vec![AnalyticModel::Ga],
            ModelArg::Both => vec![AnalyticModel::Ea, AnalyticModel::Ga],
        }
    }
}

#[derive(Debug, Args)]
pub struct AnalyticArgs {
    #[arg(long, value_enum, default_value_t = ModelArg::Both)]
    pub model: ModelArg,
    #[arg(long, default_value_t = 3000)]
    pub n: usize,
    /// `1,2,3` or `start:stop:step`.
    #[arg(long, default_value = "1")]
    pub y: String,
    #[arg(long, default_value = "0.5:5:0.05")]
    pub c: String,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    #[arg(long, value_enum, default_value_t = ModelArg::Both)]
    pub model: ModelArg,
    #[arg(long, default_value_t = 3000)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub y: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lo: f64,
    #[arg(long, default_value_t = 5.0)]
    pub hi: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CensorArg {
    Cap,
    Exclude,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Runs CSV files (repeatable).
    #[arg(long = "runs", required = true, value_delimiter = ',')]
    pub runs: Vec<PathBuf>,
    /// Faster cell as `VARIANT:MU:C`, e.g. `GA:2:2.5` (repeatable, paired with --slow).
    #[arg(long, required = true)]
    pub fast: Vec<String>,
    #[arg(long, required = true)]
    pub slow: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Width of the bracket around d_max.
    #[arg(long, default_value_t = 1e-3)]
    pub tolerance: f64,
    /// How runs stopped at the cap enter the test.
    #[arg(long, value_enum, default_value_t = CensorArg::Cap)]
    pub censored: CensorArg,
}

#[derive(Debug, Args)]
pub struct OnemaxArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 200)]
    pub runs: usize,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
}

/// Runs a parsed command line; returns the files written.
pub fn run(cli: &Cli) -> CliResult<Vec<PathBuf>> {
    let g = &cli.global;
    if g.workers == Some(0) {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    let config = g.config.as_deref().map(load_config).transpose()?;
    let out = g
        .out
        .clone()
        .or_else(|| config.as_ref().and_then(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("."));
    let seed = g.seed.or(config.as_ref().map(|c| c.seed)).unwrap_or(0);
    let need_config = || {
        config
            .clone()
            .ok_or_else(|| CliError::Config("this subcommand needs --config".into()))
    };

    match &cli.command {
        Command::Runtimes => {
            let cfg = need_config()?;
            let mut exp = cfg.experiment();
            exp.seed = seed;
            let table = run_experiment(&exp, g.workers)?;
            prepare(&out)?;
            let paths = emit_csv(&table, &out, "")?;
            for cell in &table.cells {
                println!(
                    "{} c={}: mean {} ert {} success {}",
                    cell.config.label(),
                    cell.config.c,
                    fmt_opt(cell.summary.mean_successful),
                    fmt_f64(cell.summary.ert),
                    cell.summary.success_rate
                );
            }
            Ok(vec![paths.runs, paths.fixed_target, paths.summary])
        }
        Command::DriftMc(args) => {
            let cfg = need_config()?;
            let ys = parse_grid(&args.y, "--y")?
                .into_iter()
                .map(|v| as_count(v, "--y"))
                .collect::<CliResult<Vec<_>>>()?;
            let profiles = with_workers(g.workers, || {
                cfg.algorithms
                    .iter()
                    .map(|alg| {
                        let mut rng = RandomSource::from_seed(derive_seed(seed, &[DRIFT_STREAM, cell_id(alg)]));
                        let estimates = drift_profile(
                            alg,
                            &cfg.environment,
                            cfg.n,
                            &ys,
                            args.samples,
                            args.sample_cap,
                            &mut rng,
                        )?;
                        Ok(DriftProfile {
                            config: *alg,
                            n: cfg.n,
                            estimates,
                        })
                    })
                    .collect::<dynbv_core::Result<Vec<_>>>()
            })??;
            for p in &profiles {
                for e in &p.estimates {
                    println!(
                        "{} c={} y={}: {} ± {} ({} timeouts)",
                        p.config.label(),
                        p.config.c,
                        e.y,
                        fmt_f64(e.mean),
                        fmt_f64(e.std_err),
                        e.timeouts
                    );
                }
            }
            prepare(&out)?;
            let path = out.join("drift.csv");
            write_drift_csv(&path, &profiles)?;
            Ok(vec![path])
        }
        Command::DriftAnalytic(args) => {
            let ys = parse_grid(&args.y, "--y")?
                .into_iter()
                .map(|v| as_count(v, "--y"))
                .collect::<CliResult<Vec<_>>>()?;
            let cs = parse_grid(&args.c, "--c")?;
            let mut points = Vec::new();
            for model in args.model.models() {
                for &y in &ys {
                    for &c in &cs {
                        let params = AnalyticDriftParams::new(c, args.n, y)?;
                        points.push(AnalyticPoint {
                            model,
                            params,
                            drift: model.drift(&params)?,
                        });
                    }
                }
            }
            prepare(&out)?;
            let path = out.join("analytic.csv");
            write_analytic_csv(&path, &points)?;
            println!("{} points", points.len());
            Ok(vec![path])
        }
        Command::Threshold(args) => {
            let mut rows = Vec::new();
            for model in args.model.models() {
                let c = drift_sign_threshold(model, args.n, args.y, args.lo, args.hi, args.tolerance)?;
                println!("{model}: drift changes sign at c = {c:.6}");
                rows.push(vec![
                    model.label().to_string(),
                    args.n.to_string(),
                    args.y.to_string(),
                    fmt_f64(c),
                ]);
            }
            prepare(&out)?;
            let path = out.join("threshold.csv");
            write_rows(&path, &["algorithm", "n", "y", "c_threshold"], rows)?;
            Ok(vec![path])
        }
        Command::Compare(args) => compare(args, &out),
        Command::ValidateOnemax(args) => {
            let summary = validate_onemax(args.n, args.runs, args.c, seed, g.workers)?;
            let reference = onemax_reference_runtime(args.c, args.n);
            let ratio = summary.mean_successful.map(|m| m / reference);
            println!(
                "(1+1)-EA OneMax n={} c={}: mean {} reference {} ratio {} success {}",
                args.n,
                args.c,
                fmt_opt(summary.mean_successful),
                fmt_f64(reference),
                fmt_opt(ratio),
                summary.success_rate
            );
            prepare(&out)?;
            let path = out.join("onemax_validation.csv");
            write_rows(
                &path,
                &["n", "c", "runs", "mean_successful", "ert", "success_rate", "reference", "ratio"],
                [vec![
                    args.n.to_string(),
                    fmt_f64(args.c),
                    args.runs.to_string(),
                    fmt_opt(summary.mean_successful),
                    fmt_f64(summary.ert),
                    fmt_f64(summary.success_rate),
                    fmt_f64(reference),
                    fmt_opt(ratio),
                ]],
            )?;
            Ok(vec![path])
        }
    }
}

fn compare(args: &CompareArgs, out: &Path) -> CliResult<Vec<PathBuf>> {
    if args.fast.len() != args.slow.len() {
        return Err(CliError::Config(format!(
            "{} --fast cells but {} --slow cells",
            args.fast.len(),
            args.slow.len()
        )));
    }
    let mut rows: Vec<RunRow> = Vec::new();
    for path in &args.runs {
        rows.extend(read_runs_csv(path)?);
    }
    let censoring = match args.censored {
        CensorArg::Cap => CensorMode::AtCap,
        CensorArg::Exclude => CensorMode::Exclude,
    };
    let mut out_rows = Vec::new();
    for (fast, slow) in args.fast.iter().zip(&args.slow) {
        let fast_cell = CellKey::parse(fast)?;
        let slow_cell = CellKey::parse(slow)?;
        let fast_sample = fast_cell.sample(&rows)?;
        let slow_sample = slow_cell.sample(&rows)?;
        let outcome =
            max_significant_factor(&fast_sample, &slow_sample, args.alpha, args.tolerance, censoring, Method::Auto)?;
        let d = match outcome {
            FactorOutcome::Significant(r) => {
                println!(
                    "{} faster than {} for d <= {} (p = {}, not at d = {})",
                    fast_cell,
                    slow_cell,
                    fmt_f64(r.d_max),
                    fmt_f64(r.p_at_d_max),
                    fmt_f64(r.d_upper)
                );
                fmt_f64(r.d_max)
            }
            FactorOutcome::NotSignificant { p_at_one, .. } => {
                println!("{fast_cell} not significantly faster than {slow_cell} (p = {})", fmt_f64(p_at_one));
                "NA".to_string()
            }
        };
        out_rows.push(vec![
            fast_cell.to_string(),
            slow_cell.to_string(),
            Alternative::Less.to_string(),
            fmt_f64(args.alpha),
            d,
            fmt_f64(outcome.p_value()),
        ]);
    }
    prepare(out)?;
    let path = out.join("comparison.csv");
    write_rows(&path, &COMPARISON_HEADER, out_rows)?;
    Ok(vec![path])
}

/// A cell of a runs CSV named as `VARIANT:MU:C`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct CellKey {
    variant: Variant,
    mu: usize,
    c: f64,
}

impl CellKey {
    fn parse(s: &str) -> CliResult<Self> {
        let bad = || CliError::Config(format!("cell {s:?} is not of the form VARIANT:MU:C"));
        let mut parts = s.split(':');
        let (Some(v), Some(mu), Some(c), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(bad());
        };
        Ok(Self {
            variant: v.parse()?,
            mu: mu.parse().map_err(|_| bad())?,
            c: c.parse().map_err(|_| bad())?,
        })
    }

    fn sample(&self, rows: &[RunRow]) -> CliResult<RuntimeSample> {
        let matching: Vec<&RunRow> = rows
            .iter()
            .filter(|r| r.variant == self.variant && r.mu == self.mu && r.c == self.c)
            .collect();
        let Some(first) = matching.first() else {
            return Err(CliError::Config(format!("no runs for cell {self}")));
        };
        if matching.iter().any(|r| r.n != first.n || r.environment != first.environment) {
            return Err(CliError::Config(format!(
                "cell {self} appears with several n or environments"
            )));
        }
        Ok(RuntimeSample::from_runs(matching.iter().map(|r| (r.generations, r.success))))
    }
}

impl std::fmt::Display for CellKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}+1)-{} c={}", self.mu, self.variant, self.c)
    }
}

pub fn load_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn prepare(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

/// `a,b,c` or `start:stop:step` (inclusive).
pub fn parse_grid(s: &str, flag: &str) -> CliResult<Vec<f64>> {
    let bad = |why: &str| CliError::Config(format!("{flag} {s:?}: {why}"));
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad("not a number"));
    let values = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [start, stop, step] = parts[..] else {
            return Err(bad("expected start:stop:step"));
        };
        let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
        if !(step > 0.0) || !(stop >= start) {
            return Err(bad("need step > 0 and stop >= start"));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        if count > 1_000_000 {
            return Err(bad("too many points"));
        }
        // rounding keeps 0.1-style steps printable
        (0..count)
            .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
            .collect()
    } else {
        s.split(',').map(num).collect::<CliResult<Vec<_>>>()?
    };
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(bad("empty or non-finite"));
    }
    Ok(values)
}

fn as_count(v: f64, flag: &str) -> CliResult<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v < 1e15 {
        Ok(v as usize)
    } else {
        Err(CliError::Config(format!("{flag}: {v} is not a positive integer")))
    }
}
