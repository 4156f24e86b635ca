//! Experiment configuration files.
//!
//! ```toml
//! [environment]
//! kind = "DynBV"            # DynBV | DynamicLinear | OneMax
//! change_period = 1
//! # weight_distribution = "Pareto", shape = 1.5   (DynamicLinear)
//! # weight_distribution = "Fixed",  weights = [..] (DynamicLinear)
//!
//! [grid]
//! cells = [
//!     { variant = "EA", mu = 2, c = 2.0 },
//!     { variant = "GA", mu = 2, c = 2.5, crossover_probability = 0.5 },
//! ]
//!
//! [run]
//! n = 3000
//! runs = 30
//! seed = 1
//! cap_multiplier = 100
//! output_dir = "out"
//! ```

use std::fmt;
use std::ops::Range;
use std::path::PathBuf;

use dynbv_core::evolve::DEFAULT_CROSSOVER_PROBABILITY;
use dynbv_core::harness::{Experiment, DEFAULT_CAP_MULTIPLIER, DEFAULT_RUNS};
use dynbv_core::{AlgorithmConfig, EnvironmentKind, EnvironmentSpec, Variant, WeightDistribution};
use serde::{Deserialize, Serialize};
use toml::Spanned;

/// A configuration problem, anchored to a line of the source when possible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(text: &str, span: Range<usize>, message: impl Into<String>) -> Self {
        Self {
            line: Some(line_of(text, span.start)),
            message: message.into(),
        }
    }

    fn unanchored(message: impl Into<String>) -> Self {
        Self {
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub environment: EnvironmentSpec,
    pub algorithms: Vec<AlgorithmConfig>,
    pub n: usize,
    pub runs: usize,
    pub seed: u64,
    pub cap_multiplier: f64,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn experiment(&self) -> Experiment {
        Experiment {
            environment: self.environment.clone(),
            algorithms: self.algorithms.clone(),
            n: self.n,
            runs: self.runs,
            seed: self.seed,
            cap_multiplier: self.cap_multiplier,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    environment: Option<Spanned<RawEnvironment>>,
    grid: Option<RawGrid>,
    run: Option<Spanned<RawRun>>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawEnvironment {
    #[serde(skip_serializing_if = "Option::is_none")]
    kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weight_distribution: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    shape: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    change_period: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    cells: Spanned<Vec<Spanned<RawCell>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCell {
    variant: Spanned<String>,
    mu: usize,
    c: f64,
    crossover_probability: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    n: Option<usize>,
    runs: Option<usize>,
    seed: Option<u64>,
    cap_multiplier: Option<f64>,
    output_dir: Option<PathBuf>,
}

/// Parses and validates a configuration document, filling in defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| match e.span() {
        Some(span) => ConfigError::at(text, span, e.message().to_string()),
        None => ConfigError::unanchored(e.message().to_string()),
    })?;

    let environment = match &raw.environment {
        Some(env) => parse_environment(env.get_ref())
            .map_err(|msg| ConfigError::at(text, env.span(), format!("[environment]: {msg}")))?,
        None => EnvironmentSpec::dyn_binval(),
    };

    let Some(run) = &raw.run else {
        return Err(ConfigError::unanchored("missing [run] section with required key `n`"));
    };
    let run_span = run.span();
    let run = run.get_ref();
    let Some(n) = run.n else {
        return Err(ConfigError::at(text, run_span, "[run]: missing required key `n`"));
    };
    if n < 2 {
        return Err(ConfigError::at(text, run_span, format!("[run]: n must be at least 2, got {n}")));
    }
    let runs = run.runs.unwrap_or(DEFAULT_RUNS);
    if runs == 0 {
        return Err(ConfigError::at(text, run_span, "[run]: runs must be at least 1"));
    }
    let cap_multiplier = run.cap_multiplier.unwrap_or(DEFAULT_CAP_MULTIPLIER);
    if !(cap_multiplier > 0.0 && cap_multiplier.is_finite()) {
        return Err(ConfigError::at(
            text,
            run_span,
            format!("[run]: cap_multiplier must be positive, got {cap_multiplier}"),
        ));
    }
    environment
        .validate(Some(n))
        .map_err(|e| ConfigError::unanchored(format!("[environment]: {e}")))?;

    let Some(grid) = &raw.grid else {
        return Err(ConfigError::unanchored("missing [grid] section with at least one cell"));
    };
    if grid.cells.get_ref().is_empty() {
        return Err(ConfigError::at(text, grid.cells.span(), "[grid]: no cells"));
    }
    let mut algorithms: Vec<AlgorithmConfig> = Vec::new();
    for cell in grid.cells.get_ref() {
        let span = cell.span();
        let raw_cell = cell.get_ref();
        let variant: Variant = raw_cell
            .variant
            .get_ref()
            .parse()
            .map_err(|e| ConfigError::at(text, raw_cell.variant.span(), format!("{e}")))?;
        let mut config = AlgorithmConfig {
            mu: raw_cell.mu,
            c: raw_cell.c,
            variant,
            crossover_probability: raw_cell
                .crossover_probability
                .unwrap_or(DEFAULT_CROSSOVER_PROBABILITY),
        };
        config
            .validate()
            .map_err(|e| ConfigError::at(text, span.clone(), format!("cell {}: {e}", config.label())))?;
        if variant == Variant::Ea {
            config.crossover_probability = DEFAULT_CROSSOVER_PROBABILITY;
        }
        if let Some(prev) = algorithms
            .iter()
            .find(|a| a.variant == config.variant && a.mu == config.mu && a.c == config.c)
        {
            return Err(ConfigError::at(
                text,
                span,
                format!("duplicate cell {} c={}", prev.label(), prev.c),
            ));
        }
        algorithms.push(config);
    }

    Ok(ExperimentConfig {
        environment,
        algorithms,
        n,
        runs,
        seed: run.seed.unwrap_or(0),
        cap_multiplier,
        output_dir: run.output_dir.clone(),
    })
}

fn parse_environment(raw: &RawEnvironment) -> Result<EnvironmentSpec, String> {
    let kind = raw.kind.as_deref().unwrap_or("DynBV");
    let kind = match kind.to_ascii_lowercase().as_str() {
        "dynbv" | "dynbinval" => EnvironmentKind::DynBinVal,
        "onemax" => EnvironmentKind::OneMax,
        "dynamiclinear" => {
            let dist = raw.weight_distribution.as_deref().unwrap_or("Pareto");
            match dist.to_ascii_lowercase().as_str() {
                "pareto" => {
                    let shape = raw
                        .shape
                        .ok_or("DynamicLinear with Pareto weights needs `shape`")?;
                    EnvironmentKind::DynamicLinear(WeightDistribution::Pareto { shape })
                }
                "fixed" => {
                    let weights = raw
                        .weights
                        .clone()
                        .ok_or("DynamicLinear with Fixed weights needs `weights`")?;
                    EnvironmentKind::DynamicLinear(WeightDistribution::Fixed(weights))
                }
                other => return Err(format!("unknown weight_distribution {other:?} (expected Pareto or Fixed)")),
            }
        }
        other => {
            return Err(format!(
                "unknown kind {other:?} (expected DynBV, DynamicLinear or OneMax)"
            ))
        }
    };
    let dynamic_linear = matches!(kind, EnvironmentKind::DynamicLinear(_));
    if !dynamic_linear && (raw.weight_distribution.is_some() || raw.shape.is_some() || raw.weights.is_some()) {
        return Err("weight settings are only valid for kind = \"DynamicLinear\"".to_string());
    }
    let spec = EnvironmentSpec {
        kind,
        change_period: raw.change_period.unwrap_or(1),
    };
    spec.validate(None).map_err(|e| e.to_string())?;
    Ok(spec)
}

#[derive(Serialize)]
struct EmitConfig {
    environment: RawEnvironment,
    grid: EmitGrid,
    run: EmitRun,
}

#[derive(Serialize)]
struct EmitGrid {
    cells: Vec<EmitCell>,
}

#[derive(Serialize)]
struct EmitCell {
    variant: String,
    mu: usize,
    c: f64,
    crossover_probability: f64,
}

#[derive(Serialize)]
struct EmitRun {
    n: usize,
    runs: usize,
    seed: u64,
    cap_multiplier: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    output_dir: Option<PathBuf>,
}

/// Renders a configuration that [`parse_config`] reads back unchanged.
pub fn emit_config(config: &ExperimentConfig) -> String {
    let mut environment = RawEnvironment {
        change_period: Some(config.environment.change_period),
        ..RawEnvironment::default()
    };
    match &config.environment.kind {
        EnvironmentKind::DynBinVal => environment.kind = Some("DynBV".into()),
        EnvironmentKind::OneMax => environment.kind = Some("OneMax".into()),
        EnvironmentKind::DynamicLinear(dist) => {
            environment.kind = Some("DynamicLinear".into());
            match dist {
                WeightDistribution::Pareto { shape } => {
                    environment.weight_distribution = Some("Pareto".into());
                    environment.shape = Some(*shape);
                }
                WeightDistribution::Fixed(w) => {
                    environment.weight_distribution = Some("Fixed".into());
                    environment.weights = Some(w.clone());
                }
            }
        }
    }
    let emit = EmitConfig {
        environment,
        grid: EmitGrid {
            cells: config
                .algorithms
                .iter()
                .map(|a| EmitCell {
                    variant: a.variant.to_string(),
                    mu: a.mu,
                    c: a.c,
                    crossover_probability: a.crossover_probability,
                })
                .collect(),
        },
        run: EmitRun {
            n: config.n,
            runs: config.runs,
            seed: config.seed,
            cap_multiplier: config.cap_multiplier,
            output_dir: config.output_dir.clone(),
        },
    };
    toml::to_string(&emit).expect("configuration serializes")
}
