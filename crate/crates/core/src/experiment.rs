//! Monte Carlo coverage experiments: configuration, replicate execution,
//! aggregation and CSV emission.
//!
//! One replicate simulates a fine path with `2^l` steps on its own noise
//! stream, estimates the reference `theta_hat` on the full grid, and then
//! for every requested subsample level `k` recomputes the estimate, the
//! covariance discretization and the log-likelihood Hessian on the
//! subsample, forming the normalized statistic. Aggregation counts how often
//! the statistic falls below the chi-square quantile.
//!
//! Replicates are independent work items; noise streams are keyed by the
//! replicate index, and aggregation is a fold over a replicate-ordered
//! vector, so results do not depend on the parallel schedule.

use std::collections::HashMap;
use std::path::PathBuf;

use rayon::prelude::*;

use crate::asymptotics::{mixed_normal_statistic, sigma_n};
use crate::error::{Error, Result};
use crate::estimator::{amle_linear_with, mle_proxy};
use crate::heston::{heston_model, HestonParams};
use crate::likelihood::LikelihoodContext;
use crate::model::ModelSpec;
use crate::numerics::{chi2_quantile, NoiseSource, DEFAULT_RANK_TOL};
use crate::ou::{ou_model, OuParams};
use crate::simulate::{euler_simulate, subsample, TimeGrid};

/// Degrees of freedom used for the chi-square threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DfMode {
    /// Per-replicate numerical rank of `sigma_n`.
    AutoRank,
    /// Fixed value, e.g. the structural rank 2 of the Heston covariance.
    Fixed(usize),
}

/// Model selection plus its parameters; the name registry for the CLI.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelConfig {
    Heston(HestonParams),
    Ou(OuParams),
}

impl ModelConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ModelConfig::Heston(_) => "heston",
            ModelConfig::Ou(_) => "ou",
        }
    }

    pub fn build(&self) -> Result<ModelSpec> {
        match self {
            ModelConfig::Heston(p) => heston_model(p),
            ModelConfig::Ou(p) => ou_model(p),
        }
    }

    pub fn true_theta(&self) -> Vec<f64> {
        match self {
            ModelConfig::Heston(p) => p.theta(),
            ModelConfig::Ou(p) => p.theta(),
        }
    }

    pub fn initial_state(&self) -> Vec<f64> {
        match self {
            ModelConfig::Heston(p) => p.initial_state(),
            ModelConfig::Ou(p) => p.initial_state(),
        }
    }

    pub fn horizon(&self) -> f64 {
        match self {
            ModelConfig::Heston(p) => p.horizon,
            ModelConfig::Ou(p) => p.horizon,
        }
    }

    pub fn param_names(&self) -> Vec<&'static str> {
        match self {
            ModelConfig::Heston(_) => vec!["a", "b", "alpha", "beta"],
            ModelConfig::Ou(_) => vec!["theta1", "theta2"],
        }
    }
}

/// Full description of a coverage experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    /// Fine-grid exponent l; the reference path has 2^l steps.
    pub fine_exponent: u32,
    /// Subsample exponents k, each with 1 <= k <= l.
    pub subsample_levels: Vec<u32>,
    pub p_tail: f64,
    /// Replicate count M.
    pub replicates: usize,
    pub master_seed: u64,
    pub df_mode: DfMode,
    pub rank_tol: f64,
    /// Emit the degenerate k = l sanity row (statistic identically zero).
    pub include_fine_row: bool,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(model: ModelConfig, fine_exponent: u32, subsample_levels: Vec<u32>) -> Self {
        ExperimentConfig {
            model,
            fine_exponent,
            subsample_levels,
            p_tail: 0.05,
            replicates: 100,
            master_seed: 0,
            df_mode: DfMode::AutoRank,
            rank_tol: DEFAULT_RANK_TOL,
            include_fine_row: false,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fine_exponent == 0 || self.fine_exponent > 30 {
            return Err(Error::RejectedInput(format!(
                "fine exponent l must lie in 1..=30, got {}",
                self.fine_exponent
            )));
        }
        if self.subsample_levels.is_empty() {
            return Err(Error::RejectedInput("k_list must not be empty".into()));
        }
        for &k in &self.subsample_levels {
            if k == 0 || k > self.fine_exponent {
                return Err(Error::RejectedInput(format!(
                    "subsample level {k} outside 1..=l={}",
                    self.fine_exponent
                )));
            }
        }
        if !(self.p_tail > 0.0 && self.p_tail < 1.0) {
            return Err(Error::RejectedInput(format!(
                "p_tail must lie in (0,1), got {}",
                self.p_tail
            )));
        }
        if self.replicates == 0 {
            return Err(Error::RejectedInput("replicate count M must be at least 1".into()));
        }
        if let DfMode::Fixed(0) = self.df_mode {
            return Err(Error::RejectedInput("fixed df must be positive".into()));
        }
        if !(self.rank_tol > 0.0 && self.rank_tol < 1.0) {
            return Err(Error::RejectedInput(format!("rank_tol out of range: {}", self.rank_tol)));
        }
        Ok(())
    }

    /// Subsample levels actually processed, with the degenerate fine row
    /// appended when requested.
    fn effective_levels(&self) -> Vec<u32> {
        let mut levels = self.subsample_levels.clone();
        if self.include_fine_row && !levels.contains(&self.fine_exponent) {
            levels.push(self.fine_exponent);
        }
        levels
    }
}

/// Per-subsample-level outcome of one replicate.
#[derive(Debug, Clone)]
pub struct KOutcome {
    pub level: u32,
    pub statistic: f64,
    /// Numerical rank of the covariance discretization.
    pub rank: usize,
    pub theta_bar: Vec<f64>,
}

/// One replicate: the fine-grid reference and each subsample outcome.
/// Per-level failures carry the failure reason instead of aborting the
/// whole replicate.
#[derive(Debug, Clone)]
pub struct ReplicateRun {
    pub theta_hat: Vec<f64>,
    pub outcomes: Vec<std::result::Result<KOutcome, String>>,
}

/// Executes one replicate on the noise stream `(master_seed, replicate)`.
#[allow(clippy::too_many_arguments)]
pub fn run_replicate(
    model: &ModelSpec,
    theta0: &[f64],
    x0: &[f64],
    horizon: f64,
    fine_exponent: u32,
    levels: &[u32],
    noise: &NoiseSource,
    rank_tol: f64,
) -> std::result::Result<ReplicateRun, String> {
    if !model.is_affine() {
        return Err("coverage experiments require a drift affine in theta".into());
    }
    let grid = TimeGrid::new(horizon, 1usize << fine_exponent).map_err(|e| e.to_string())?;
    let fine_path =
        euler_simulate(model, theta0, x0, grid, noise).map_err(|e| e.to_string())?;
    let reference = mle_proxy(model, &fine_path, None).map_err(|e| e.to_string())?;
    let theta_hat = reference.theta;

    let outcomes = levels
        .iter()
        .map(|&k| -> std::result::Result<KOutcome, String> {
            let sub = subsample(&fine_path, k).map_err(|e| e.to_string())?;
            let ctx = LikelihoodContext::new(model, &sub).map_err(|e| e.to_string())?;
            let estimate = amle_linear_with(&ctx).map_err(|e| e.to_string())?;
            let theta_bar = estimate.theta;
            let sigma = sigma_n(model, &sub, &theta_bar).map_err(|e| e.to_string())?;
            let hessian = ctx.hessian(&theta_bar).map_err(|e| e.to_string())?;
            let report = mixed_normal_statistic(
                &sigma,
                &hessian,
                &theta_bar,
                &theta_hat,
                sub.grid().dt(),
                rank_tol,
            )
            .map_err(|e| e.to_string())?;
            Ok(KOutcome { level: k, statistic: report.statistic, rank: report.rank, theta_bar })
        })
        .collect();

    Ok(ReplicateRun { theta_hat, outcomes })
}

/// Runs all replicates of the configured experiment in parallel, collecting
/// results in replicate order. Used by the coverage table and directly by
/// distribution-level tests.
pub fn replicate_runs(
    config: &ExperimentConfig,
) -> Result<Vec<std::result::Result<ReplicateRun, String>>> {
    config.validate()?;
    let model = config.model.build()?;
    let theta0 = config.model.true_theta();
    let x0 = config.model.initial_state();
    let horizon = config.model.horizon();
    let levels = config.effective_levels();

    Ok((0..config.replicates)
        .into_par_iter()
        .map(|m| {
            run_replicate(
                &model,
                &theta0,
                &x0,
                horizon,
                config.fine_exponent,
                &levels,
                &NoiseSource::new(config.master_seed, m as u64),
                config.rank_tol,
            )
        })
        .collect())
}

/// One row of the emitted table.
#[derive(Debug, Clone)]
pub struct CoverageRow {
    pub level: u32,
    pub n: usize,
    pub coverage: f64,
    pub used: usize,
    pub failures: usize,
}

/// Coverage fractions per subsample level, plus any data-quality warnings.
#[derive(Debug, Clone)]
pub struct CoverageTable {
    pub p_tail: f64,
    pub rows: Vec<CoverageRow>,
    pub warnings: Vec<String>,
}

impl CoverageTable {
    /// CSV rendering: warnings as leading comment lines, then the header
    /// `k,n,coverage,used,failures` with coverage to four decimal places.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for w in &self.warnings {
            out.push_str(&format!("# warning: {w}\n"));
        }
        out.push_str("k,n,coverage,used,failures\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{:.4},{},{}\n",
                row.level, row.n, row.coverage, row.used, row.failures
            ));
        }
        out
    }
}

/// Runs the configured experiment and aggregates per-level coverage.
///
/// Failed replicates are counted and excluded from the coverage fraction,
/// never silently dropped; more than 5% failures at any level produces a
/// warning in the output header.
pub fn run_coverage_experiment(config: &ExperimentConfig) -> Result<CoverageTable> {
    let runs = replicate_runs(config)?;
    let levels = config.effective_levels();

    let mut thresholds: HashMap<usize, f64> = HashMap::new();
    let mut threshold = |df: usize| -> Result<f64> {
        if let Some(&t) = thresholds.get(&df) {
            return Ok(t);
        }
        let t = chi2_quantile(config.p_tail, df)?;
        thresholds.insert(df, t);
        Ok(t)
    };

    let mut rows = Vec::with_capacity(levels.len());
    let mut warnings = Vec::new();
    for (idx, &level) in levels.iter().enumerate() {
        let mut used = 0usize;
        let mut covered = 0usize;
        for run in &runs {
            let outcome = match run {
                Ok(r) => &r.outcomes[idx],
                Err(_) => continue,
            };
            let Ok(outcome) = outcome else { continue };
            let df = match config.df_mode {
                DfMode::AutoRank => outcome.rank,
                DfMode::Fixed(r) => r,
            };
            if df == 0 {
                continue; // rank-0 covariance cannot be whitened; count as failure
            }
            used += 1;
            if outcome.statistic <= threshold(df)? {
                covered += 1;
            }
        }
        let failures = config.replicates - used;
        if failures * 20 > config.replicates {
            warnings.push(format!(
                "level {level}: {failures} of {} replicates failed",
                config.replicates
            ));
        }
        rows.push(CoverageRow {
            level,
            n: 1usize << level,
            coverage: if used > 0 { covered as f64 / used as f64 } else { f64::NAN },
            used,
            failures,
        });
    }

    Ok(CoverageTable { p_tail: config.p_tail, rows, warnings })
}

// ---------------------------------------------------------------------------
// Config file parsing: flat `key = value` lines, `#` comments, lists
// comma-separated. Keys mirror the ExperimentConfig fields; model parameters
// use their own names (a, b, alpha, ..., theta1, theta2, sigma).
// ---------------------------------------------------------------------------

fn parse_kv(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some(eq) = line.find('=') else {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 'key = value', got '{line}'"),
            });
        };
        let key = line[..eq].trim().to_string();
        let value = line[eq + 1..].trim().to_string();
        if key.is_empty() || value.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "empty key or value".into(),
            });
        }
        if pairs.iter().any(|(_, k, _)| *k == key) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("duplicate key '{key}'"),
            });
        }
        pairs.push((line_no, key, value));
    }
    Ok(pairs)
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse '{value}' for key '{key}'"),
    })
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let pairs = parse_kv(text)?;

        let model_name = pairs
            .iter()
            .find(|(_, k, _)| k == "model")
            .map(|(_, _, v)| v.as_str())
            .unwrap_or("heston");

        let mut heston = HestonParams::default();
        let mut ou = OuParams::default();
        let mut fine_exponent: Option<u32> = None;
        let mut subsample_levels: Option<Vec<u32>> = None;
        let mut p_tail: Option<f64> = None;
        let mut replicates: Option<usize> = None;
        let mut master_seed = 0u64;
        let mut df_mode = DfMode::AutoRank;
        let mut rank_tol = DEFAULT_RANK_TOL;
        let mut include_fine_row = false;
        let mut output = None;

        for (line, key, value) in &pairs {
            let line = *line;
            match key.as_str() {
                "model" => {
                    if !matches!(value.as_str(), "heston" | "ou") {
                        return Err(Error::Parse {
                            line,
                            message: format!("unknown model '{value}' (expected heston or ou)"),
                        });
                    }
                }
                "a" => heston.a = parse_num(line, key, value)?,
                "b" => heston.b = parse_num(line, key, value)?,
                "alpha" => heston.alpha = parse_num(line, key, value)?,
                "beta" => heston.beta = parse_num(line, key, value)?,
                "sigma1" => heston.sigma1 = parse_num(line, key, value)?,
                "sigma2" => heston.sigma2 = parse_num(line, key, value)?,
                "rho" => heston.rho = parse_num(line, key, value)?,
                "y0" => heston.y0 = parse_num(line, key, value)?,
                "x0" => {
                    let v: f64 = parse_num(line, key, value)?;
                    heston.x0 = v;
                    ou.x0 = v;
                }
                "theta1" => ou.theta1 = parse_num(line, key, value)?,
                "theta2" => ou.theta2 = parse_num(line, key, value)?,
                "sigma" => ou.sigma = parse_num(line, key, value)?,
                "T" => {
                    let v: f64 = parse_num(line, key, value)?;
                    heston.horizon = v;
                    ou.horizon = v;
                }
                "l" => fine_exponent = Some(parse_num(line, key, value)?),
                "k_list" => {
                    let mut levels = Vec::new();
                    for item in value.split(',') {
                        levels.push(parse_num(line, key, item.trim())?);
                    }
                    subsample_levels = Some(levels);
                }
                "p_tail" => p_tail = Some(parse_num(line, key, value)?),
                "M" => replicates = Some(parse_num(line, key, value)?),
                "master_seed" => master_seed = parse_num(line, key, value)?,
                "df_mode" => {
                    df_mode = if value == "auto-rank" {
                        DfMode::AutoRank
                    } else if let Some(rest) = value.strip_prefix("fixed:") {
                        DfMode::Fixed(parse_num(line, key, rest)?)
                    } else {
                        return Err(Error::Parse {
                            line,
                            message: format!(
                                "df_mode must be 'auto-rank' or 'fixed:<r>', got '{value}'"
                            ),
                        });
                    };
                }
                "rank_tol" => rank_tol = parse_num(line, key, value)?,
                "include_fine_row" => {
                    include_fine_row = match value.as_str() {
                        "true" => true,
                        "false" => false,
                        _ => {
                            return Err(Error::Parse {
                                line,
                                message: format!("expected true/false, got '{value}'"),
                            })
                        }
                    };
                }
                "output" => output = Some(PathBuf::from(value)),
                _ => {
                    return Err(Error::Parse {
                        line,
                        message: format!("unknown key '{key}'"),
                    });
                }
            }
        }

        let model = match model_name {
            "heston" => ModelConfig::Heston(heston),
            _ => ModelConfig::Ou(ou),
        };
        let missing = |what: &str| Error::RejectedInput(format!("config is missing '{what}'"));
        let config = ExperimentConfig {
            model,
            fine_exponent: fine_exponent.ok_or_else(|| missing("l"))?,
            subsample_levels: subsample_levels.ok_or_else(|| missing("k_list"))?,
            p_tail: p_tail.ok_or_else(|| missing("p_tail"))?,
            replicates: replicates.ok_or_else(|| missing("M"))?,
            master_seed,
            df_mode,
            rank_tol,
            include_fine_row,
            output,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}
