//! `amle` command line tool.
//!
//! Subcommands:
//! - `simulate` writes a path CSV for a registered model, grid and seed.
//! - `estimate` reads a path CSV and prints the drift estimate with solver
//!   diagnostics as `key=value` lines.
//! - `coverage` runs a Monte Carlo coverage experiment from a config file
//!   and writes the per-level table.
//! - `chi2` prints a chi-square quantile.
//!
//! Exit codes: 0 on success, 1 on input errors (usage, config, file
//! parsing), 2 on numerical failures (singular systems, non-identified
//! estimates, diverged simulations).

use std::io::Write as _;
use std::process::ExitCode;

use amle_core::error::Error;
use amle_core::estimator::mle_proxy;
use amle_core::experiment::{
    run_coverage_experiment, DfMode, ExperimentConfig, ModelConfig,
};
use amle_core::heston::HestonParams;
use amle_core::numerics::{chi2_quantile, NoiseSource};
use amle_core::ou::OuParams;
use amle_core::simulate::{euler_simulate, read_path_file, write_path, write_path_file, TimeGrid};

const USAGE: &str = "\
usage: amle <command> [flags]

commands:
  simulate   write a simulated path CSV
             --model NAME [--config PATH] [--seed N] [--l N] [--out PATH]
  estimate   estimate drift parameters from a path CSV
             --model NAME --path PATH [--config PATH]
  coverage   run a coverage experiment from a config file
             --config PATH [--out PATH] [--seed N] [--p REAL] [--df N]
             [--m N] [--l N] [--k LIST]
  chi2       print a chi-square quantile
             --p REAL --df N

models: heston, ou. Config files use flat `key = value` lines; see the
repository README for the key list.";

enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::RejectedInput(_) | Error::OutsideDomain { .. } | Error::Parse { .. } | Error::Io(_) => 1,
        Error::SingularDiffusion { .. }
        | Error::SingularDiffusionAt { .. }
        | Error::NotPositiveSemidefinite { .. }
        | Error::SingularSystem { .. }
        | Error::NonIdentified(_)
        | Error::SimulationDiverged { .. } => 2,
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n\n{USAGE}");
            ExitCode::from(1)
        }
        Err(CliError::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Flag parser for `--key value` pairs.
struct Flags {
    pairs: Vec<(String, String)>,
}

impl Flags {
    fn parse(args: &[String]) -> Result<Self, CliError> {
        let mut pairs = Vec::new();
        let mut it = args.iter();
        while let Some(arg) = it.next() {
            let Some(key) = arg.strip_prefix("--") else {
                return Err(CliError::Usage(format!("unexpected argument '{arg}'")));
            };
            let Some(value) = it.next() else {
                return Err(CliError::Usage(format!("flag --{key} needs a value")));
            };
            pairs.push((key.to_string(), value.clone()));
        }
        Ok(Flags { pairs })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn require(&self, key: &str) -> Result<&str, CliError> {
        self.get(key).ok_or_else(|| CliError::Usage(format!("missing required flag --{key}")))
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Usage(format!("cannot parse '{v}' for --{key}"))),
        }
    }

    fn reject_unknown(&self, allowed: &[&str]) -> Result<(), CliError> {
        for (k, _) in &self.pairs {
            if !allowed.contains(&k.as_str()) {
                return Err(CliError::Usage(format!("unknown flag --{k}")));
            }
        }
        Ok(())
    }
}

fn run(args: &[String]) -> Result<(), CliError> {
    let Some(command) = args.first() else {
        return Err(CliError::Usage("no command given".into()));
    };
    let flags = Flags::parse(&args[1..])?;
    match command.as_str() {
        "simulate" => cmd_simulate(&flags),
        "estimate" => cmd_estimate(&flags),
        "coverage" => cmd_coverage(&flags),
        "chi2" => cmd_chi2(&flags),
        other => Err(CliError::Usage(format!("unknown command '{other}'"))),
    }
}

/// Model selection shared by `simulate` and `estimate`: `--model` picks the
/// registered name, `--config` (optional) carries the parameter values.
fn resolve_model(flags: &Flags) -> Result<ModelConfig, CliError> {
    let from_config = match flags.get("config") {
        Some(path) => {
            let cfg = ExperimentConfig::from_file(path)?;
            Some(cfg.model)
        }
        None => None,
    };
    let name = match (flags.get("model"), &from_config) {
        (Some(n), _) => n.to_string(),
        (None, Some(m)) => m.name().to_string(),
        (None, None) => return Err(CliError::Usage("missing required flag --model".into())),
    };
    match (name.as_str(), from_config) {
        ("heston", Some(ModelConfig::Heston(p))) => Ok(ModelConfig::Heston(p)),
        ("heston", _) => Ok(ModelConfig::Heston(HestonParams::default())),
        ("ou", Some(ModelConfig::Ou(p))) => Ok(ModelConfig::Ou(p)),
        ("ou", _) => Ok(ModelConfig::Ou(OuParams::default())),
        (other, _) => Err(CliError::Usage(format!(
            "unknown model '{other}' (registered: heston, ou)"
        ))),
    }
}

fn cmd_simulate(flags: &Flags) -> Result<(), CliError> {
    flags.reject_unknown(&["model", "config", "seed", "l", "out"])?;
    let model_cfg = resolve_model(flags)?;
    let seed: u64 = flags.num("seed")?.unwrap_or(0);
    let l: u32 = flags.num("l")?.unwrap_or(12);
    if l == 0 || l > 30 {
        return Err(CliError::Usage(format!("--l must lie in 1..=30, got {l}")));
    }

    let model = model_cfg.build()?;
    let grid = TimeGrid::new(model_cfg.horizon(), 1usize << l)?;
    let path = euler_simulate(
        &model,
        &model_cfg.true_theta(),
        &model_cfg.initial_state(),
        grid,
        &NoiseSource::new(seed, 0),
    )?;

    match flags.get("out") {
        Some(dest) => write_path_file(&path, dest)?,
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_path(&path, &mut lock)?;
        }
    }
    Ok(())
}

fn cmd_estimate(flags: &Flags) -> Result<(), CliError> {
    flags.reject_unknown(&["model", "config", "path"])?;
    let model_cfg = resolve_model(flags)?;
    let source = flags.require("path")?;
    let path = read_path_file(source)?;
    let model = model_cfg.build()?;
    let estimate = mle_proxy(&model, &path, None)?;

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for (name, value) in model_cfg.param_names().iter().zip(&estimate.theta) {
        writeln!(out, "{name}={value}").map_err(Error::from)?;
    }
    writeln!(out, "grad_norm={}", estimate.grad_norm).map_err(Error::from)?;
    writeln!(out, "neg_definite={}", estimate.hessian_max_eigenvalue < 0.0)
        .map_err(Error::from)?;
    writeln!(out, "converged={}", estimate.converged).map_err(Error::from)?;
    Ok(())
}

fn cmd_coverage(flags: &Flags) -> Result<(), CliError> {
    flags.reject_unknown(&["config", "out", "seed", "p", "df", "m", "l", "k"])?;
    let mut config = ExperimentConfig::from_file(flags.require("config")?)?;

    if let Some(seed) = flags.num("seed")? {
        config.master_seed = seed;
    }
    if let Some(p) = flags.num("p")? {
        config.p_tail = p;
    }
    if let Some(df) = flags.num("df")? {
        config.df_mode = DfMode::Fixed(df);
    }
    if let Some(m) = flags.num("m")? {
        config.replicates = m;
    }
    if let Some(l) = flags.num("l")? {
        config.fine_exponent = l;
    }
    if let Some(list) = flags.get("k") {
        let mut levels = Vec::new();
        for item in list.split(',') {
            levels.push(item.trim().parse().map_err(|_| {
                CliError::Usage(format!("cannot parse '{item}' in --k list"))
            })?);
        }
        config.subsample_levels = levels;
    }
    config.validate()?;

    let table = run_coverage_experiment(&config)?;
    let csv = table.to_csv();
    let destination = flags.get("out").map(std::path::PathBuf::from).or(config.output.clone());
    match destination {
        Some(dest) => std::fs::write(dest, csv).map_err(Error::from)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_chi2(flags: &Flags) -> Result<(), CliError> {
    flags.reject_unknown(&["p", "df"])?;
    let p: f64 = flags
        .require("p")?
        .parse()
        .map_err(|_| CliError::Usage("cannot parse --p".into()))?;
    let df: usize = flags
        .require("df")?
        .parse()
        .map_err(|_| CliError::Usage("cannot parse --df".into()))?;
    println!("{:.6}", chi2_quantile(p, df)?);
    Ok(())
}
