//! Experiment configuration, reference optimum, orchestration of
//! simulations across algorithms and seeds, and CSV output.
//!
//! Runs execute in parallel, each owning its generator and state; results
//! are collected in job order and written by a single thread, so output
//! bytes depend only on the configuration.

pub mod validate;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{self, BaselineError, SimSpec, StaticPolicy, DEFAULT_STATIC_M};
use crate::bench::{self, BenchError, BenchResult, CycleStats};
use crate::fkors::{self, CbarMode, FkorsConfig, FkorsError, RunRecord};
use crate::market::{MarketDistribution, MarketError, MarketSpec, Multiplier};
use crate::reward::{validate_reward, RewardError, RewardFn, RewardReport};
use crate::rng::SimRng;

/// Environment variable that replaces the base seed of every experiment.
pub const SEED_ENV: &str = "SPACING_SEED";
/// Horizon over which configured rewards are validated.
pub const REWARD_CHECK_HORIZON: usize = 10_000;

/// Configuration error, located in the source text when possible.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("config line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{}field `{field}`: {message}", line.map(|l| format!("config line {l}: ")).unwrap_or_default())]
    Invalid {
        field: String,
        line: Option<usize>,
        message: String,
    },
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error(transparent)]
    Fkors(#[from] FkorsError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

/// Simulated bidding strategy. In JSON: `"fkors"`, `"static_opt"`,
/// `"always_one"` or `{"fixed_interval": period}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Fkors,
    StaticOpt,
    AlwaysOne,
    FixedInterval(usize),
}

impl Algorithm {
    /// Name used in output files.
    pub fn label(&self) -> String {
        match self {
            Algorithm::Fkors => "fkors".into(),
            Algorithm::StaticOpt => "static_opt".into(),
            Algorithm::AlwaysOne => "always_one".into(),
            Algorithm::FixedInterval(p) => format!("fixed_interval_{p}"),
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// One experiment: a market, a reward, a budget rate and horizon, the
/// algorithms to compare and the seeds to run them on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub market: MarketSpec,
    pub reward: RewardFn,
    pub rho: f64,
    #[serde(rename = "T")]
    pub t: usize,
    pub algorithms: Vec<Algorithm>,
    /// FKORS state cap (default from the horizon) and bench state count.
    #[serde(default)]
    pub m: Option<usize>,
    /// FKORS epoch length.
    #[serde(default)]
    pub k: Option<usize>,
    /// State count of the reference optimum.
    #[serde(default)]
    pub m_ref: Option<usize>,
    /// Reward cap used to evaluate static policies.
    #[serde(default)]
    pub static_m: Option<usize>,
    /// FKORS sample quantization grid; 0 disables it.
    #[serde(default)]
    pub quantization: Option<u32>,
    /// Force bid 1 in state `m` (FKORS default on, bench default off).
    #[serde(default)]
    pub bid1_at_m: Option<bool>,
    /// How FKORS learns `c̄` for its defaults; the market mean if absent.
    #[serde(default)]
    pub cbar: Option<CbarMode>,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub base_seed: Option<u64>,
    #[serde(default)]
    pub replications: Option<usize>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

/// Line of the first `"key":` in `text`, 1-based.
fn line_of_key(text: &str, key: &str) -> Option<usize> {
    let quoted = format!("\"{key}\"");
    let mut from = 0;
    while let Some(pos) = text[from..].find(&quoted) {
        let at = from + pos;
        let rest = text[at + quoted.len()..].trim_start();
        if rest.starts_with(':') {
            return Some(text[..at].matches('\n').count() + 1);
        }
        from = at + quoted.len();
    }
    None
}

impl ExperimentConfig {
    /// Parses and validates a JSON document. Errors name the offending
    /// field and its line.
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.validate()
            .map_err(|e| match e {
                ConfigError::Invalid { field, message, .. } => ConfigError::Invalid {
                    line: line_of_key(text, field.split('.').next().unwrap_or(&field)),
                    field,
                    message,
                },
                other => other,
            })?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::from_json_str(&text)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |field: &str, message: String| {
            Err(ConfigError::Invalid {
                field: field.into(),
                line: None,
                message,
            })
        };
        if let Err(e) = self.market.build() {
            return invalid("market", e.to_string());
        }
        if let RewardReport::Violation { ell, reason } = validate_reward(&self.reward, REWARD_CHECK_HORIZON) {
            return invalid("reward", format!("violation at ℓ = {ell}: {reason}"));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return invalid("rho", format!("{} outside (0, 1]", self.rho));
        }
        if self.t < 1 {
            return invalid("T", "must be at least 1".into());
        }
        if self.algorithms.is_empty() {
            return invalid("algorithms", "at least one algorithm is required".into());
        }
        if self.algorithms.contains(&Algorithm::FixedInterval(0)) {
            return invalid("algorithms", "fixed_interval period must be at least 1".into());
        }
        if self.algorithms.contains(&Algorithm::Fkors) && self.t < 2 {
            return invalid("T", "fkors needs T >= 2".into());
        }
        for (name, v) in [("m", self.m), ("k", self.k), ("m_ref", self.m_ref), ("static_m", self.static_m)] {
            if v == Some(0) {
                return invalid(name, "must be at least 1".into());
            }
        }
        if let Some(m) = self.m {
            if m > self.t {
                return invalid("m", format!("{m} exceeds T = {}", self.t));
            }
        }
        if let Some(c) = self.cbar {
            if !(c.value() > 0.0 && c.value() <= 1.0) {
                return invalid("cbar", format!("{} outside (0, 1]", c.value()));
            }
        }
        match (&self.seeds, self.base_seed, self.replications) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return invalid("seeds", "give either seeds or base_seed/replications, not both".into())
            }
            (Some(s), None, None) if s.is_empty() => return invalid("seeds", "seed list is empty".into()),
            (_, _, Some(0)) => return invalid("replications", "must be at least 1".into()),
            _ => {}
        }
        Ok(())
    }

    /// Seeds in run order. A base-seed override replaces the configured
    /// seeds with `base + i` for as many replications as configured.
    pub fn resolved_seeds(&self, base_override: Option<u64>) -> Vec<u64> {
        let count = match &self.seeds {
            Some(s) => s.len(),
            None => self.replications.unwrap_or(1),
        };
        match (base_override, &self.seeds) {
            (None, Some(s)) => s.clone(),
            (over, _) => {
                let base = over.or(self.base_seed).unwrap_or(0);
                (0..count as u64).map(|i| base.wrapping_add(i)).collect()
            }
        }
    }

    /// Replaces the seeds by `base + i` when an override is given.
    pub fn apply_seed_override(&mut self, base_override: Option<u64>) {
        if base_override.is_some() {
            let seeds = self.resolved_seeds(base_override);
            self.seeds = Some(seeds);
            self.base_seed = None;
            self.replications = None;
        }
    }
}

/// Base-seed override from [`SEED_ENV`], if set.
pub fn env_seed() -> Result<Option<u64>, ConfigError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| ConfigError::Invalid {
            field: SEED_ENV.into(),
            line: None,
            message: format!("`{v}` is not an unsigned 64-bit integer"),
        }),
        Err(_) => Ok(None),
    }
}

/// Per-round optimum used as the regret baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceOpt {
    pub m_ref: usize,
    pub opt_per_round: f64,
}

/// `m_ref = min(T, ⌈(4/(c̄ρ))·ln T⌉)`, at least 1.
pub fn reference_m(cbar: f64, rho: f64, t: usize) -> usize {
    let raw = (4.0 / (cbar * rho)) * (t as f64).ln();
    let m = if raw.is_finite() { raw.ceil().max(1.0) as usize } else { t };
    m.clamp(1, t.max(1))
}

/// `OPT^inf_{m_ref}` without the bid-1 constraint. Zero when nothing can
/// be earned (`ρ = 0` or `c̄ = 0`).
pub fn reference_opt(
    market: &MarketDistribution,
    r: &RewardFn,
    rho: f64,
    t: usize,
    m_ref: Option<usize>,
) -> Result<ReferenceOpt, HarnessError> {
    let cbar = market.mean_conversion();
    let m_ref = m_ref.unwrap_or_else(|| reference_m(cbar, rho, t));
    if rho == 0.0 || cbar == 0.0 {
        return Ok(ReferenceOpt {
            m_ref,
            opt_per_round: 0.0,
        });
    }
    let res = bench::solve_benchmark(market, r, m_ref, rho, false)?;
    Ok(ReferenceOpt {
        m_ref,
        opt_per_round: res.opt_value,
    })
}

/// One line of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub seed: u64,
    #[serde(rename = "T")]
    pub t: usize,
    pub rho: f64,
    pub utility_true: f64,
    pub utility_accounted: f64,
    pub spend: f64,
    pub wins: usize,
    pub conversions: usize,
    pub opt_per_round: f64,
    pub regret: f64,
}

/// Result of one simulated run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub row: SummaryRow,
    pub unconverted_epoch_fraction: f64,
    /// The full record when traces were requested.
    pub record: Option<RunRecord>,
}

/// Summary rows and reference optimum of one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub reference: ReferenceOpt,
    pub runs: Vec<RunOutcome>,
}

/// Inputs shared by every run of an experiment.
struct Prepared {
    market: MarketDistribution,
    reward: RewardFn,
    reference: ReferenceOpt,
    static_policy: Option<StaticPolicy>,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, HarnessError> {
    let market = cfg.market.build()?;
    let reward = cfg.reward.clone();
    let reference = reference_opt(&market, &reward, cfg.rho, cfg.t, cfg.m_ref)?;
    let static_policy = if cfg.algorithms.contains(&Algorithm::StaticOpt) {
        let m = cfg.static_m.unwrap_or(DEFAULT_STATIC_M);
        Some(baselines::optimal_static(&market, &reward, m, cfg.rho)?.0)
    } else {
        None
    };
    Ok(Prepared {
        market,
        reward,
        reference,
        static_policy,
    })
}

/// FKORS parameters implied by the configuration for one seed.
pub fn fkors_config(
    cfg: &ExperimentConfig,
    market: &MarketDistribution,
    seed: u64,
    opt_ref: Option<f64>,
) -> Result<FkorsConfig, HarnessError> {
    let cbar = cfg.cbar.unwrap_or(CbarMode::Known(market.mean_conversion()));
    let mut fk = FkorsConfig::with_defaults(cfg.rho, cfg.t, cbar, seed)?;
    if let Some(m) = cfg.m {
        fk.m = m;
    }
    if let Some(k) = cfg.k {
        fk.k = k;
    }
    if let Some(q) = cfg.quantization {
        fk.quantization = q;
    }
    if let Some(b) = cfg.bid1_at_m {
        fk.bid1_at_m = b;
    }
    fk.opt_ref = opt_ref;
    Ok(fk)
}

fn run_one(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    alg: Algorithm,
    seed: u64,
    keep_record: bool,
) -> Result<RunOutcome, HarnessError> {
    let mut rng = SimRng::new(seed);
    let spec = SimSpec {
        rho: cfg.rho,
        t: cfg.t,
        seed,
    };
    let (market, r) = (&prep.market, &prep.reward);
    let record = match alg {
        Algorithm::Fkors => {
            let fk = fkors_config(cfg, market, seed, Some(prep.reference.opt_per_round))?;
            fkors::run_fkors(market, r, &fk, &mut rng)?
        }
        Algorithm::StaticOpt => {
            let policy = prep.static_policy.as_ref().expect("prepared for static_opt");
            baselines::static_run(market, r, policy, spec, &mut rng)?
        }
        Algorithm::AlwaysOne => baselines::always_one_run(market, r, spec, &mut rng)?,
        Algorithm::FixedInterval(p) => baselines::fixed_interval_run(market, r, p, spec, &mut rng)?,
    };
    let opt = prep.reference.opt_per_round;
    let totals = &record.totals;
    let row = SummaryRow {
        algorithm: alg.label(),
        seed,
        t: cfg.t,
        rho: cfg.rho,
        utility_true: totals.utility_true,
        utility_accounted: totals.utility_accounted,
        spend: totals.spend,
        wins: totals.wins,
        conversions: totals.conversions,
        opt_per_round: opt,
        regret: fkors::regret(&record, opt),
    };
    Ok(RunOutcome {
        row,
        unconverted_epoch_fraction: record.unconverted_epoch_fraction(),
        record: keep_record.then_some(record),
    })
}

/// Runs every (algorithm, seed) pair of `cfg` in parallel and returns the
/// outcomes in configuration order (algorithms outer, seeds inner). Seeds
/// come from the configuration; apply overrides beforehand.
pub fn simulate(cfg: &ExperimentConfig, keep_records: bool) -> Result<ExperimentOutput, HarnessError> {
    cfg.validate()?;
    let prep = prepare(cfg)?;
    let seeds = cfg.resolved_seeds(None);
    let jobs: Vec<(Algorithm, u64)> = cfg
        .algorithms
        .iter()
        .flat_map(|&a| seeds.iter().map(move |&s| (a, s)))
        .collect();
    let runs = jobs
        .into_par_iter()
        .map(|(a, s)| run_one(cfg, &prep, a, s, keep_records))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExperimentOutput {
        reference: prep.reference,
        runs,
    })
}

fn create_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, HarnessError> {
    let file = fs::File::create(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

/// Writes serializable rows with a header to `path`.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv_writer(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes a header plus string records (used when rows may be empty).
fn write_records(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), HarnessError> {
    let mut w = csv_writer(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush().map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

const TRACE_HEADER: [&str; 12] = [
    "t",
    "epoch",
    "state_fake",
    "state_true",
    "conv_rate",
    "bid",
    "price",
    "win",
    "conversion",
    "payment",
    "reward_accounted",
    "reward_true",
];

const EPOCH_HEADER: [&str; 11] = [
    "epoch",
    "start",
    "length",
    "converted",
    "r",
    "c",
    "eps_r",
    "eps_c",
    "lp_pivots",
    "lp_warm",
    "lp_fallback",
];

fn opt_string(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the per-round trace of `record` to `path`.
pub fn write_trace(path: &Path, record: &RunRecord) -> Result<(), HarnessError> {
    let rows: Vec<Vec<String>> = record
        .rounds
        .iter()
        .map(|e| {
            vec![
                e.t.to_string(),
                e.epoch.to_string(),
                e.state_fake.to_string(),
                e.state_true.to_string(),
                e.conv_rate.to_string(),
                opt_string(e.bid),
                e.price.to_string(),
                e.win.to_string(),
                e.conversion.to_string(),
                e.payment.to_string(),
                e.reward_accounted.to_string(),
                e.reward_true.to_string(),
            ]
        })
        .collect();
    write_records(path, &TRACE_HEADER, &rows)
}

/// Writes the epochs of `record` with their LP diagnostics to `path`.
pub fn write_epochs(path: &Path, record: &RunRecord) -> Result<(), HarnessError> {
    let rows: Vec<Vec<String>> = record
        .epochs
        .iter()
        .map(|e| {
            let d = record.diagnostics.iter().find(|d| d.epoch == e.index);
            vec![
                e.index.to_string(),
                e.start.to_string(),
                e.length.to_string(),
                e.converted.to_string(),
                opt_string(d.map(|d| d.r)),
                opt_string(d.map(|d| d.c)),
                opt_string(d.and_then(|d| d.eps_r)),
                opt_string(d.map(|d| d.eps_c)),
                d.map(|d| d.lp_pivots.to_string()).unwrap_or_default(),
                d.map(|d| d.lp_warm.to_string()).unwrap_or_default(),
                d.map(|d| d.lp_fallback.to_string()).unwrap_or_default(),
            ]
        })
        .collect();
    write_records(path, &EPOCH_HEADER, &rows)
}

fn write_run_files(dir: &Path, runs: &[RunOutcome], suffix: &str) -> Result<(), HarnessError> {
    for run in runs {
        if let Some(record) = &run.record {
            let stem = format!("{}_seed{}{suffix}", run.row.algorithm, run.row.seed);
            write_trace(&dir.join(format!("trace_{stem}.csv")), record)?;
            if record.params.is_some() {
                write_epochs(&dir.join(format!("epochs_{stem}.csv")), record)?;
            }
        }
    }
    Ok(())
}

/// Runs the experiment and writes `summary.csv` (plus `trace_*.csv` and,
/// for FKORS, `epochs_*.csv` when `trace` is set) into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path, trace: bool) -> Result<ExperimentOutput, HarnessError> {
    let output = simulate(cfg, trace)?;
    create_dir(out_dir)?;
    let rows: Vec<&SummaryRow> = output.runs.iter().map(|r| &r.row).collect();
    write_csv(&out_dir.join("summary.csv"), &rows)?;
    write_run_files(out_dir, &output.runs, "")?;
    Ok(output)
}

/// Per-(algorithm, T) aggregate of a regret sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub algorithm: String,
    #[serde(rename = "T")]
    pub t: usize,
    pub runs: usize,
    pub m_ref: usize,
    pub opt_per_round: f64,
    pub mean_utility: f64,
    pub mean_regret: f64,
    /// Mean regret divided by that of the previous horizon in the list.
    pub regret_ratio: Option<f64>,
    /// Largest `spend / (ρT)` over the runs.
    pub max_spend_fraction: f64,
    pub mean_unconverted_epoch_fraction: f64,
}

/// Outcome of [`regret_sweep`].
#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub runs: Vec<RunOutcome>,
}

/// Repeats the experiment for each horizon in `t_list` (in order).
pub fn regret_sweep_runs(cfg: &ExperimentConfig, t_list: &[usize]) -> Result<SweepOutput, HarnessError> {
    let mut rows: Vec<SweepRow> = Vec::new();
    let mut all_runs = Vec::new();
    for &t in t_list {
        let mut c = cfg.clone();
        c.t = t;
        let out = simulate(&c, false)?;
        for alg in &cfg.algorithms {
            let label = alg.label();
            let runs: Vec<&RunOutcome> = out.runs.iter().filter(|r| r.row.algorithm == label).collect();
            let n = runs.len() as f64;
            let mean = |f: &dyn Fn(&RunOutcome) -> f64| runs.iter().map(|r| f(r)).sum::<f64>() / n;
            let mean_regret = mean(&|r| r.row.regret);
            let prev = rows.iter().rev().find(|p| p.algorithm == label);
            rows.push(SweepRow {
                algorithm: label.clone(),
                t,
                runs: runs.len(),
                m_ref: out.reference.m_ref,
                opt_per_round: out.reference.opt_per_round,
                mean_utility: mean(&|r| r.row.utility_true),
                mean_regret,
                regret_ratio: prev.map(|p| mean_regret / p.mean_regret),
                max_spend_fraction: runs
                    .iter()
                    .map(|r| r.row.spend / (cfg.rho * t as f64))
                    .fold(0.0, f64::max),
                mean_unconverted_epoch_fraction: mean(&|r| r.unconverted_epoch_fraction),
            });
        }
        all_runs.extend(out.runs);
    }
    Ok(SweepOutput { rows, runs: all_runs })
}

/// [`regret_sweep_runs`] plus `summary.csv` (every run) and
/// `regret_sweep.csv` (aggregates) in `out_dir`.
pub fn regret_sweep(cfg: &ExperimentConfig, t_list: &[usize], out_dir: &Path) -> Result<SweepOutput, HarnessError> {
    let out = regret_sweep_runs(cfg, t_list)?;
    create_dir(out_dir)?;
    let rows: Vec<&SummaryRow> = out.runs.iter().map(|r| &r.row).collect();
    write_csv(&out_dir.join("summary.csv"), &rows)?;
    write_csv(&out_dir.join("regret_sweep.csv"), &out.rows)?;
    Ok(out)
}

/// One line of `warmup_curve.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WarmupPoint {
    pub rho: f64,
    pub ratio: f64,
}

/// Warm-up competitive ratio on `points` evenly spaced budgets from
/// `rho_min` to `rho_max` inclusive.
pub fn warmup_curve(rho_min: f64, rho_max: f64, points: usize) -> Result<Vec<WarmupPoint>, HarnessError> {
    if points == 0 || !(rho_min <= rho_max) {
        return Err(ConfigError::Invalid {
            field: "points".into(),
            line: None,
            message: "need at least one point and rho_min <= rho_max".into(),
        }
        .into());
    }
    (0..points)
        .map(|i| {
            let rho = if points == 1 {
                rho_min
            } else {
                rho_min + (rho_max - rho_min) * i as f64 / (points - 1) as f64
            };
            Ok(WarmupPoint {
                rho,
                ratio: baselines::warmup_ratio(rho)?,
            })
        })
        .collect()
}

/// Benchmark solve of a configuration together with its renewal
/// statistics and the best static policy for comparison.
#[derive(Debug, Clone)]
pub struct BenchReport {
    pub m: usize,
    pub bid1_at_m: bool,
    pub result: BenchResult,
    pub stats: CycleStats,
    pub static_value: f64,
}

/// Solves `OPT^inf_m` with `m` from the configuration (or the reference
/// rule) and bid 1 in state `m` only if configured.
pub fn bench_report(cfg: &ExperimentConfig) -> Result<BenchReport, HarnessError> {
    cfg.validate()?;
    let market = cfg.market.build()?;
    let m = cfg
        .m
        .unwrap_or_else(|| cfg.m_ref.unwrap_or_else(|| reference_m(market.mean_conversion(), cfg.rho, cfg.t)));
    let bid1_at_m = cfg.bid1_at_m.unwrap_or(false);
    let result = bench::solve_benchmark(&market, &cfg.reward, m, cfg.rho, bid1_at_m)?;
    let stats = bench::cycle_stats(&result.policy, &market, &cfg.reward)?;
    let static_m = cfg.static_m.unwrap_or(DEFAULT_STATIC_M);
    let (_, static_value) = baselines::optimal_static(&market, &cfg.reward, static_m, cfg.rho)?;
    Ok(BenchReport {
        m,
        bid1_at_m,
        result,
        stats,
        static_value,
    })
}

#[derive(Serialize)]
struct BenchSummaryRow {
    m: usize,
    rho: f64,
    bid1_at_m: bool,
    opt_value: f64,
    pay: f64,
    slack: f64,
    cycle_length: f64,
    static_value: f64,
    pivots: usize,
}

#[derive(Serialize)]
struct BenchStateRow {
    state: usize,
    win: f64,
    pay: f64,
    pi: f64,
    reach: f64,
    mixture: String,
}

fn mixture_string(mix: &[(Multiplier, f64)]) -> String {
    mix.iter()
        .map(|&(a, w)| match a {
            Multiplier::Skip => format!("skip:{w}"),
            Multiplier::Finite(mu) => format!("{mu}:{w}"),
        })
        .collect::<Vec<_>>()
        .join(";")
}

/// Writes `bench_summary.csv` and the per-state `bench.csv` to `out_dir`.
pub fn write_bench(report: &BenchReport, market: &MarketDistribution, rho: f64, out_dir: &Path) -> Result<(), HarnessError> {
    create_dir(out_dir)?;
    let res = &report.result;
    write_csv(
        &out_dir.join("bench_summary.csv"),
        &[BenchSummaryRow {
            m: report.m,
            rho,
            bid1_at_m: report.bid1_at_m,
            opt_value: res.opt_value,
            pay: res.pay,
            slack: res.slack,
            cycle_length: report.stats.l,
            static_value: report.static_value,
            pivots: res.pivots,
        }],
    )?;
    let (_, pay) = res.policy.win_pay(market);
    let rows: Vec<BenchStateRow> = (1..=report.m)
        .map(|ell| BenchStateRow {
            state: ell,
            win: res.win.w[ell - 1],
            pay: pay[ell - 1],
            pi: report.stats.pi.get(ell - 1).copied().unwrap_or(0.0),
            reach: report.stats.reach[ell - 1],
            mixture: mixture_string(res.policy.mixture(ell)),
        })
        .collect();
    write_csv(&out_dir.join("bench.csv"), &rows)
}
