use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use spacing::harness::validate::{validate_suite, Level};
use spacing::harness::{
    self, bench_report, env_seed, regret_sweep, run_experiment, warmup_curve, write_bench, write_csv,
    ExperimentConfig, HarnessError,
};

#[derive(Parser)]
#[command(name = "spacing", version, about = "Budgeted repeated auctions with a concave spacing reward")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the infinite-horizon benchmark LP for a configuration.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (defaults to the configuration's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate every configured algorithm on every seed.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Also write per-round traces.
        #[arg(long)]
        trace: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Competitive ratio of fixed bidding on uniform prices over a budget grid.
    WarmupCurve {
        #[arg(long, default_value_t = 0.005)]
        rho_min: f64,
        #[arg(long, default_value_t = 0.25)]
        rho_max: f64,
        #[arg(long, default_value_t = 50)]
        points: usize,
        /// Write the CSV here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat a simulation for several horizons and aggregate regret.
    RegretSweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "T-list", value_delimiter = ',', required = true)]
        t_list: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the property suite and print a pass/fail table.
    Validate {
        #[arg(long, value_enum, default_value_t = Level::Quick)]
        level: Level,
        /// Also validate the reward of this configuration.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = ExperimentConfig::from_path(path)?;
    cfg.apply_seed_override(env_seed()?);
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool, HarnessError> {
    match cli.command {
        Command::Bench { config, out } => {
            let cfg = load(&config)?;
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            let report = bench_report(&cfg)?;
            let market = cfg.market.build()?;
            write_bench(&report, &market, cfg.rho, &dir)?;
            let res = &report.result;
            println!(
                "m = {}, bid1_at_m = {}: opt = {}, pay = {}, slack = {}, static = {}",
                report.m, report.bid1_at_m, res.opt_value, res.pay, res.slack, report.static_value
            );
            println!("wrote {}", dir.display());
        }
        Command::Simulate { config, trace, out } => {
            let cfg = load(&config)?;
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            let output = run_experiment(&cfg, &dir, trace)?;
            println!(
                "reference m = {}, opt per round = {}",
                output.reference.m_ref, output.reference.opt_per_round
            );
            for alg in &cfg.algorithms {
                let label = alg.label();
                let rows: Vec<_> = output.runs.iter().filter(|r| r.row.algorithm == label).collect();
                let n = rows.len() as f64;
                let utility = rows.iter().map(|r| r.row.utility_true).sum::<f64>() / n;
                let regret = rows.iter().map(|r| r.row.regret).sum::<f64>() / n;
                println!("{label}: mean utility {utility:.3}, mean regret {regret:.3} over {} runs", rows.len());
            }
            println!("wrote {}", dir.join("summary.csv").display());
        }
        Command::WarmupCurve {
            rho_min,
            rho_max,
            points,
            out,
        } => {
            let curve = warmup_curve(rho_min, rho_max, points)?;
            match out {
                Some(path) => write_csv(&path, &curve)?,
                None => {
                    let mut w = csv::WriterBuilder::new()
                        .terminator(csv::Terminator::Any(b'\n'))
                        .from_writer(std::io::stdout().lock());
                    for p in &curve {
                        w.serialize(p)?;
                    }
                    w.flush().map_err(|source| HarnessError::Io {
                        path: PathBuf::from("<stdout>"),
                        source,
                    })?;
                }
            }
        }
        Command::RegretSweep { config, t_list, out } => {
            let cfg = load(&config)?;
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            let sweep = regret_sweep(&cfg, &t_list, &dir)?;
            for row in &sweep.rows {
                println!(
                    "{} T = {}: mean regret {:.3}{}",
                    row.algorithm,
                    row.t,
                    row.mean_regret,
                    row.regret_ratio.map(|q| format!(" (ratio {q:.3})")).unwrap_or_default()
                );
            }
            println!("wrote {}", dir.join("regret_sweep.csv").display());
        }
        Command::Validate { level, config } => {
            let reward = match config {
                Some(path) => Some(raw_reward(&path)?),
                None => None,
            };
            let report = validate_suite(level, reward.as_ref());
            print!("{report}");
            std::io::stdout().flush().ok();
            return Ok(report.passed());
        }
    }
    Ok(true)
}

/// The reward of a configuration file, without rejecting it for failing
/// validation (that is what the suite reports).
fn raw_reward(path: &Path) -> Result<spacing::reward::RewardFn, HarnessError> {
    #[derive(serde::Deserialize)]
    struct RewardOnly {
        reward: spacing::reward::RewardFn,
    }
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let parsed: RewardOnly = serde_json::from_str(&text).map_err(|e| harness::ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Ok(parsed.reward)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
