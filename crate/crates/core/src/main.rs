use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ddpc::plant::SteadyState;
use ddpc::policy::{n_tau_offline, StationarySchedule};
use ddpc::sim::config::{ExperimentConfig, Overrides, PolicyConfig};
use ddpc::sim::montecarlo::{fading_comparison, simulate, sweep_budget};
use ddpc::sim::output::{write_fading_files, write_j_file, write_sweep_file, write_trace_file, with_suffix};
use ddpc::sim::trial::Simulator;
use ddpc::sim::validate::{validate, ValidateOptions};

#[derive(Parser)]
#[command(version, about = "Data-driven transmission power control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment file; defaults describe the two-state benchmark.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Output path prefix.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replaces the budget of every policy.
    #[arg(long)]
    budget: Option<f64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Box<dyn std::error::Error>> {
        let base = match &self.config {
            Some(path) => ExperimentConfig::from_path(path)?,
            None => ExperimentConfig::default(),
        };
        Ok(base.apply(&Overrides {
            seed: self.seed,
            trials: self.trials,
            horizon: self.horizon,
            output: self.out.clone(),
            budget: self.budget,
        })?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Per-k J table for every configured policy.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also dump per-slot rows of the first N trials.
        #[arg(long, default_value_t = 0)]
        trace_trials: u64,
    },
    /// J at the horizon over a grid of budgets.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated budgets; falls back to the config, then 1..=10.
        #[arg(long, value_delimiter = ',')]
        budgets: Vec<f64>,
    },
    /// Data-driven control against truncated inversion under Rayleigh fading.
    Fading {
        #[command(flatten)]
        common: Common,
        /// Mean channel gain, used when the config has no fading section.
        #[arg(long, default_value_t = 1.0)]
        mean_gain: f64,
        /// Inversion cutoff, used when the config has no inversion policy.
        #[arg(long, default_value_t = 5.0)]
        h_star: f64,
    },
    /// Statistical oracle suite; exits nonzero on any failure.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        /// Fault injection: scales the posterior the Gaussianity oracle expects.
        #[arg(long, default_value_t = 1.0)]
        psi_scale: f64,
    },
    /// Offline and online ranks of the innovation covariance.
    Ranks {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        max_tau: usize,
    },
}

fn run(cli: Cli) -> Result<bool, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Simulate { common, trace_trials } => {
            let cfg = common.load()?;
            let estimates = simulate(&cfg)?;
            for e in &estimates {
                println!(
                    "{:<22} J_{} = {:.5} ± {:.5}  mse = {:.5}  power = {:.4}  drops = {:.4}",
                    e.policy,
                    cfg.horizon,
                    e.final_j(),
                    e.final_se(),
                    e.final_mse(),
                    e.mean_power,
                    e.drop_rate
                );
            }
            println!("wrote {}", write_j_file(&cfg.output, &estimates)?.display());
            if trace_trials > 0 {
                let mut rows = Vec::new();
                for p in &cfg.policy {
                    let sim = Simulator::new(&cfg, p)?;
                    for t in 0..trace_trials {
                        rows.extend(sim.run_trial(t)?);
                    }
                }
                println!("wrote {}", write_trace_file(&cfg.output, &rows)?.display());
            }
        }
        Command::Sweep { common, budgets } => {
            let cfg = common.load()?;
            let grid = if !budgets.is_empty() {
                budgets
            } else if let Some(s) = &cfg.sweep {
                s.budgets.clone()
            } else {
                (1..=10).map(f64::from).collect()
            };
            let rows = sweep_budget(&cfg, &grid)?;
            for r in &rows {
                println!("{:<22} budget {:>6.2}  J = {:.5} ± {:.5}", r.policy, r.budget, r.j, r.se);
            }
            println!("wrote {}", write_sweep_file(&cfg.output, &rows)?.display());
        }
        Command::Fading { common, mean_gain, h_star } => {
            let mut cfg = common.load()?;
            if cfg.channel.fading.is_none() {
                cfg.channel = cfg.channel.with_fading(mean_gain)?;
            }
            if !cfg.policy.iter().any(|p| matches!(p, PolicyConfig::TruncatedInversion { .. })) {
                let budget = cfg.policy.iter().find_map(PolicyConfig::budget).unwrap_or(5.0);
                cfg.policy.push(PolicyConfig::TruncatedInversion { budget, h_star });
            }
            let report = fading_comparison(&cfg)?;
            println!("v = {:.4} (budget {}, h* = {}, mean gain {})", report.v, report.budget, report.h_star, report.mean_gain);
            for e in [&report.data_driven, &report.inversion] {
                println!("{:<22} J = {:.5} ± {:.5}  power = {:.4}", e.policy, e.final_j(), e.final_se(), e.mean_power);
            }
            let (agg, trace) = write_fading_files(&cfg.output, &report)?;
            println!("wrote {} and {}", agg.display(), trace.display());
        }
        Command::Validate { common, samples, psi_scale } => {
            let cfg = common.load()?;
            let opts = ValidateOptions {
                budget: common.budget.unwrap_or(5.0),
                samples,
                psi_scale,
                ..ValidateOptions::default()
            };
            let report = validate(&cfg, &opts)?;
            for o in &report.oracles {
                println!(
                    "{} {:<40} observed {:<12.6} expected {:<12.6} tol {:.3e}",
                    if o.passed { "PASS" } else { "FAIL" },
                    o.name,
                    o.observed,
                    o.expected,
                    o.tolerance
                );
            }
            let path = with_suffix(&cfg.output, "_validation.json");
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(&path, report.to_json())?;
            println!("wrote {}", path.display());
            return Ok(report.passed);
        }
        Command::Ranks { common, max_tau } => {
            let cfg = common.load()?;
            let model = cfg.build_model()?;
            let steady = SteadyState::compute(&model)?;
            let schedule = StationarySchedule::unshaped(max_tau, &model, &steady);
            println!("tau,offline_rank,online_rank");
            for tau in 1..=max_tau {
                let online = schedule.state(tau).expect("in schedule").rank();
                println!("{tau},{},{online}", n_tau_offline(&model, &steady.p_bar, tau));
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
