use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ris_semopt::baselines::DEFAULT_BUDGET;
use ris_semopt::runner::{self, Axis, PolicySpec};
use ris_semopt::scenario::Scenario;
use ris_semopt::tdrl::{Ablation, TrainConfig};
use ris_semopt::Error;

#[derive(Parser)]
#[command(name = "ris-semopt", version, about = "RIS-assisted semantic communication simulator and optimizer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file, or preset:default / preset:tiny.
    #[arg(long, default_value = "preset:default")]
    scenario: PathBuf,
    /// Training config JSON file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run a fixed or checkpointed policy and log every step.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1000)]
        steps: u64,
        /// random, idle, greedy[:restarts] or checkpoint:PATH
        #[arg(long, default_value = "random")]
        policy: String,
    },
    /// Train the truncated PPO agent.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        ablate: Option<String>,
        /// Continue from a checkpoint file.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        checkpoint_every: Option<u64>,
    },
    /// Greedy search across RIS sizes or user counts.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        axis: String,
        #[arg(long)]
        values: String,
        /// Number of seeds, counting up from --seed.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
    /// Exhaustive search on one realization.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u64,
    },
    /// Train the full loop next to one ablation (or all three).
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        ablate: Option<String>,
    },
}

fn load(common: &Common) -> ris_semopt::Result<(Scenario, TrainConfig)> {
    let config = match &common.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    let scenario = if common.scenario == Path::new("preset:default") {
        match (&config.scenario, &common.config) {
            // relative to the config file
            (Some(p), Some(cfg)) if !p.starts_with("preset:") => {
                Scenario::load(&cfg.parent().unwrap_or(Path::new("")).join(p))?
            }
            (Some(p), _) => Scenario::load(Path::new(p))?,
            (None, _) => Scenario::default(),
        }
    } else {
        Scenario::load(&common.scenario)?
    };
    config.validate()?;
    Ok((scenario, config))
}

fn run(cli: Cli) -> ris_semopt::Result<()> {
    match cli.command {
        Command::Simulate { common, steps, policy } => {
            let (scenario, config) = load(&common)?;
            let s = runner::cmd_simulate(&scenario, &config, &PolicySpec::parse(&policy)?, steps, common.seed, &common.out)?;
            println!("{}", serde_json::to_string(&s)?);
        }
        Command::Train {
            common,
            steps,
            ablate,
            resume,
            checkpoint_every,
        } => {
            let (scenario, mut config) = load(&common)?;
            config.steps = steps.unwrap_or(config.steps);
            config.checkpoint_every = checkpoint_every.unwrap_or(config.checkpoint_every);
            if let Some(a) = ablate {
                config.ablation = Ablation::parse(&a)?;
            }
            let r = runner::cmd_train(&scenario, &config, common.seed, &common.out, resume.as_deref())?;
            println!(
                "steps {} final eval η {:.4e} calibration calls {} ground-truth queries {}",
                r.steps, r.final_eval_eta, r.calibration_calls, r.gt_queries
            );
        }
        Command::Sweep {
            common,
            axis,
            values,
            seeds,
        } => {
            let (scenario, _) = load(&common)?;
            let seeds: Vec<u64> = (common.seed..common.seed + seeds.max(1)).collect();
            let rows = runner::cmd_sweep(&scenario, Axis::parse(&axis)?, &runner::parse_values(&values)?, &seeds, &common.out)?;
            for r in rows {
                println!("{} {:.4e} ± {:.2e}", r.value, r.mean_eta, r.std_eta);
            }
        }
        Command::Oracle { common, budget } => {
            let (scenario, _) = load(&common)?;
            let r = runner::cmd_oracle(&scenario, common.seed, budget, &common.out)?;
            println!("η {:.4e} over {} actions", r.eta, r.evaluated);
        }
        Command::Ablate { common, steps, ablate } => {
            let (scenario, mut config) = load(&common)?;
            config.steps = steps.unwrap_or(config.steps);
            let only = ablate.as_deref().map(Ablation::parse).transpose()?;
            for r in runner::cmd_ablate(&scenario, &config, only, common.seed, &common.out)? {
                println!(
                    "{:<14} η {:.4e} calibration calls {:>6} ground-truth queries {:>6}",
                    r.variant, r.final_eval_eta, r.calibration_calls, r.gt_queries
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::BudgetExceeded { .. } => 3,
                Error::Io { .. } | Error::Parse { .. } | Error::Config(_) => 2,
                _ => 1,
            })
        }
    }
}
