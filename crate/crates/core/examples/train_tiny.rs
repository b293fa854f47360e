//! Train on the tiny scenario until greedy evaluation comes within 5% of the
//! exhaustive optimum.
//!
//! `cargo run --release --example train_tiny -- [seed] [out-dir]`
use std::path::Path;

use ris_semopt::baselines::{exhaustive_oracle, DEFAULT_BUDGET};
use ris_semopt::env::Env;
use ris_semopt::scenario::Scenario;
use ris_semopt::tdrl::{run_training, TrainConfig};

fn main() -> ris_semopt::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let out = std::env::args().nth(2);

    let scenario = Scenario::tiny();
    let env = Env::new(&scenario, seed)?;
    let oracle = exhaustive_oracle(env.model(), env.realization(), DEFAULT_BUDGET)?;

    let config_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/tiny.json");
    let config = TrainConfig {
        target_eval_eta: Some(0.95 * oracle.eta),
        ..TrainConfig::load(&config_path)?
    };
    let report = run_training(&scenario, &config, seed, out.as_deref().map(Path::new))?;
    for e in &report.evals {
        println!("step {:>6}  eval η {:.4e}  ({:.1}% of optimum)", e.step, e.eta, 100.0 * e.eta / oracle.eta);
    }
    println!(
        "{} steps, {} calibrations, {} ground-truth queries, estimator converged at {:?}",
        report.steps, report.calibration_calls, report.gt_queries, report.converged_at
    );
    Ok(())
}
