//! The command-line drivers called as library functions: a short training
//! run with checkpoints, a resumed continuation, and a simulation of the
//! trained actor.
use ris_semopt::runner::{cmd_simulate, cmd_train, PolicySpec, RunManifest};
use ris_semopt::scenario::Scenario;
use ris_semopt::tdrl::{PpoConfig, TrainConfig};

fn main() -> ris_semopt::Result<()> {
    let dir = std::env::temp_dir().join("ris-semopt-cli-workflow");
    let _ = std::fs::remove_dir_all(&dir);
    let scenario = Scenario::tiny();
    let config = TrainConfig {
        steps: 512,
        checkpoint_every: 256,
        eval_interval: 256,
        eval_steps: 32,
        ppo: PpoConfig { horizon: 128, minibatch: 32, ..PpoConfig::default() },
        ..TrainConfig::default()
    };

    let first = cmd_train(&scenario, &config, 4, &dir.join("train"), None)?;
    println!("trained {} steps, checkpoints {:?}", first.steps, first.checkpoints);

    let more = TrainConfig { steps: 768, ..config.clone() };
    let resumed = cmd_train(&scenario, &more, 4, &dir.join("train"), Some(&first.checkpoints[0]))?;
    println!("resumed from step 256 to {}", resumed.steps);

    let policy = PolicySpec::Checkpoint(first.checkpoints[1].clone());
    let sim = cmd_simulate(&scenario, &config, &policy, 64, 4, &dir.join("simulate"))?;
    println!("trained actor: mean η {:.4e} over {} steps", sim.mean_eta, sim.steps);

    let manifest = RunManifest::load(&dir.join("simulate"))?;
    println!("manifest: scenario {} seed {}", &manifest.scenario_hash[..12], manifest.seed);
    Ok(())
}
