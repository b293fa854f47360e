//! Warm-start the similarity estimator on the nominal surrogate, then
//! fine-tune it on noisy ground truth gathered from random actions.
use ris_semopt::baselines::random_action;
use ris_semopt::env::Env;
use ris_semopt::estimator::{inputs_for, Estimator, EstimatorConfig, ReplayBuffer};
use ris_semopt::scenario::Scenario;
use ris_semopt::seed;

fn main() -> ris_semopt::Result<()> {
    let mut env = Env::new(&Scenario::default(), 5)?;
    env.reset(5)?;
    let cfg = EstimatorConfig {
        share_embedding: false,
        ..EstimatorConfig::default()
    };
    let nominal = env.model().truth.nominal;
    let mut est = Estimator::new(env.model(), cfg, None, 5)?;
    let warm = est.warm_start(env.model(), &nominal, 2048, 5)?;
    println!("warm start: {} epochs, held-out MSE {:.2e}", warm.epochs, warm.heldout_mse);

    let mut replay = ReplayBuffer::new(cfg.buffer);
    let mut rng = seed::rng(5, &[42]);
    for round in 0..6 {
        for _ in 0..256 {
            let action = random_action(env.model(), &mut rng);
            let evals = env.link_evals(&action)?;
            let inputs = inputs_for(env.model(), &action, &evals, |_| nominal);
            let out = env.step(&action)?;
            for (input, link) in inputs.into_iter().zip(&out.slot.links) {
                replay.push(input, link.xi, out.step as u64);
            }
            if out.done {
                env.reset(round)?;
            }
        }
        let r = est.fine_tune(&replay, cfg.epochs, round)?;
        println!(
            "round {round}: {} samples, L_est {:.2e}, converged {}",
            replay.len(),
            r.l_est,
            est.converged()
        );
    }
    Ok(())
}
