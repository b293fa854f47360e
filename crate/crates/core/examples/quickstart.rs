//! Step the default scenario with a random policy and print what the
//! environment reports.
use ris_semopt::baselines::{Policy, RandomPolicy};
use ris_semopt::env::Env;
use ris_semopt::scenario::Scenario;

fn main() -> ris_semopt::Result<()> {
    let scenario = Scenario::default();
    let mut env = Env::new(&scenario, 7)?;
    env.reset(7)?;
    let mut policy = RandomPolicy::new(env.model(), 7);
    println!("observation has {} features", env.observation().features.len());
    for _ in 0..10 {
        let action = policy.act(&env)?;
        let out = env.step(&action)?;
        println!(
            "step {:>2}  links {}  η {:>10.4e} suts/J  reward {:>7.3}  mean ξ {:.3}",
            out.step,
            out.slot.links.len(),
            out.eta,
            out.reward,
            out.slot.mean_xi()
        );
    }
    Ok(())
}
