use ris_semopt::baselines::{fixed_ris_policy, greedy_local_search};
use ris_semopt::env::Env;
use ris_semopt::scenario::Scenario;

fn main() -> ris_semopt::Result<()> {
    let scenario = Scenario::default();
    let mut wins = 0;
    for seed in 1..=20u64 {
        let env = Env::new(&scenario, seed)?;
        let tunable = greedy_local_search(env.model(), env.realization(), 2, seed)?;
        let fixed = fixed_ris_policy(env.model(), env.realization(), 2, seed)?;
        wins += (tunable.eta > fixed.eta) as usize;
        println!("seed {seed:>2}  tunable {:.4e}  fixed {:.4e}", tunable.eta, fixed.eta);
    }
    println!("tunable ahead on {wins} of 20 seeds");
    Ok(())
}
