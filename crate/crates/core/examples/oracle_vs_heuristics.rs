//! Exhaustive search on the tiny scenario, compared with greedy local
//! search and the mean of 1000 random actions.
use ris_semopt::baselines::{evaluate_action, exhaustive_oracle, greedy_local_search, random_action, DEFAULT_BUDGET};
use ris_semopt::env::Env;
use ris_semopt::scenario::Scenario;
use ris_semopt::seed;

fn main() -> ris_semopt::Result<()> {
    let env = Env::new(&Scenario::tiny(), 1)?;
    let (model, real) = (env.model(), env.realization());

    let oracle = exhaustive_oracle(model, real, DEFAULT_BUDGET)?;
    println!(
        "oracle   η {:.4e}  ({} of {} actions, {:.1} ms)",
        oracle.eta,
        oracle.evaluated,
        oracle.cardinality,
        oracle.elapsed_s * 1e3
    );
    println!("         best {:?}", oracle.best);

    let greedy = greedy_local_search(model, real, 4, 1)?;
    println!("greedy   η {:.4e}", greedy.eta);

    let mut rng = seed::rng(1, &[99]);
    let mean = (0..1000)
        .map(|_| evaluate_action(model, real, &random_action(model, &mut rng)))
        .collect::<ris_semopt::Result<Vec<f64>>>()?
        .iter()
        .sum::<f64>()
        / 1000.0;
    println!("random   η {mean:.4e} (mean)");
    Ok(())
}
