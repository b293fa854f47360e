//! Greedy energy efficiency against RIS size: more elements raise the
//! cascade gain but every element costs energy.
use ris_semopt::runner::{aggregate, sweep_points, Axis};
use ris_semopt::scenario::Scenario;

fn main() -> ris_semopt::Result<()> {
    let values = [4, 16, 36, 64, 100];
    let seeds: Vec<u64> = (1..=5).collect();
    let points = sweep_points(&Scenario::default(), Axis::RisSize, &values, &seeds)?;
    for row in aggregate(&points, &values) {
        println!("N = {:>3}  η {:.4e} ± {:.2e}", row.value, row.mean_eta, row.std_eta);
    }
    for &s in &seeds {
        let best = points
            .iter()
            .filter(|p| p.seed == s)
            .max_by(|a, b| a.eta.total_cmp(&b.eta))
            .expect("points for every seed");
        println!("seed {s}: best N = {}", best.value);
    }
    Ok(())
}
