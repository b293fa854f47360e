//! Scheduling-keyed model cache: the first visit to a schedule calibrates
//! per-pair surrogate coefficients, later visits hit the table.
use ris_semopt::env::{Env, Link, SchedulingMatrix};
use ris_semopt::scenario::Scenario;
use ris_semopt::tdrl::{cache, calibrate_entry, CacheTable};

fn main() -> ris_semopt::Result<()> {
    let env = Env::new(&Scenario::default(), 11)?;
    let (model, real) = (env.model(), env.realization());
    let schedules = [
        SchedulingMatrix::from_links(3, 2, &[Link { tx: 0, rx: 1, band: 0 }])?,
        SchedulingMatrix::from_links(3, 2, &[Link { tx: 0, rx: 1, band: 0 }, Link { tx: 2, rx: 0, band: 1 }])?,
    ];

    let mut table = CacheTable::new();
    for (visit, b) in schedules.iter().cycle().take(6).enumerate() {
        let (entry, hit) = table.get_or_calibrate(b, || {
            calibrate_entry(model, real, b, cache::DEFAULT_BUDGET, visit as u64, visit as u64)
        })?;
        let first = b.links()[0];
        let fitted = entry.pair(first.tx, first.rx);
        let truth = model.truth.pair_coeffs(first.tx, first.rx);
        println!(
            "visit {visit}: {} link(s)  {}  k1 {:.4} (true {:.4})",
            b.active_count(),
            if hit { "hit " } else { "miss" },
            fitted.k1,
            truth.k1
        );
    }
    println!(
        "calls {}  probes {}  hit rate {:.2}",
        table.calibration_calls,
        table.calibration_probes,
        table.hit_rate()
    );
    Ok(())
}
