//! Rician user-RIS channels, the 1-bit cascade and a per-link SINR.
use ris_semopt::channel::{best_phase_exhaustive, draw_channels, sinr, RisConfig};
use ris_semopt::env::{Link, SchedulingMatrix};
use ris_semopt::scenario::Scenario;

fn main() -> ris_semopt::Result<()> {
    let s = Scenario::default();
    let mut real = draw_channels(&s.topology(), &s.geometry(), &s.band_plan(), s.kappa, 3)?;
    let phi = RisConfig::all_off(s.elements());
    real.cascade(&phi, &s.phase)?;

    for c in 0..s.bands {
        let fwd = real.gain(0, 1, c);
        let back = real.gain(1, 0, c);
        println!("band {c}: |h01|² = {:.3e}, reciprocal: {}", fwd.norm_sqr(), fwd == back);
    }

    // 16 elements: all 65536 configurations for one pair and band
    let (best, power) = best_phase_exhaustive(&real, &s.phase, 0, 1, 0)?;
    println!("best φ for 0→1 on band 0: {:?}  |h|² {power:.3e}", best.bits());

    real.cascade(&best, &s.phase)?;
    let b = SchedulingMatrix::from_links(
        3,
        2,
        &[Link { tx: 0, rx: 1, band: 0 }, Link { tx: 2, rx: 0, band: 1 }],
    )?;
    let model = ris_semopt::env::SlotModel::new(&s, 3)?;
    for l in b.links() {
        let g = sinr(&real, &b, l, model.p_t, model.sigma2)?;
        println!("{l}: SINR {:.2} dB", 10.0 * g.log10());
    }
    Ok(())
}
