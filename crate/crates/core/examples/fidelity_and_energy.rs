//! Walk the compression ladder: similarity, semantic rate and energy per
//! encoder depth on one link.
use ris_semopt::energy::{link_processing_energy, link_transmit_energy, EnergyParams};
use ris_semopt::semfidelity::{beta_from_index, semantic_rate, ssim, surrogate_similarity, SurrogateCoeffs, MAX_INDEX};

fn main() -> ris_semopt::Result<()> {
    let coeffs = SurrogateCoeffs::default();
    let energy = EnergyParams::default();
    let (w, m) = (20e6, 65536.0);
    let s_sem = 0.25 * m;
    let gamma = 30.0;

    println!(" i      β      ξ      Γ (suts/s)   E_s (J)    E_t (J)");
    for i in 0..=MAX_INDEX {
        let beta = beta_from_index(i)?;
        let xi = surrogate_similarity(&coeffs, gamma, beta)?;
        let rate = semantic_rate(w, s_sem, xi, beta, m)?;
        println!(
            "{i:>2}  {beta:.4}  {xi:.4}  {rate:>12.4e}  {:.3e}  {:.3e}",
            link_processing_energy(i, &energy),
            link_transmit_energy(i, &energy, w, m)?
        );
    }

    let x: Vec<f64> = (0..64).map(|i| (i as f64 / 8.0).sin() * 0.5 + 0.5).collect();
    let blurred: Vec<f64> = x.windows(3).map(|w| w.iter().sum::<f64>() / 3.0).chain([x[62], x[63]]).collect();
    println!("SSIM(x, x) = {}", ssim(&x, &x, 1e-4, 9e-4)?);
    println!("SSIM(x, blurred) = {:.4}", ssim(&x, &blurred, 1e-4, 9e-4)?);
    Ok(())
}
