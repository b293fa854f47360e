//! Semantic fidelity: compression ladder, SSIM, the exponential similarity
//! surrogate and the semantic rate.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Deepest compression index (3-bit encoding).
pub const MAX_INDEX: u8 = 7;
pub const LEVELS: usize = MAX_INDEX as usize + 1;

pub const SSIM_ZETA1: f64 = 1e-4;
pub const SSIM_ZETA2: f64 = 9e-4;

/// `β = (3/4)^i` for `i` in `0..=7`.
pub fn beta_from_index(i: u8) -> Result<f64> {
    if i > MAX_INDEX {
        return Err(Error::Usage(format!("compression index {i} outside 0..={MAX_INDEX}")));
    }
    Ok(0.75f64.powi(i as i32))
}

/// Global (unwindowed) SSIM between two equal-length arrays.
pub fn ssim(x: &[f64], x_hat: &[f64], zeta1: f64, zeta2: f64) -> Result<f64> {
    if x.len() != x_hat.len() {
        return Err(Error::Usage(format!(
            "ssim over arrays of length {} and {}",
            x.len(),
            x_hat.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Usage("ssim needs at least two samples".into()));
    }
    if !(zeta1 > 0.0 && zeta2 > 0.0) {
        return Err(Error::Config("ssim stabilizers must be positive".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = x_hat.iter().sum::<f64>() / n;
    let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(x_hat) {
        let (da, db) = (a - mx, b - my);
        vx += da * da;
        vy += db * db;
        cov += da * db;
    }
    let (vx, vy, cov) = (vx / (n - 1.0), vy / (n - 1.0), cov / (n - 1.0));
    Ok((2.0 * mx * my + zeta1) * (2.0 * cov + zeta2)
        / ((mx * mx + my * my + zeta1) * (vx + vy + zeta2)))
}

/// Coefficients of `ξ = 1 − exp(−(k1 γ + b1)(k2 β + b2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateCoeffs {
    pub k1: f64,
    pub b1: f64,
    pub k2: f64,
    pub b2: f64,
}

impl Default for SurrogateCoeffs {
    fn default() -> Self {
        Self {
            k1: 0.1,
            b1: 0.5,
            k2: 2.0,
            b2: 0.1,
        }
    }
}

impl SurrogateCoeffs {
    /// Checks `k1, k2 > 0` and positivity of both factors for `γ ≥ 0`, `β ∈ (0, 1]`.
    pub fn validate(&self) -> Result<()> {
        let finite = [self.k1, self.b1, self.k2, self.b2].iter().all(|v| v.is_finite());
        // Both factors are affine and increasing, so their minima sit at γ = 0, β → 0.
        if !finite || self.k1 <= 0.0 || self.k2 <= 0.0 || self.b1 <= 0.0 || self.b2 < 0.0 {
            return Err(Error::Config(format!("surrogate coefficients out of domain: {self:?}")));
        }
        Ok(())
    }

    /// Unchecked evaluation for hot loops over already-validated coefficients.
    pub fn eval(&self, gamma: f64, beta: f64) -> f64 {
        1.0 - (-(self.k1 * gamma + self.b1) * (self.k2 * beta + self.b2)).exp()
    }
}

pub fn surrogate_similarity(coeffs: &SurrogateCoeffs, gamma: f64, beta: f64) -> Result<f64> {
    coeffs.validate()?;
    if !(gamma >= 0.0) || !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Config(format!("surrogate evaluated at γ={gamma}, β={beta}")));
    }
    Ok(coeffs.eval(gamma, beta))
}

/// Environment stand-in for measured similarity: per-pair log-normally
/// perturbed surrogate coefficients plus clamped Gaussian observation noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityGroundTruth {
    pub nominal: SurrogateCoeffs,
    pub perturb_sigma: f64,
    pub noise_sigma: f64,
    users: usize,
    /// `[tx][rx]`
    pair_coeffs: Vec<SurrogateCoeffs>,
}

impl FidelityGroundTruth {
    pub fn new(
        nominal: SurrogateCoeffs,
        perturb_sigma: f64,
        noise_sigma: f64,
        users: usize,
        seed: u64,
    ) -> Result<Self> {
        nominal.validate()?;
        if !(perturb_sigma >= 0.0 && noise_sigma >= 0.0) {
            return Err(Error::Config("ground-truth spreads must be >= 0".into()));
        }
        let mut rng = seed::rng(seed, &[seed::stream::PERTURB]);
        let normal = Normal::new(0.0, perturb_sigma).expect("finite spread");
        let mut pair_coeffs = Vec::with_capacity(users * users);
        for _ in 0..users * users {
            let mut f = || (normal.sample(&mut rng)).exp();
            pair_coeffs.push(SurrogateCoeffs {
                k1: nominal.k1 * f(),
                b1: nominal.b1 * f(),
                k2: nominal.k2 * f(),
                b2: nominal.b2 * f(),
            });
        }
        Ok(Self {
            nominal,
            perturb_sigma,
            noise_sigma,
            users,
            pair_coeffs,
        })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn pair_coeffs(&self, tx: usize, rx: usize) -> &SurrogateCoeffs {
        &self.pair_coeffs[tx * self.users + rx]
    }

    /// Noise-free truth for the pair.
    pub fn noiseless(&self, tx: usize, rx: usize, gamma: f64, beta: f64) -> f64 {
        self.pair_coeffs(tx, rx).eval(gamma, beta).clamp(0.0, 1.0)
    }

    /// Observed similarity given an explicit standard-normal draw `z`.
    pub fn observe(&self, tx: usize, rx: usize, gamma: f64, beta: f64, z: f64) -> f64 {
        (self.pair_coeffs(tx, rx).eval(gamma, beta) + self.noise_sigma * z).clamp(0.0, 1.0)
    }
}

/// One noisy ground-truth observation, deterministic in `seed`.
pub fn ground_truth_similarity(
    gt: &FidelityGroundTruth,
    tx: usize,
    rx: usize,
    gamma: f64,
    beta: f64,
    seed: u64,
) -> f64 {
    let mut rng = seed::rng(seed, &[seed::stream::XI_NOISE]);
    let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
    gt.observe(tx, rx, gamma, beta, z)
}

/// `Γ = W_c S_sem ξ / (β M)` in suts per second.
pub fn semantic_rate(w_c: f64, s_sem: f64, xi: f64, beta: f64, m: f64) -> Result<f64> {
    if beta <= 0.0 {
        return Err(Error::Usage("semantic rate with β = 0".into()));
    }
    if !(w_c > 0.0 && s_sem > 0.0 && m > 0.0) {
        return Err(Error::Config("bandwidth, S_sem and M must be positive".into()));
    }
    Ok(w_c * s_sem * xi / (beta * m))
}
