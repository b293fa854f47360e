//! Semantic-processing, transmission and RIS energy over one unit slot, and
//! the energy-efficiency objective.
//!
//! Transmission time is `t_d = L / W_c` with `L` symbols sent at one symbol
//! per hertz per second.

use serde::{Deserialize, Serialize};

use crate::env::SchedulingMatrix;
use crate::error::{Error, Result};
use crate::semfidelity::beta_from_index;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    /// Processing power, W.
    pub p_s: f64,
    /// FLOPs per cycle.
    pub n_g: f64,
    /// Clock, Hz.
    pub f_g: f64,
    /// Transmit power, W.
    pub p_d: f64,
    /// RIS energy per element per slot, J.
    pub e_r: f64,
    /// FLOPs of a depth-0 encode/decode.
    pub f0: f64,
    pub flop_growth: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            p_s: 50.0,
            n_g: 1000.0,
            f_g: 1e9,
            p_d: 10.0,
            e_r: 1e-3,
            f0: 1e8,
            flop_growth: 0.75,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        let v = [self.p_s, self.n_g, self.f_g, self.p_d, self.e_r, self.f0, self.flop_growth];
        if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::Config(format!("energy parameters must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub e_s: f64,
    pub e_t: f64,
    pub e_r: f64,
    pub total: f64,
    pub eta: f64,
}

/// `F = F0 Σ_{j=0..=i} growth^j`.
pub fn flops(index: u8, params: &EnergyParams) -> f64 {
    (0..=index as i32).map(|j| params.flop_growth.powi(j)).sum::<f64>() * params.f0
}

/// Processing energy of one link at compression index `index`.
pub fn link_processing_energy(index: u8, params: &EnergyParams) -> f64 {
    params.p_s * flops(index, params) / (params.n_g * params.f_g)
}

/// Transmission energy of one link: `p_d ceil(β M) / W_c`.
pub fn link_transmit_energy(index: u8, params: &EnergyParams, w_c: f64, m: f64) -> Result<f64> {
    let beta = beta_from_index(index)?;
    Ok(params.p_d * (beta * m).ceil() / w_c)
}

/// Energy of a slot. `indices` gives one compression index per active link
/// in canonical order; `bandwidths[c]` is the width of band `c`.
pub fn energy_breakdown(
    schedule: &SchedulingMatrix,
    indices: &[u8],
    elements: usize,
    params: &EnergyParams,
    bandwidths: &[f64],
    m: f64,
) -> Result<EnergyBreakdown> {
    let links = schedule.links();
    if links.len() != indices.len() {
        return Err(Error::Usage(format!(
            "{} compression indices for {} active links",
            indices.len(),
            links.len()
        )));
    }
    let (mut e_s, mut e_t) = (0.0, 0.0);
    for (l, &i) in links.iter().zip(indices) {
        e_s += link_processing_energy(i, params);
        e_t += link_transmit_energy(i, params, bandwidths[l.band], m)?;
    }
    let e_r = elements as f64 * params.e_r;
    Ok(EnergyBreakdown {
        e_s,
        e_t,
        e_r,
        total: e_s + e_t + e_r,
        eta: 0.0,
    })
}

/// `η = Σ Γ / (E_s + E_t + E_r)`; also stores it in the breakdown.
pub fn energy_efficiency(aggregate_rate: f64, breakdown: &mut EnergyBreakdown) -> Result<f64> {
    if !(breakdown.total > 0.0) {
        return Err(Error::Usage("energy efficiency with zero total energy".into()));
    }
    breakdown.eta = aggregate_rate / breakdown.total;
    Ok(breakdown.eta)
}
