use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Logistic ON/OFF phase-response constants of a 1-bit RIS element.
///
/// The phase on band `c` is `D / (1 + exp(a c + b))` for the selected state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseResponseParams {
    pub d_on: f64,
    pub a_on: f64,
    pub b_on: f64,
    pub d_off: f64,
    pub a_off: f64,
    pub b_off: f64,
}

impl Default for PhaseResponseParams {
    fn default() -> Self {
        Self {
            d_on: 5.0,
            a_on: -0.5,
            b_on: 1.0,
            d_off: 3.0,
            a_off: -0.3,
            b_off: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementState {
    On,
    Off,
}

impl PhaseResponseParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.d_on, self.a_on, self.b_on, self.d_off, self.a_off, self.b_off,
        ];
        if all.iter().any(|v| !v.is_finite()) || self.d_on <= 0.0 || self.d_off <= 0.0 {
            return Err(Error::Config(format!(
                "phase response constants must be finite with D > 0: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Phase (radians) applied by an element in `state` on band `band` (1-based).
pub fn phase_response(params: &PhaseResponseParams, band: usize, state: ElementState) -> f64 {
    let c = band as f64;
    let (d, a, b) = match state {
        ElementState::On => (params.d_on, params.a_on, params.b_on),
        ElementState::Off => (params.d_off, params.a_off, params.b_off),
    };
    d / (1.0 + (a * c + b).exp())
}

/// Planar `P × Q` array with element spacing `spacing` metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RisGeometry {
    pub p: usize,
    pub q: usize,
    pub spacing: f64,
}

impl RisGeometry {
    pub fn new(p: usize, q: usize, spacing: f64) -> Result<Self> {
        let g = Self { p, q, spacing };
        g.validate()?;
        Ok(g)
    }

    /// Zero-element surface, used to model "no RIS".
    pub fn empty() -> Self {
        Self {
            p: 0,
            q: 0,
            spacing: 0.0,
        }
    }

    /// Closest-to-square factorisation of `n` elements.
    pub fn square(n: usize, spacing: f64) -> Self {
        if n == 0 {
            return Self::empty();
        }
        let mut p = (n as f64).sqrt().floor() as usize;
        while n % p != 0 {
            p -= 1;
        }
        Self {
            p,
            q: n / p,
            spacing,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if (self.p == 0) != (self.q == 0) {
            return Err(Error::Config(format!(
                "RIS grid {}x{} must have both sides positive (or both zero)",
                self.p, self.q
            )));
        }
        if self.p > 0 && !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(Error::Config("RIS element spacing must be positive".into()));
        }
        Ok(())
    }

    pub fn elements(&self) -> usize {
        self.p * self.q
    }
}

/// Binary ON (1) / OFF (0) state of every element.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RisConfig {
    phi: Vec<u8>,
}

impl RisConfig {
    pub fn all_off(n: usize) -> Self {
        Self { phi: vec![0; n] }
    }

    pub fn from_bits(phi: Vec<u8>) -> Result<Self> {
        if phi.iter().any(|&b| b > 1) {
            return Err(Error::Config("RIS configuration entries must be 0 or 1".into()));
        }
        Ok(Self { phi })
    }

    /// Element `n` takes bit `n` of `mask` (for enumeration, `n < 64`).
    pub fn from_mask(mask: u64, n: usize) -> Self {
        Self {
            phi: (0..n).map(|i| ((mask >> i) & 1) as u8).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.phi
    }

    pub fn is_on(&self, n: usize) -> bool {
        self.phi[n] == 1
    }

    pub fn toggle(&mut self, n: usize) {
        self.phi[n] ^= 1;
    }

    pub fn set(&mut self, n: usize, on: bool) {
        self.phi[n] = on as u8;
    }
}

/// Diagonal of the reflection matrix on band `band` (1-based).
pub fn reflection_matrix(
    config: &RisConfig,
    params: &PhaseResponseParams,
    band: usize,
) -> Vec<Complex64> {
    let on = Complex64::from_polar(1.0, phase_response(params, band, ElementState::On));
    let off = Complex64::from_polar(1.0, phase_response(params, band, ElementState::Off));
    config
        .bits()
        .iter()
        .map(|&b| if b == 1 { on } else { off })
        .collect()
}

/// Array response for arrival angles `(upsilon, delta)` at carrier `freq_hz`.
///
/// Entry `m * Q + n` is `exp(j 2π f d_s (m sinυ cosδ + n sinδ) / c)`.
pub fn array_response(geometry: &RisGeometry, upsilon: f64, delta: f64, freq_hz: f64) -> Vec<Complex64> {
    let k = 2.0 * std::f64::consts::PI * freq_hz * geometry.spacing / SPEED_OF_LIGHT;
    let (h, v) = (upsilon.sin() * delta.cos(), delta.sin());
    let mut out = Vec::with_capacity(geometry.elements());
    for m in 0..geometry.p {
        for n in 0..geometry.q {
            out.push(Complex64::from_polar(1.0, k * (m as f64 * h + n as f64 * v)));
        }
    }
    out
}
