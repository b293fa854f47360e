use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ris::{array_response, reflection_matrix, PhaseResponseParams, RisConfig, RisGeometry};
use crate::error::{Error, Result};
use crate::seed;

/// Ground positions of the users and the RIS (metres); the RIS sits `ris_height`
/// above its ground point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserTopology {
    pub users: Vec<[f64; 2]>,
    pub ris: [f64; 2],
    pub ris_height: f64,
}

impl UserTopology {
    /// `count` users evenly spaced on a circle of `radius` around the RIS.
    pub fn ring(count: usize, radius: f64, phase: f64, ris_height: f64) -> Self {
        let users = (0..count)
            .map(|k| {
                let a = phase + 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                [radius * a.cos(), radius * a.sin()]
            })
            .collect();
        Self {
            users,
            ris: [0.0, 0.0],
            ris_height,
        }
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for k in 0..self.len() {
            let d = self.distance(k);
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::Config(format!("user {} has distance {d} to the RIS", k + 1)));
            }
        }
        Ok(())
    }

    fn offsets(&self, k: usize) -> (f64, f64) {
        (self.users[k][0] - self.ris[0], self.users[k][1] - self.ris[1])
    }

    /// Straight-line user-RIS distance in metres.
    pub fn distance(&self, k: usize) -> f64 {
        let (dx, dy) = self.offsets(k);
        (dx * dx + dy * dy + self.ris_height * self.ris_height).sqrt()
    }

    /// Azimuth `υ` and elevation `δ` of user `k` as seen from the RIS.
    pub fn angles(&self, k: usize) -> (f64, f64) {
        let (dx, dy) = self.offsets(k);
        (dy.atan2(dx), self.ris_height.atan2(dx.hypot(dy)))
    }
}

/// Sub-band centre frequencies: band `c` (0-based) sits at `carrier + c·W`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPlan {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub bands: usize,
}

impl BandPlan {
    pub fn frequency(&self, band: usize) -> f64 {
        self.carrier_hz + band as f64 * self.bandwidth_hz
    }

    pub fn wavelength(&self) -> f64 {
        super::ris::SPEED_OF_LIGHT / self.carrier_hz
    }
}

/// Pathloss `128.1 + 37.6 log10(d_km)` dB as an amplitude factor.
pub fn pathloss_amplitude(distance_m: f64) -> f64 {
    let db = 128.1 + 37.6 * (distance_m / 1000.0).log10();
    10f64.powf(-db / 20.0)
}

/// One block of user-RIS channels plus the cascaded gains for the last
/// configuration passed to [`ChannelRealization::cascade`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    users: usize,
    bands: usize,
    elements: usize,
    /// `[user][band][element]`
    g: Vec<Complex64>,
    /// `[tx][rx][band]`
    h: Vec<Complex64>,
    pub kappa: f64,
    /// Per-user NLoS scatter power (equal to the pathloss power).
    pub sigma2_nlos: Vec<f64>,
}

/// Draws Rician user-RIS channels. Uses only `seed`, so equal seeds give
/// bit-identical realizations.
pub fn draw_channels(
    topology: &UserTopology,
    geometry: &RisGeometry,
    plan: &BandPlan,
    kappa: f64,
    seed: u64,
) -> Result<ChannelRealization> {
    if !(kappa >= 0.0) {
        return Err(Error::Config(format!("Rician factor must be >= 0, got {kappa}")));
    }
    topology.validate()?;
    geometry.validate()?;
    let mut rng = seed::rng(seed, &[seed::stream::CHANNEL]);
    let n = geometry.elements();
    let k_users = topology.len();
    let los_w = (kappa / (kappa + 1.0)).sqrt();
    let nlos_w = (1.0 / (kappa + 1.0)).sqrt();
    let mut g = Vec::with_capacity(k_users * plan.bands * n);
    let mut sigma2 = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let alpha = pathloss_amplitude(topology.distance(k));
        let s2 = alpha * alpha;
        sigma2.push(s2);
        let normal = Normal::new(0.0, (s2 / 2.0).sqrt()).expect("finite std");
        let (ups, del) = topology.angles(k);
        for c in 0..plan.bands {
            let a = array_response(geometry, ups, del, plan.frequency(c));
            for los in a {
                let nlos = Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
                g.push(los * (los_w * alpha) + nlos * nlos_w);
            }
        }
    }
    Ok(ChannelRealization {
        users: k_users,
        bands: plan.bands,
        elements: n,
        g,
        h: vec![Complex64::new(0.0, 0.0); k_users * k_users * plan.bands],
        kappa,
        sigma2_nlos: sigma2,
    })
}

impl ChannelRealization {
    /// Realization from explicit user-RIS vectors `g[user][band][element]`.
    pub fn from_user_channels(
        users: usize,
        bands: usize,
        elements: usize,
        g: Vec<Complex64>,
    ) -> Result<Self> {
        if g.len() != users * bands * elements {
            return Err(Error::Config(format!(
                "{} channel taps for {users} users x {bands} bands x {elements} elements",
                g.len()
            )));
        }
        Ok(Self {
            users,
            bands,
            elements,
            g,
            h: vec![Complex64::new(0.0, 0.0); users * users * bands],
            kappa: f64::NAN,
            sigma2_nlos: vec![f64::NAN; users],
        })
    }

    /// Realization with cascaded gains given directly (`[tx][rx][band]`),
    /// for link-level tests that bypass the RIS.
    pub fn from_gains(users: usize, bands: usize, h: Vec<Complex64>) -> Result<Self> {
        if h.len() != users * users * bands {
            return Err(Error::Config("gain tensor has the wrong size".into()));
        }
        Ok(Self {
            users,
            bands,
            elements: 0,
            g: Vec::new(),
            h,
            kappa: f64::NAN,
            sigma2_nlos: vec![f64::NAN; users],
        })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn elements(&self) -> usize {
        self.elements
    }

    pub fn user_channel(&self, user: usize, band: usize) -> &[Complex64] {
        let start = (user * self.bands + band) * self.elements;
        &self.g[start..start + self.elements]
    }

    pub fn gain(&self, tx: usize, rx: usize, band: usize) -> Complex64 {
        self.h[(tx * self.users + rx) * self.bands + band]
    }

    pub fn gains(&self) -> &[Complex64] {
        &self.h
    }

    /// Recomputes `h[r][k][c] = g_rᵀ Φ_c g_k` for every pair; the value is
    /// computed once per unordered pair and mirrored, so reciprocity is exact.
    pub fn cascade(&mut self, config: &RisConfig, params: &PhaseResponseParams) -> Result<()> {
        if config.len() != self.elements {
            return Err(Error::Usage(format!(
                "RIS configuration has {} elements, realization has {}",
                config.len(),
                self.elements
            )));
        }
        for c in 0..self.bands {
            let phi = reflection_matrix(config, params, c + 1);
            for r in 0..self.users {
                for k in r + 1..self.users {
                    let v = bilinear(self.user_channel(r, c), &phi, self.user_channel(k, c));
                    self.h[(r * self.users + k) * self.bands + c] = v;
                    self.h[(k * self.users + r) * self.bands + c] = v;
                }
            }
        }
        Ok(())
    }

    /// `g_rᵀ Φ_c g_k` for one pair without touching the stored gains.
    pub fn pair_gain(
        &self,
        config: &RisConfig,
        params: &PhaseResponseParams,
        r: usize,
        k: usize,
        band: usize,
    ) -> Complex64 {
        let (a, b) = if r <= k { (r, k) } else { (k, r) };
        let phi = reflection_matrix(config, params, band + 1);
        bilinear(self.user_channel(a, band), &phi, self.user_channel(b, band))
    }
}

fn bilinear(a: &[Complex64], phi: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter()
        .zip(phi)
        .zip(b)
        .map(|((x, p), y)| x * p * y)
        .sum()
}

/// Enumerates all `2^N` configurations (N ≤ 20) and returns the one that
/// maximizes `|h_{r,k,c}|²`, with the lowest mask winning ties.
pub fn best_phase_exhaustive(
    realization: &ChannelRealization,
    params: &PhaseResponseParams,
    r: usize,
    k: usize,
    band: usize,
) -> Result<(RisConfig, f64)> {
    let n = realization.elements();
    if n > 20 {
        return Err(Error::BudgetExceeded {
            cardinality: 1u128 << n,
            budget: 1 << 20,
        });
    }
    let mut best = (0u64, f64::NEG_INFINITY);
    for mask in 0..(1u64 << n) {
        let cfg = RisConfig::from_mask(mask, n);
        let p = realization.pair_gain(&cfg, params, r, k, band).norm_sqr();
        if p > best.1 {
            best = (mask, p);
        }
    }
    Ok((RisConfig::from_mask(best.0, n), best.1))
}

/// Convenience: a standard complex normal sample `CN(0, var)`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let d = Normal::new(0.0, (var / 2.0).sqrt()).expect("finite std");
    Complex64::new(d.sample(rng), d.sample(rng))
}
