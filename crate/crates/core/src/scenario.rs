//! Scenario files: geometry, radio, fidelity, energy and MDP settings.
//!
//! Every field has a default, so a scenario file only lists what differs from
//! [`Scenario::default`]. Two presets ship with the crate: [`Scenario::default`]
//! (3 users, 2 bands, 16 elements, block fading) and [`Scenario::tiny`]
//! (2 users, 1 band, 4 elements, one frozen realization).

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{BandPlan, PhaseResponseParams, RisGeometry, UserTopology};
use crate::energy::EnergyParams;
use crate::error::{Error, Result};
use crate::semfidelity::SurrogateCoeffs;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ring {
    pub count: usize,
    pub radius: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum UsersSpec {
    Ring { ring: Ring },
    Positions(Vec<[f64; 2]>),
}

impl UsersSpec {
    pub fn count(&self) -> usize {
        match self {
            UsersSpec::Ring { ring } => ring.count,
            UsersSpec::Positions(p) => p.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RisSpec {
    pub p: usize,
    pub q: usize,
    /// Element spacing in metres; half a carrier wavelength when absent.
    pub spacing: Option<f64>,
    pub height: f64,
    pub position: [f64; 2],
}

impl Default for RisSpec {
    fn default() -> Self {
        Self {
            p: 4,
            q: 4,
            spacing: None,
            height: 10.0,
            position: [0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fading {
    /// Fresh realization every step.
    Block,
    /// One realization per environment seed, reused for every step.
    Static,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FidelitySpec {
    pub nominal: SurrogateCoeffs,
    pub perturb_sigma: f64,
    pub noise_sigma: f64,
}

impl Default for FidelitySpec {
    fn default() -> Self {
        Self {
            nominal: SurrogateCoeffs::default(),
            perturb_sigma: 0.1,
            noise_sigma: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergySpec {
    pub p_s: f64,
    pub n_g: f64,
    pub f_g: f64,
    pub e_r: f64,
    pub f0: f64,
    pub flop_growth: f64,
}

impl Default for EnergySpec {
    fn default() -> Self {
        let e = EnergyParams::default();
        Self {
            p_s: e.p_s,
            n_g: e.n_g,
            f_g: e.f_g,
            e_r: e.e_r,
            f0: e.f0,
            flop_growth: e.flop_growth,
        }
    }
}

/// MDP settings. Rates and efficiencies in the reward are divided by the
/// reference values; when absent they come from an ideal single link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvSpec {
    /// Minimum windowed rate per user as a fraction of the reference rate.
    pub gamma_min_fraction: f64,
    pub penalty: f64,
    pub window: usize,
    pub episode_len: usize,
    pub eta_ref: Option<f64>,
    pub gamma_ref: Option<f64>,
    /// Observation noise on ground-truth similarity (off = noiseless truth).
    pub xi_noise: bool,
}

impl Default for EnvSpec {
    fn default() -> Self {
        Self {
            gamma_min_fraction: 0.1,
            penalty: 10.0,
            window: 50,
            episode_len: 128,
            eta_ref: None,
            gamma_ref: None,
            xi_noise: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub name: String,
    pub users: UsersSpec,
    pub ris: RisSpec,
    pub bands: usize,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub kappa: f64,
    pub noise_dbm_hz: f64,
    pub tx_power_dbm: f64,
    pub phase: PhaseResponseParams,
    pub fidelity: FidelitySpec,
    pub energy: EnergySpec,
    /// Raw symbols per source item.
    pub symbols: f64,
    /// Semantic content as a fraction of `symbols`.
    pub semantic_fraction: f64,
    pub fading: Fading,
    pub env: EnvSpec,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "default".into(),
            users: UsersSpec::Ring {
                ring: Ring {
                    count: 3,
                    radius: 40.0,
                    phase: 0.3,
                },
            },
            ris: RisSpec::default(),
            bands: 2,
            carrier_hz: 3.5e9,
            bandwidth_hz: 20e6,
            kappa: 10.0,
            noise_dbm_hz: -174.0,
            tx_power_dbm: 40.0,
            phase: PhaseResponseParams::default(),
            fidelity: FidelitySpec::default(),
            energy: EnergySpec::default(),
            symbols: 65536.0,
            semantic_fraction: 0.25,
            fading: Fading::Block,
            env: EnvSpec::default(),
        }
    }
}

impl Scenario {
    /// Two users, one band, a 2x2 surface and a frozen channel.
    ///
    /// A single band carries at most one link, so no per-user rate floor can
    /// hold at every step; the floor is disabled here.
    pub fn tiny() -> Self {
        Self {
            name: "tiny".into(),
            users: UsersSpec::Ring {
                ring: Ring {
                    count: 2,
                    radius: 40.0,
                    phase: 0.3,
                },
            },
            ris: RisSpec {
                p: 2,
                q: 2,
                ..RisSpec::default()
            },
            bands: 1,
            fading: Fading::Static,
            env: EnvSpec {
                gamma_min_fraction: 0.0,
                episode_len: 32,
                ..EnvSpec::default()
            },
            ..Self::default()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "default" => Some(Self::default()),
            "tiny" => Some(Self::tiny()),
            _ => None,
        }
    }

    /// Loads a JSON file, or a preset when `path` is `preset:<name>`.
    pub fn load(path: &Path) -> Result<Self> {
        if let Some(name) = path.to_str().and_then(|s| s.strip_prefix("preset:")) {
            return Self::preset(name)
                .ok_or_else(|| Error::Config(format!("unknown scenario preset {name:?}")));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let s: Self = serde_json::from_str(&text).map_err(|e| Error::parse(path, &e))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("scenario serializes")))
    }

    pub fn user_count(&self) -> usize {
        self.users.count()
    }

    pub fn elements(&self) -> usize {
        self.ris.p * self.ris.q
    }

    /// Replaces the surface by the closest-to-square grid with `n` elements.
    pub fn with_elements(mut self, n: usize) -> Self {
        let g = RisGeometry::square(n, 1.0);
        self.ris.p = g.p;
        self.ris.q = g.q;
        self
    }

    /// Replaces the user set by a ring with `count` users, keeping the radius.
    pub fn with_users(mut self, count: usize) -> Self {
        let (radius, phase) = match &self.users {
            UsersSpec::Ring { ring } => (ring.radius, ring.phase),
            UsersSpec::Positions(p) if !p.is_empty() => {
                let r = p.iter().map(|u| u[0].hypot(u[1])).sum::<f64>() / p.len() as f64;
                (r, 0.0)
            }
            UsersSpec::Positions(_) => (40.0, 0.0),
        };
        self.users = UsersSpec::Ring {
            ring: Ring {
                count,
                radius,
                phase,
            },
        };
        self
    }

    pub fn topology(&self) -> UserTopology {
        let mut t = match &self.users {
            UsersSpec::Ring { ring } => {
                UserTopology::ring(ring.count, ring.radius, ring.phase, self.ris.height)
            }
            UsersSpec::Positions(p) => UserTopology {
                users: p.clone(),
                ris: [0.0, 0.0],
                ris_height: self.ris.height,
            },
        };
        if let UsersSpec::Ring { .. } = self.users {
            for u in &mut t.users {
                u[0] += self.ris.position[0];
                u[1] += self.ris.position[1];
            }
        }
        t.ris = self.ris.position;
        t
    }

    pub fn band_plan(&self) -> BandPlan {
        BandPlan {
            carrier_hz: self.carrier_hz,
            bandwidth_hz: self.bandwidth_hz,
            bands: self.bands,
        }
    }

    pub fn geometry(&self) -> RisGeometry {
        let spacing = self
            .ris
            .spacing
            .unwrap_or_else(|| self.band_plan().wavelength() / 2.0);
        RisGeometry {
            p: self.ris.p,
            q: self.ris.q,
            spacing,
        }
    }

    pub fn energy_params(&self) -> EnergyParams {
        let e = &self.energy;
        EnergyParams {
            p_s: e.p_s,
            n_g: e.n_g,
            f_g: e.f_g,
            p_d: crate::channel::dbm_to_watts(self.tx_power_dbm),
            e_r: e.e_r,
            f0: e.f0,
            flop_growth: e.flop_growth,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.user_count();
        if k < 2 {
            return Err(Error::Config(format!("need at least 2 users, got {k}")));
        }
        if self.bands == 0 {
            return Err(Error::Config("need at least one band".into()));
        }
        let positive = [
            ("carrier_hz", self.carrier_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("symbols", self.symbols),
            ("semantic_fraction", self.semantic_fraction),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.kappa >= 0.0) {
            return Err(Error::Config("kappa must be >= 0".into()));
        }
        if !(self.env.penalty >= 0.0 && self.env.gamma_min_fraction >= 0.0) {
            return Err(Error::Config("penalty and gamma_min_fraction must be >= 0".into()));
        }
        if self.env.window == 0 || self.env.episode_len == 0 {
            return Err(Error::Config("window and episode_len must be positive".into()));
        }
        for (name, v) in [("eta_ref", self.env.eta_ref), ("gamma_ref", self.env.gamma_ref)] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::Config(format!("{name} must be positive")));
                }
            }
        }
        self.phase.validate()?;
        self.geometry().validate()?;
        self.topology().validate()?;
        self.fidelity.nominal.validate()?;
        self.energy_params().validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_fills_defaults() {
        let s: Scenario = serde_json::from_str(r#"{"bands": 3, "ris": {"p": 2}}"#).unwrap();
        assert_eq!(s.bands, 3);
        assert_eq!((s.ris.p, s.ris.q), (2, 4));
        assert_eq!(s.user_count(), 3);
    }

    #[test]
    fn explicit_positions() {
        let s: Scenario =
            serde_json::from_str(r#"{"users": [[10.0, 0.0], [0.0, 20.0]]}"#).unwrap();
        assert_eq!(s.user_count(), 2);
        assert!((s.topology().distance(0) - 200f64.sqrt()).abs() < 1e-12);
        s.validate().unwrap();
    }

    #[test]
    fn presets_validate_and_roundtrip() {
        for s in [Scenario::default(), Scenario::tiny()] {
            s.validate().unwrap();
            let back: Scenario = serde_json::from_str(&s.to_json()).unwrap();
            assert_eq!(back, s);
            assert_eq!(back.hash(), s.hash());
        }
        assert_eq!(Scenario::tiny().elements(), 4);
        assert_ne!(Scenario::tiny().hash(), Scenario::default().hash());
    }

    #[test]
    fn sweep_helpers() {
        let s = Scenario::default().with_elements(36).with_users(4);
        assert_eq!((s.ris.p, s.ris.q), (6, 6));
        assert_eq!(s.user_count(), 4);
        assert!((s.geometry().spacing - 299_792_458.0 / 3.5e9 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn bad_scenarios_rejected() {
        let mut s = Scenario::default();
        s.bands = 0;
        assert!(s.validate().is_err());
        let s: Scenario = serde_json::from_str(r#"{"users": [[0.0, 0.0]]}"#).unwrap();
        assert!(s.validate().is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        std::fs::write(&p, "{\n  \"bands\": 2,\n  \"kappa\": oops\n}").unwrap();
        match Scenario::load(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            Scenario::load(&dir.path().join("missing.json")),
            Err(Error::Io { .. })
        ));
    }
}
