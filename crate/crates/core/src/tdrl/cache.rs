//! Scheduling-keyed table of calibrated fidelity models.
//!
//! A "model" here is one surrogate coefficient set per ordered user pair.
//! Calibration probes the ground truth under a schedule with random RIS
//! configurations and compression levels and fits the coefficients by
//! regularized least squares (log-parameters, prior centred on nominal).

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelRealization, RisConfig};
use crate::env::{Action, SchedulingMatrix, SlotModel};
use crate::error::{Error, Result};
use crate::semfidelity::{SurrogateCoeffs, LEVELS};
use crate::seed;

pub const DEFAULT_BUDGET: usize = 256;
/// Fewer probes than parameters cannot pin anything down.
pub const MIN_BUDGET: usize = 4;
/// Spread of the log-normal prior on each coefficient.
pub const PRIOR_SIGMA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    users: usize,
    /// `[tx][rx]`; pairs outside the schedule keep the nominal values.
    pub coeffs: Vec<SurrogateCoeffs>,
    pub created_step: u64,
    pub hits: u64,
}

impl CacheEntry {
    pub fn nominal(users: usize, nominal: SurrogateCoeffs, step: u64) -> Self {
        Self {
            users,
            coeffs: vec![nominal; users * users],
            created_step: step,
            hits: 0,
        }
    }

    pub fn pair(&self, tx: usize, rx: usize) -> &SurrogateCoeffs {
        &self.coeffs[tx * self.users + rx]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CacheTable {
    entries: BTreeMap<String, CacheEntry>,
    pub hits: u64,
    pub misses: u64,
    pub calibration_calls: u64,
    pub calibration_probes: u64,
}

impl CacheTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, b: &SchedulingMatrix) -> bool {
        self.entries.contains_key(&b.key())
    }

    /// Exact-match lookup; counts a hit or a miss.
    pub fn lookup(&mut self, b: &SchedulingMatrix) -> Option<&CacheEntry> {
        match self.entries.get_mut(&b.key()) {
            Some(e) => {
                e.hits += 1;
                self.hits += 1;
                Some(e)
            }
            None => {
                self.misses += 1;
                None
            }
        }
    }

    pub fn insert(&mut self, b: &SchedulingMatrix, entry: CacheEntry) -> Result<()> {
        let key = b.key();
        if self.entries.contains_key(&key) {
            return Err(Error::Usage(format!("cache already holds an entry for {key}")));
        }
        self.entries.insert(key, entry);
        Ok(())
    }

    /// Returns the entry for `b`, calibrating and inserting it on a miss.
    /// The flag is true on a hit.
    pub fn get_or_calibrate<F>(&mut self, b: &SchedulingMatrix, calibrate: F) -> Result<(CacheEntry, bool)>
    where
        F: FnOnce() -> Result<(CacheEntry, usize)>,
    {
        if let Some(e) = self.lookup(b) {
            return Ok((e.clone(), true));
        }
        let entry = self.record(calibrate)?;
        self.insert(b, entry.clone())?;
        Ok((entry, false))
    }

    /// Runs a calibration and counts it without touching the table.
    pub fn record<F>(&mut self, calibrate: F) -> Result<CacheEntry>
    where
        F: FnOnce() -> Result<(CacheEntry, usize)>,
    {
        let (entry, probes) = calibrate()?;
        self.calibration_calls += 1;
        self.calibration_probes += probes as u64;
        Ok(entry)
    }

    pub fn hit_rate(&self) -> f64 {
        let n = self.hits + self.misses;
        if n == 0 {
            0.0
        } else {
            self.hits as f64 / n as f64
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (&String, &CacheEntry)> {
        self.entries.iter()
    }
}

struct Probe {
    gamma: f64,
    beta: f64,
    xi: f64,
}

/// Calibrates per-pair coefficients for schedule `b` from `budget` probes of
/// the (noisy) ground truth. Returns the entry and the probes spent.
pub fn calibrate_entry(
    model: &SlotModel,
    real: &ChannelRealization,
    b: &SchedulingMatrix,
    budget: usize,
    step: u64,
    seed: u64,
) -> Result<(CacheEntry, usize)> {
    if budget < MIN_BUDGET {
        return Err(Error::Usage(format!("calibration budget {budget} below {MIN_BUDGET}")));
    }
    let nominal = model.truth.nominal;
    let mut entry = CacheEntry::nominal(model.users, nominal, step);
    let links = b.links();
    if links.is_empty() {
        return Ok((entry, 0));
    }
    let mut rng = seed::rng(seed, &[seed::stream::CALIBRATION]);
    let k = model.users;
    let mut data: Vec<Vec<Probe>> = (0..k * k).map(|_| Vec::new()).collect();
    for _ in 0..budget {
        let phi = RisConfig::from_bits((0..model.elements).map(|_| rng.random_range(0..2u8)).collect())?;
        let betas: Vec<u8> = links.iter().map(|_| rng.random_range(0..LEVELS as u8)).collect();
        let action = Action {
            schedule: b.clone(),
            phi,
            betas,
        };
        let mut r = real.clone();
        r.cascade(&action.phi, &model.phase)?;
        for e in model.link_evals(&r, &action)? {
            let z: f64 = StandardNormal.sample(&mut rng);
            let xi = model.truth.observe(e.link.tx, e.link.rx, e.gamma, e.beta, z);
            data[e.link.tx * k + e.link.rx].push(Probe {
                gamma: e.gamma,
                beta: e.beta,
                xi,
            });
        }
    }
    let noise = model.truth.noise_sigma.max(1e-3);
    for (pair, probes) in data.iter().enumerate() {
        if !probes.is_empty() {
            entry.coeffs[pair] = fit_pair(probes, &nominal, noise);
        }
    }
    Ok((entry, budget))
}

/// Levenberg-Marquardt on `u = ln(k1, b1, k2, b2)` with residuals
/// `(ξ − ξ̂)/σ` plus prior rows `(u − u₀)/PRIOR_SIGMA`. Observations clamped
/// at 0 or 1 carry no information about the level and are dropped.
fn fit_pair(probes: &[Probe], nominal: &SurrogateCoeffs, noise: f64) -> SurrogateCoeffs {
    let usable: Vec<&Probe> = probes.iter().filter(|p| p.xi > 1e-9 && p.xi < 1.0 - 1e-9).collect();
    let u0 = [nominal.k1.ln(), nominal.b1.ln(), nominal.k2.ln(), nominal.b2.max(1e-6).ln()];
    let rows = usable.len() + 4;
    let residuals = |u: &[f64; 4]| -> (DVector<f64>, DMatrix<f64>) {
        let [k1, b1, k2, b2] = u.map(f64::exp);
        let mut r = DVector::zeros(rows);
        let mut j = DMatrix::zeros(rows, 4);
        for (i, p) in usable.iter().enumerate() {
            let g1 = k1 * p.gamma + b1;
            let g2 = k2 * p.beta + b2;
            let e = (-g1 * g2).exp();
            r[i] = (p.xi - (1.0 - e)) / noise;
            // d r / d u = −(dξ̂/dθ · θ)/σ
            j[(i, 0)] = -e * g2 * p.gamma * k1 / noise;
            j[(i, 1)] = -e * g2 * b1 / noise;
            j[(i, 2)] = -e * g1 * p.beta * k2 / noise;
            j[(i, 3)] = -e * g1 * b2 / noise;
        }
        for a in 0..4 {
            r[usable.len() + a] = (u[a] - u0[a]) / PRIOR_SIGMA;
            j[(usable.len() + a, a)] = 1.0 / PRIOR_SIGMA;
        }
        (r, j)
    };
    let mut u = u0;
    let (mut r, mut jac) = residuals(&u);
    let mut cost = r.norm_squared();
    let mut damping = 1e-3;
    for _ in 0..100 {
        let jt = jac.transpose();
        let mut a = &jt * &jac;
        for d in 0..4 {
            a[(d, d)] *= 1.0 + damping;
        }
        let g = &jt * &r;
        let Some(delta) = a.cholesky().map(|c| c.solve(&g)) else {
            damping *= 10.0;
            continue;
        };
        let trial = [u[0] - delta[0], u[1] - delta[1], u[2] - delta[2], u[3] - delta[3]];
        let (tr, tj) = residuals(&trial);
        let tc = tr.norm_squared();
        if tc.is_finite() && tc < cost {
            let done = (cost - tc) < 1e-12 * cost.max(1.0);
            u = trial;
            r = tr;
            jac = tj;
            cost = tc;
            damping = (damping * 0.3).max(1e-12);
            if done {
                break;
            }
        } else {
            damping *= 10.0;
            if damping > 1e12 {
                break;
            }
        }
    }
    let [k1, b1, k2, b2] = u.map(f64::exp);
    let fitted = SurrogateCoeffs { k1, b1, k2, b2 };
    if fitted.validate().is_ok() {
        fitted
    } else {
        *nominal
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Env, Link};
    use crate::scenario::Scenario;

    fn exact_scenario() -> Scenario {
        let mut s = Scenario::preset("default").unwrap();
        s.fidelity.perturb_sigma = 0.0;
        s
    }

    fn some_b(users: usize, bands: usize) -> SchedulingMatrix {
        SchedulingMatrix::from_links(users, bands, &[Link { tx: 0, rx: 1, band: 0 }, Link { tx: 2, rx: 0, band: 1 }])
            .unwrap()
    }

    #[test]
    fn lookup_contract() {
        let mut t = CacheTable::new();
        let b = some_b(3, 2);
        assert!(t.lookup(&b).is_none());
        let e = CacheEntry::nominal(3, SurrogateCoeffs::default(), 0);
        t.insert(&b, e.clone()).unwrap();
        let got = t.lookup(&b).unwrap().clone();
        assert_eq!(got.coeffs, e.coeffs);
        assert_eq!(got.hits, 1);
        assert_eq!(t.calibration_calls, 0);
        assert!(t.insert(&b, e).is_err());

        let other = SchedulingMatrix::from_links(3, 2, &[Link { tx: 0, rx: 1, band: 0 }]).unwrap();
        assert_ne!(other.key(), b.key());
        assert!(t.lookup(&other).is_none());
    }

    #[test]
    fn get_or_calibrate_counts() {
        let mut t = CacheTable::new();
        let b = some_b(3, 2);
        let cal = || Ok((CacheEntry::nominal(3, SurrogateCoeffs::default(), 5), 10));
        let (_, hit) = t.get_or_calibrate(&b, cal).unwrap();
        assert!(!hit);
        let (_, hit) = t.get_or_calibrate(&b, || panic!("hit must not calibrate")).unwrap();
        assert!(hit);
        assert_eq!((t.calibration_calls, t.calibration_probes, t.len()), (1, 10, 1));
        assert_eq!((t.hits, t.misses), (1, 1));
    }

    #[test]
    fn recovers_nominal_without_perturbation() {
        let env = Env::new(&exact_scenario(), 3).unwrap();
        let b = some_b(3, 2);
        let (e, probes) = calibrate_entry(env.model(), env.realization(), &b, 256, 0, 9).unwrap();
        assert_eq!(probes, 256);
        let n = SurrogateCoeffs::default();
        for l in b.links() {
            let c = e.pair(l.tx, l.rx);
            for (got, want) in [(c.k1, n.k1), (c.b1, n.b1), (c.k2, n.k2), (c.b2, n.b2)] {
                assert!(((got - want) / want).abs() < 0.05, "{c:?}");
            }
        }
    }

    #[test]
    fn fit_tracks_perturbed_truth() {
        let mut s = Scenario::preset("default").unwrap();
        s.fidelity.perturb_sigma = 0.2;
        let env = Env::new(&s, 4).unwrap();
        let m = env.model();
        let b = some_b(3, 2);
        let (e, _) = calibrate_entry(m, env.realization(), &b, 256, 0, 1).unwrap();
        // compare predicted similarity rather than raw coefficients
        let mut worst_fit: f64 = 0.0;
        let mut worst_nominal: f64 = 0.0;
        for l in b.links() {
            let truth = m.truth.pair_coeffs(l.tx, l.rx);
            for gamma in [0.5, 2.0, 10.0, 50.0] {
                for beta in [0.125, 0.5, 1.0] {
                    worst_fit = worst_fit.max((e.pair(l.tx, l.rx).eval(gamma, beta) - truth.eval(gamma, beta)).abs());
                    worst_nominal = worst_nominal.max((m.truth.nominal.eval(gamma, beta) - truth.eval(gamma, beta)).abs());
                }
            }
        }
        assert!(worst_fit < worst_nominal, "fit {worst_fit} nominal {worst_nominal}");
    }

    #[test]
    fn idle_schedule_gives_nominal() {
        let env = Env::new(&exact_scenario(), 3).unwrap();
        let b = SchedulingMatrix::empty(3, 2);
        let (e, probes) = calibrate_entry(env.model(), env.realization(), &b, 256, 7, 9).unwrap();
        assert_eq!(probes, 0);
        assert!(e.coeffs.iter().all(|c| *c == SurrogateCoeffs::default()));
        assert_eq!(e.created_step, 7);
    }

    #[test]
    fn deterministic_and_budget_checked() {
        let env = Env::new(&Scenario::preset("default").unwrap(), 3).unwrap();
        let b = some_b(3, 2);
        let run = || calibrate_entry(env.model(), env.realization(), &b, 64, 0, 5).unwrap();
        assert_eq!(run(), run());
        assert!(calibrate_entry(env.model(), env.realization(), &b, 2, 0, 5).is_err());
    }
}
