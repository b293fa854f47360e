//! The scheduling MDP: slot evaluation, reward with a windowed rate floor,
//! observations and episode bookkeeping.

mod log;
pub mod schedule;

use std::collections::VecDeque;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use log::StepLogWriter;
pub use schedule::{Link, SchedulingMatrix, Violation};

use crate::channel::{
    self, draw_channels, BandPlan, ChannelRealization, PhaseResponseParams, RisConfig,
    RisGeometry, UserTopology,
};
use crate::energy::{self, EnergyBreakdown, EnergyParams};
use crate::error::{Error, Result};
use crate::scenario::{Fading, Scenario};
use crate::semfidelity::{self, FidelityGroundTruth};
use crate::seed;

/// A fully decoded, half-duplex-valid action.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub schedule: SchedulingMatrix,
    pub phi: RisConfig,
    /// One compression index per active link, canonical order.
    pub betas: Vec<u8>,
}

impl Action {
    pub fn idle(users: usize, bands: usize, elements: usize) -> Self {
        Self {
            schedule: SchedulingMatrix::empty(users, bands),
            phi: RisConfig::all_off(elements),
            betas: Vec::new(),
        }
    }
}

/// Per-link radio state before fidelity is known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkEval {
    pub link: Link,
    pub index: u8,
    pub beta: f64,
    pub gamma: f64,
    /// `p_t |h|²` of the link itself.
    pub signal: f64,
    /// Sum of interfering powers at the receiver.
    pub interference: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkOutcome {
    pub eval: LinkEval,
    pub xi: f64,
    pub rate: f64,
}

/// Physics of one slot on a given realization.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotEval {
    pub links: Vec<LinkOutcome>,
    pub energy: EnergyBreakdown,
    /// Total rate each user sends, indexed by transmitter.
    pub user_rates: Vec<f64>,
    pub aggregate_rate: f64,
    pub eta: f64,
}

impl SlotEval {
    pub fn mean_xi(&self) -> f64 {
        if self.links.is_empty() {
            0.0
        } else {
            self.links.iter().map(|l| l.xi).sum::<f64>() / self.links.len() as f64
        }
    }

    /// True when every user's slot rate reaches `gamma_min`.
    pub fn meets_floor(&self, gamma_min: f64) -> bool {
        self.user_rates.iter().all(|&r| r >= gamma_min)
    }
}

/// Everything needed to score a slot, resolved from a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotModel {
    pub users: usize,
    pub bands: usize,
    pub elements: usize,
    pub phase: PhaseResponseParams,
    pub bandwidth: f64,
    pub p_t: f64,
    /// Noise power per band, W.
    pub sigma2: f64,
    pub truth: FidelityGroundTruth,
    pub energy: EnergyParams,
    pub symbols: f64,
    pub s_sem: f64,
    pub eta_ref: f64,
    pub gamma_ref: f64,
    pub gamma_min: f64,
    pub penalty: f64,
    pub window: usize,
    pub episode_len: usize,
    pub xi_noise: bool,
}

impl SlotModel {
    pub fn new(scenario: &Scenario, seed: u64) -> Result<Self> {
        scenario.validate()?;
        let energy = scenario.energy_params();
        let users = scenario.user_count();
        let elements = scenario.elements();
        let bandwidth = scenario.bandwidth_hz;
        let s_sem = scenario.semantic_fraction * scenario.symbols;
        let truth = FidelityGroundTruth::new(
            scenario.fidelity.nominal,
            scenario.fidelity.perturb_sigma,
            scenario.fidelity.noise_sigma,
            users,
            seed,
        )?;
        // Reference link: ξ = 1, β = 1, no interference.
        let ideal_rate = semfidelity::semantic_rate(bandwidth, s_sem, 1.0, 1.0, scenario.symbols)?;
        let ideal_energy = energy::link_processing_energy(0, &energy)
            + energy::link_transmit_energy(0, &energy, bandwidth, scenario.symbols)?
            + elements as f64 * energy.e_r;
        let gamma_ref = scenario.env.gamma_ref.unwrap_or(ideal_rate);
        Ok(Self {
            users,
            bands: scenario.bands,
            elements,
            phase: scenario.phase,
            bandwidth,
            p_t: energy.p_d,
            sigma2: channel::noise_power(scenario.noise_dbm_hz, bandwidth),
            truth,
            energy,
            symbols: scenario.symbols,
            s_sem,
            eta_ref: scenario.env.eta_ref.unwrap_or(ideal_rate / ideal_energy),
            gamma_ref,
            gamma_min: scenario.env.gamma_min_fraction * ideal_rate,
            penalty: scenario.env.penalty,
            window: scenario.env.window,
            episode_len: scenario.env.episode_len,
            xi_noise: scenario.env.xi_noise,
        })
    }

    pub fn check_action(&self, action: &Action) -> Result<()> {
        let b = &action.schedule;
        if b.users() != self.users || b.bands() != self.bands {
            return Err(Error::Usage("schedule shape does not match the scenario".into()));
        }
        if !b.is_valid() {
            return Err(Error::Usage(format!(
                "schedule violates half-duplex: {:?}",
                b.violations()
            )));
        }
        if action.phi.len() != self.elements {
            return Err(Error::Usage("RIS configuration length mismatch".into()));
        }
        if action.betas.len() != b.active_count() {
            return Err(Error::Usage(format!(
                "{} compression indices for {} links",
                action.betas.len(),
                b.active_count()
            )));
        }
        Ok(())
    }

    /// SINR and compression for each active link; `real` must already be
    /// cascaded with `action.phi`.
    pub fn link_evals(&self, real: &ChannelRealization, action: &Action) -> Result<Vec<LinkEval>> {
        let links = action.schedule.links();
        let mut out = Vec::with_capacity(links.len());
        for (l, &index) in links.iter().zip(&action.betas) {
            let signal = self.p_t * real.gain(l.tx, l.rx, l.band).norm_sqr();
            let interference: f64 = links
                .iter()
                .filter(|o| o.band == l.band && *o != l)
                .map(|o| self.p_t * real.gain(o.tx, l.rx, l.band).norm_sqr())
                .sum();
            out.push(LinkEval {
                link: *l,
                index,
                beta: semfidelity::beta_from_index(index)?,
                gamma: signal / (self.sigma2 + interference),
                signal,
                interference,
            });
        }
        Ok(out)
    }

    /// Noise-free ground-truth similarity per link.
    pub fn truth_noiseless(&self, evals: &[LinkEval]) -> Vec<f64> {
        evals
            .iter()
            .map(|e| self.truth.noiseless(e.link.tx, e.link.rx, e.gamma, e.beta))
            .collect()
    }

    /// Noisy ground-truth similarity; one standard-normal draw per link.
    pub fn truth_observed(&self, evals: &[LinkEval], noise_seed: u64) -> Vec<f64> {
        let mut rng = seed::rng(noise_seed, &[seed::stream::XI_NOISE]);
        evals
            .iter()
            .map(|e| {
                let z: f64 = StandardNormal.sample(&mut rng);
                self.truth.observe(e.link.tx, e.link.rx, e.gamma, e.beta, z)
            })
            .collect()
    }

    /// Rates, energy and η for given per-link similarities.
    pub fn score(&self, action: &Action, evals: &[LinkEval], xi: &[f64]) -> Result<SlotEval> {
        if xi.len() != evals.len() {
            return Err(Error::Usage("one similarity per link required".into()));
        }
        let mut user_rates = vec![0.0; self.users];
        let mut links = Vec::with_capacity(evals.len());
        for (e, &x) in evals.iter().zip(xi) {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::NonFinite(format!("similarity {x} for link {}", e.link)));
            }
            let rate = semfidelity::semantic_rate(self.bandwidth, self.s_sem, x, e.beta, self.symbols)?;
            user_rates[e.link.tx] += rate;
            links.push(LinkOutcome {
                eval: *e,
                xi: x,
                rate,
            });
        }
        let aggregate_rate: f64 = links.iter().map(|l| l.rate).sum();
        let mut energy = energy::energy_breakdown(
            &action.schedule,
            &action.betas,
            self.elements,
            &self.energy,
            &vec![self.bandwidth; self.bands],
            self.symbols,
        )?;
        let eta = if energy.total > 0.0 {
            energy::energy_efficiency(aggregate_rate, &mut energy)?
        } else {
            0.0
        };
        Ok(SlotEval {
            links,
            energy,
            user_rates,
            aggregate_rate,
            eta,
        })
    }

    /// Deterministic slot score on `real` (cascades a copy with `action.phi`).
    pub fn evaluate_noiseless(&self, real: &ChannelRealization, action: &Action) -> Result<SlotEval> {
        self.check_action(action)?;
        let mut r = real.clone();
        r.cascade(&action.phi, &self.phase)?;
        let evals = self.link_evals(&r, action)?;
        let xi = self.truth_noiseless(&evals);
        self.score(action, &evals, &xi)
    }

    /// Reward for a slot efficiency and per-user shortfalls (in suts/s).
    pub fn reward(&self, eta: f64, shortfalls: &[f64]) -> f64 {
        eta / self.eta_ref - self.penalty * shortfalls.iter().sum::<f64>() / self.gamma_ref
    }

    /// Length of a flattened observation.
    pub fn observation_dim(&self) -> usize {
        self.control_dim() + 3 * self.pair_count() * self.bands + 2 * self.users
    }

    /// Leading block of the observation: previous B, previous β and φ.
    pub fn control_dim(&self) -> usize {
        2 * self.users * self.users * self.bands + self.elements
    }

    fn pair_count(&self) -> usize {
        self.users * (self.users - 1) / 2
    }

    /// Encodes `(B, β, φ)` as `[B bits | β/7 at active slots | φ bits]`.
    pub fn encode_control(&self, action: &Action) -> Vec<f64> {
        let kkc = self.users * self.users * self.bands;
        let mut v = vec![0.0; self.control_dim()];
        for (i, &b) in action.schedule.bits().iter().enumerate() {
            v[i] = b as f64;
        }
        let mut j = 0;
        for (i, &b) in action.schedule.bits().iter().enumerate() {
            if b == 1 {
                if let Some(&idx) = action.betas.get(j) {
                    v[kkc + i] = idx as f64 / semfidelity::MAX_INDEX as f64;
                }
                j += 1;
            }
        }
        for (n, &p) in action.phi.bits().iter().enumerate() {
            v[2 * kkc + n] = p as f64;
        }
        v
    }

    /// SNR in dB / 20, plus cosine and sine of the phase, for every unordered
    /// pair and band of a cascaded realization.
    pub fn channel_features(&self, real: &ChannelRealization) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 * self.pair_count() * self.bands);
        for r in 0..self.users {
            for k in r + 1..self.users {
                for c in 0..self.bands {
                    let h = real.gain(r, k, c);
                    let snr = (self.p_t * h.norm_sqr() / self.sigma2).max(1e-12);
                    v.push(snr.log10() / 2.0);
                    let (s, co) = if h.norm() > 0.0 {
                        (h.im / h.norm(), h.re / h.norm())
                    } else {
                        (0.0, 1.0)
                    };
                    v.push(co);
                    v.push(s);
                }
            }
        }
        v
    }
}

/// Flattened observation: `[control | channel | counters | windowed rates]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub features: Vec<f64>,
    pub control_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Step index within the episode, starting at 0.
    pub step: usize,
    pub reward: f64,
    pub eta: f64,
    pub slot: SlotEval,
    /// `(Γ_min − windowed mean rate)⁺` per user.
    pub shortfalls: Vec<f64>,
    pub observation: Observation,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct Env {
    model: SlotModel,
    topology: UserTopology,
    geometry: RisGeometry,
    plan: BandPlan,
    kappa: f64,
    fading: Fading,
    episode_seed: u64,
    t: usize,
    base: ChannelRealization,
    /// `base` cascaded with `last.phi`.
    current: ChannelRealization,
    last: Action,
    counters: Vec<u64>,
    history: VecDeque<Vec<f64>>,
}

impl Env {
    /// Builds an environment. `seed` fixes the ground-truth perturbations and,
    /// with static fading, the single channel realization.
    pub fn new(scenario: &Scenario, seed: u64) -> Result<Self> {
        let model = SlotModel::new(scenario, seed)?;
        let topology = scenario.topology();
        let geometry = scenario.geometry();
        let plan = scenario.band_plan();
        let base = draw_channels(&topology, &geometry, &plan, scenario.kappa, seed)?;
        let last = Action::idle(model.users, model.bands, model.elements);
        let mut env = Self {
            topology,
            geometry,
            plan,
            kappa: scenario.kappa,
            fading: scenario.fading,
            episode_seed: seed,
            t: 0,
            current: base.clone(),
            base,
            counters: vec![0; model.users],
            history: VecDeque::new(),
            last,
            model,
        };
        env.reset(seed)?;
        Ok(env)
    }

    pub fn model(&self) -> &SlotModel {
        &self.model
    }

    /// Uncascaded channels of the current step.
    pub fn realization(&self) -> &ChannelRealization {
        &self.base
    }

    /// Channels of the current step cascaded with the previous configuration.
    pub fn current_gains(&self) -> &ChannelRealization {
        &self.current
    }

    pub fn last_action(&self) -> &Action {
        &self.last
    }

    pub fn counters(&self) -> &[u64] {
        &self.counters
    }

    pub fn step_index(&self) -> usize {
        self.t
    }

    pub fn episode_seed(&self) -> u64 {
        self.episode_seed
    }

    /// Starts a new episode: counters and windows cleared, RIS all-OFF, and
    /// (with block fading) a fresh realization drawn from `episode_seed`.
    pub fn reset(&mut self, episode_seed: u64) -> Result<Observation> {
        self.episode_seed = episode_seed;
        self.t = 0;
        self.counters.iter_mut().for_each(|c| *c = 0);
        self.history.clear();
        self.last = Action::idle(self.model.users, self.model.bands, self.model.elements);
        self.redraw()?;
        Ok(self.observation())
    }

    fn redraw(&mut self) -> Result<()> {
        if self.fading == Fading::Block {
            let s = seed::derive(self.episode_seed, &[seed::stream::CHANNEL, self.t as u64]);
            self.base = draw_channels(&self.topology, &self.geometry, &self.plan, self.kappa, s)?;
        }
        self.current = self.base.clone();
        self.current.cascade(&self.last.phi, &self.model.phase)?;
        Ok(())
    }

    pub fn observation(&self) -> Observation {
        let m = &self.model;
        let mut f = m.encode_control(&self.last);
        f.extend(m.channel_features(&self.current));
        let denom = self.t.max(1) as f64;
        f.extend(self.counters.iter().map(|&c| c as f64 / denom));
        f.extend(self.window_means().iter().map(|r| r / m.gamma_ref));
        Observation {
            features: f,
            control_dim: m.control_dim(),
        }
    }

    fn window_means(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.model.users];
        if self.history.is_empty() {
            return mean;
        }
        for row in &self.history {
            for (m, r) in mean.iter_mut().zip(row) {
                *m += r;
            }
        }
        let n = self.history.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Radio state of each link for `action` on the current channels.
    pub fn link_evals(&self, action: &Action) -> Result<Vec<LinkEval>> {
        self.model.check_action(action)?;
        let mut r = self.base.clone();
        r.cascade(&action.phi, &self.model.phase)?;
        self.model.link_evals(&r, action)
    }

    /// Steps with ground-truth similarity (noisy unless disabled in the scenario).
    pub fn step(&mut self, action: &Action) -> Result<StepOutcome> {
        let noisy = self.model.xi_noise;
        let noise_seed = seed::derive(self.episode_seed, &[self.t as u64]);
        self.step_with(action, |m, evals| {
            Ok(if noisy {
                m.truth_observed(evals, noise_seed)
            } else {
                m.truth_noiseless(evals)
            })
        })
    }

    /// Steps with similarities supplied by `xi` (e.g. a learned estimator).
    pub fn step_with<F>(&mut self, action: &Action, xi: F) -> Result<StepOutcome>
    where
        F: FnOnce(&SlotModel, &[LinkEval]) -> Result<Vec<f64>>,
    {
        if self.t >= self.model.episode_len {
            return Err(Error::Usage("step after the episode ended; call reset".into()));
        }
        let evals = self.link_evals(action)?;
        let xi = xi(&self.model, &evals)?;
        let slot = self.model.score(action, &evals, &xi)?;

        self.history.push_back(slot.user_rates.clone());
        if self.history.len() > self.model.window {
            self.history.pop_front();
        }
        for (u, c) in self.counters.iter_mut().enumerate() {
            if action.schedule.transmits(u) {
                *c += 1;
            }
        }
        let shortfalls: Vec<f64> = self
            .window_means()
            .iter()
            .map(|m| (self.model.gamma_min - m).max(0.0))
            .collect();
        let reward = self.model.reward(slot.eta, &shortfalls);
        let step = self.t;
        self.t += 1;
        self.last = action.clone();
        self.redraw()?;
        Ok(StepOutcome {
            step,
            reward,
            eta: slot.eta,
            slot,
            shortfalls,
            observation: self.observation(),
            done: self.t >= self.model.episode_len,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_env(seed: u64) -> Env {
        Env::new(&Scenario::tiny(), seed).unwrap()
    }

    fn one_link(users: usize, bands: usize, elements: usize) -> Action {
        Action {
            schedule: SchedulingMatrix::from_links(users, bands, &[Link { tx: 0, rx: 1, band: 0 }])
                .unwrap(),
            phi: RisConfig::all_off(elements),
            betas: vec![0],
        }
    }

    #[test]
    fn idle_schedule_penalised_by_floor() {
        let mut s = Scenario::default();
        s.env.gamma_ref = Some(1.0);
        s.env.penalty = 2.0;
        let mut env = Env::new(&s, 3).unwrap();
        let m = env.model().clone();
        let idle = Action::idle(m.users, m.bands, m.elements);
        for _ in 0..m.window + 3 {
            let out = env.step(&idle).unwrap();
            assert_eq!(out.eta, 0.0);
            let expect = -2.0 * 3.0 * m.gamma_min;
            assert!((out.reward - expect).abs() <= 1e-12 * expect.abs());
        }
    }

    #[test]
    fn no_penalty_means_reward_is_scaled_eta() {
        let mut s = Scenario::default();
        s.env.penalty = 0.0;
        s.env.eta_ref = Some(1.0);
        let mut env = Env::new(&s, 4).unwrap();
        let out = env.step(&one_link(3, 2, 16)).unwrap();
        assert!(out.eta > 0.0);
        assert_eq!(out.reward, out.eta);
    }

    #[test]
    fn reward_never_exceeds_scaled_eta() {
        let mut env = Env::new(&Scenario::default(), 5).unwrap();
        let eta_ref = env.model().eta_ref;
        for _ in 0..20 {
            let out = env.step(&one_link(3, 2, 16)).unwrap();
            assert!(out.reward <= out.eta / eta_ref);
        }
    }

    #[test]
    fn reset_is_deterministic() {
        let mut a = Env::new(&Scenario::default(), 1).unwrap();
        let mut b = Env::new(&Scenario::default(), 1).unwrap();
        let oa = a.reset(10).unwrap();
        assert_eq!(oa, b.reset(10).unwrap());
        assert!(a.counters().iter().all(|&c| c == 0));
        assert_ne!(oa, b.reset(11).unwrap());
        assert_eq!(oa.features.len(), a.model().observation_dim());
    }

    #[test]
    fn counters_track_transmitters() {
        let mut env = tiny_env(2);
        let a = one_link(2, 1, 4);
        let idle = Action::idle(2, 1, 4);
        env.step(&a).unwrap();
        env.step(&idle).unwrap();
        env.step(&a).unwrap();
        assert_eq!(env.counters(), &[2, 0]);
    }

    #[test]
    fn static_fading_keeps_channels() {
        let mut env = tiny_env(8);
        let before = env.realization().clone();
        env.step(&one_link(2, 1, 4)).unwrap();
        env.reset(99).unwrap();
        assert_eq!(env.realization(), &before);
    }

    #[test]
    fn invalid_action_is_rejected() {
        let mut env = tiny_env(2);
        let both = SchedulingMatrix::from_links(
            2,
            1,
            &[Link { tx: 0, rx: 1, band: 0 }, Link { tx: 1, rx: 0, band: 0 }],
        )
        .unwrap();
        let bad = Action {
            schedule: both,
            phi: RisConfig::all_off(4),
            betas: vec![0, 0],
        };
        assert!(matches!(env.step(&bad), Err(Error::Usage(_))));
        let mut short = one_link(2, 1, 4);
        short.betas.clear();
        assert!(env.step(&short).is_err());
    }

    #[test]
    fn episode_ends() {
        let mut env = tiny_env(2);
        let idle = Action::idle(2, 1, 4);
        let len = env.model().episode_len;
        for i in 0..len {
            assert_eq!(env.step(&idle).unwrap().done, i + 1 == len);
        }
        assert!(env.step(&idle).is_err());
    }

    #[test]
    fn identical_runs_are_bitwise_equal() {
        let run = || {
            let mut env = Env::new(&Scenario::default(), 77).unwrap();
            (0..10)
                .map(|_| env.step(&one_link(3, 2, 16)).unwrap().reward.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn control_encoding_layout() {
        let env = tiny_env(1);
        let m = env.model();
        let mut a = one_link(2, 1, 4);
        a.betas = vec![7];
        a.phi.set(2, true);
        let v = m.encode_control(&a);
        // B bits [00 10]... index (0*2+1)*1+0 = 1
        assert_eq!(v, vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    }
}
