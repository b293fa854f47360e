//! Reference policies: exhaustive search, greedy local search, fixed-RIS
//! greedy and uniform random actions.
//!
//! Everything here scores actions with noise-free ground truth on one frozen
//! realization. Candidates compare lexicographically on (meets the per-step
//! rate floor, η).

use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelRealization, RisConfig};
use crate::env::{Action, Env, Link, LinkEval, SchedulingMatrix, SlotModel};
use crate::error::{Error, Result};
use crate::semfidelity::{self, LEVELS, MAX_INDEX};
use crate::seed::{self, SimRng};

pub const DEFAULT_BUDGET: u64 = 10_000_000;
/// Above this many links the oracle only tries one index shared by all links.
pub const FULL_BETA_LINKS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub best: Action,
    pub eta: f64,
    /// Whether `best` meets the per-step rate floor for every user.
    pub feasible: bool,
    pub evaluated: u64,
    pub cardinality: u64,
    /// Set when some schedules were searched with shared compression indices only.
    pub uniform_beta: bool,
    pub elapsed_s: f64,
}

impl OracleResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Score {
    feasible: bool,
    eta: f64,
}

impl Score {
    const WORST: Score = Score {
        feasible: false,
        eta: f64::NEG_INFINITY,
    };

    fn beats(&self, other: &Score) -> bool {
        (self.feasible && !other.feasible) || (self.feasible == other.feasible && self.eta > other.eta)
    }
}

fn score_evals(model: &SlotModel, action: &Action, evals: &[LinkEval]) -> Result<Score> {
    let xi = model.truth_noiseless(evals);
    let slot = model.score(action, evals, &xi)?;
    Ok(Score {
        feasible: slot.meets_floor(model.gamma_min),
        eta: slot.eta,
    })
}

fn score_action(model: &SlotModel, real: &ChannelRealization, action: &Action) -> Result<Score> {
    let mut r = real.clone();
    r.cascade(&action.phi, &model.phase)?;
    let evals = model.link_evals(&r, action)?;
    score_evals(model, action, &evals)
}

/// Noise-free η of `action` (cascading a copy of `real`).
pub fn evaluate_action(model: &SlotModel, real: &ChannelRealization, action: &Action) -> Result<f64> {
    Ok(score_action(model, real, action)?.eta)
}

fn beta_assignments(links: usize) -> u64 {
    if links <= FULL_BETA_LINKS {
        (LEVELS as u64).pow(links as u32)
    } else {
        LEVELS as u64
    }
}

/// Number of `(B, φ, β)` tuples the oracle evaluates, and whether any
/// schedule falls back to shared compression indices.
pub fn oracle_cardinality(users: usize, bands: usize, elements: usize) -> (u128, bool) {
    let phis = 1u128.checked_shl(elements as u32).unwrap_or(u128::MAX);
    let mut total: u128 = 0;
    let mut uniform = false;
    for b in SchedulingMatrix::enumerate_valid(users, bands) {
        let links = b.active_count();
        uniform |= links > FULL_BETA_LINKS;
        total = total.saturating_add(phis.saturating_mul(beta_assignments(links) as u128));
    }
    (total, uniform)
}

fn assignment(links: usize, code: u64) -> Vec<u8> {
    if links > FULL_BETA_LINKS {
        return vec![code as u8; links];
    }
    (0..links)
        .map(|j| ((code >> (3 * (links - 1 - j))) & 7) as u8)
        .collect()
}

/// Enumerates every feasible tuple on `real` and returns the best one.
pub fn exhaustive_oracle(model: &SlotModel, real: &ChannelRealization, budget: u64) -> Result<OracleResult> {
    let start = Instant::now();
    let (cardinality, uniform_beta) = oracle_cardinality(model.users, model.bands, model.elements);
    if cardinality > budget as u128 {
        return Err(Error::BudgetExceeded {
            cardinality,
            budget: budget as u128,
        });
    }
    let schedules = SchedulingMatrix::enumerate_valid(model.users, model.bands);
    let n = model.elements;
    let per_b: Vec<Result<(Score, Action, u64)>> = schedules
        .par_iter()
        .map(|b| {
            let links = b.active_count();
            let mut best = (Score::WORST, Action::idle(model.users, model.bands, n), 0u64);
            for mask in 0..(1u64 << n) {
                let phi = RisConfig::from_mask(mask, n);
                let mut action = Action {
                    schedule: b.clone(),
                    phi,
                    betas: vec![0; links],
                };
                let mut r = real.clone();
                r.cascade(&action.phi, &model.phase)?;
                let mut evals = model.link_evals(&r, &action)?;
                for code in 0..beta_assignments(links) {
                    action.betas = assignment(links, code);
                    for (e, &i) in evals.iter_mut().zip(&action.betas) {
                        e.index = i;
                        e.beta = semfidelity::beta_from_index(i)?;
                    }
                    let s = score_evals(model, &action, &evals)?;
                    best.2 += 1;
                    if s.beats(&best.0) {
                        best.0 = s;
                        best.1 = action.clone();
                    }
                }
            }
            Ok(best)
        })
        .collect();
    let mut best = (Score::WORST, Action::idle(model.users, model.bands, n));
    let mut evaluated = 0;
    for r in per_b {
        let (s, a, count) = r?;
        evaluated += count;
        if s.beats(&best.0) {
            best = (s, a);
        }
    }
    Ok(OracleResult {
        best: best.1,
        eta: best.0.eta,
        feasible: best.0.feasible,
        evaluated,
        cardinality: cardinality as u64,
        uniform_beta,
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}

/// Uniformly random valid schedule, RIS configuration and compression indices.
pub fn random_action(model: &SlotModel, rng: &mut SimRng) -> Action {
    let schedules = SchedulingMatrix::enumerate_valid(model.users, model.bands);
    random_action_from(&schedules, model.elements, rng)
}

fn random_action_from(schedules: &[SchedulingMatrix], elements: usize, rng: &mut SimRng) -> Action {
    let b = schedules.choose(rng).expect("idle schedule always present").clone();
    let phi = RisConfig::from_bits((0..elements).map(|_| rng.random_range(0..2u8)).collect()).expect("binary");
    let betas = (0..b.active_count()).map(|_| rng.random_range(0..=MAX_INDEX)).collect();
    Action {
        schedule: b,
        phi,
        betas,
    }
}

/// Keeps the compression index of links that survive a schedule change;
/// new links start uncompressed.
fn carry_betas(old: &Action, schedule: &SchedulingMatrix) -> Vec<u8> {
    let prev: Vec<Link> = old.schedule.links();
    schedule
        .links()
        .iter()
        .map(|l| prev.iter().position(|p| p == l).map_or(0, |i| old.betas[i]))
        .collect()
}

fn neighbours(model: &SlotModel, real: &ChannelRealization, a: &Action, tune_phi: bool) -> Result<Vec<Action>> {
    let mut out = Vec::new();
    let mut gains = real.clone();
    gains.cascade(&a.phi, &model.phase)?;
    let (k, c) = (model.users, model.bands);
    for tx in 0..k {
        for rx in 0..k {
            if tx == rx {
                continue;
            }
            for band in 0..c {
                let l = Link { tx, rx, band };
                let mut b = a.schedule.clone();
                b.set(l, !b.is_active(l))?;
                let b = b.repair(|l| gains.gain(l.tx, l.rx, l.band).norm_sqr());
                if b != a.schedule {
                    let betas = carry_betas(a, &b);
                    out.push(Action {
                        schedule: b,
                        phi: a.phi.clone(),
                        betas,
                    });
                }
            }
        }
    }
    if tune_phi {
        for n in 0..model.elements {
            let mut next = a.clone();
            next.phi.toggle(n);
            out.push(next);
        }
    }
    for j in 0..a.betas.len() {
        for bit in 0..3 {
            let mut next = a.clone();
            next.betas[j] ^= 1 << bit;
            out.push(next);
        }
    }
    Ok(out)
}

/// Steepest-ascent hill climbing from `start` over single-bit moves.
fn hill_climb(
    model: &SlotModel,
    real: &ChannelRealization,
    start: Action,
    tune_phi: bool,
) -> Result<(Action, Score, u64)> {
    let mut cur = start;
    let mut cur_s = score_action(model, real, &cur)?;
    let mut evaluated = 1;
    loop {
        let mut best: Option<(Action, Score)> = None;
        for n in neighbours(model, real, &cur, tune_phi)? {
            let s = score_action(model, real, &n)?;
            evaluated += 1;
            if s.beats(best.as_ref().map_or(&cur_s, |b| &b.1)) {
                best = Some((n, s));
            }
        }
        match best {
            Some((a, s)) => {
                cur = a;
                cur_s = s;
            }
            None => return Ok((cur, cur_s, evaluated)),
        }
    }
}

/// True when no single-bit move improves on `action`.
pub fn is_local_optimum(model: &SlotModel, real: &ChannelRealization, action: &Action, tune_phi: bool) -> Result<bool> {
    let s = score_action(model, real, action)?;
    for n in neighbours(model, real, action, tune_phi)? {
        if score_action(model, real, &n)?.beats(&s) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn search(
    model: &SlotModel,
    real: &ChannelRealization,
    restarts: usize,
    seed: u64,
    fixed_phi: Option<RisConfig>,
) -> Result<OracleResult> {
    let start = Instant::now();
    let mut rng = seed::rng(seed, &[seed::stream::SEARCH]);
    let schedules = SchedulingMatrix::enumerate_valid(model.users, model.bands);
    let mut best = (Score::WORST, Action::idle(model.users, model.bands, model.elements));
    let mut evaluated = 0;
    for _ in 0..restarts.max(1) {
        let mut init = random_action_from(&schedules, model.elements, &mut rng);
        if let Some(phi) = &fixed_phi {
            init.phi = phi.clone();
        }
        let (a, s, n) = hill_climb(model, real, init, fixed_phi.is_none())?;
        evaluated += n;
        if s.beats(&best.0) {
            best = (s, a);
        }
    }
    Ok(OracleResult {
        best: best.1,
        eta: best.0.eta,
        feasible: best.0.feasible,
        evaluated,
        cardinality: 0,
        uniform_beta: false,
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}

/// Best local optimum over `restarts` random starts.
pub fn greedy_local_search(
    model: &SlotModel,
    real: &ChannelRealization,
    restarts: usize,
    seed: u64,
) -> Result<OracleResult> {
    search(model, real, restarts, seed, None)
}

/// Greedy over schedule and compression with a random, frozen RIS configuration.
pub fn fixed_ris_policy(
    model: &SlotModel,
    real: &ChannelRealization,
    restarts: usize,
    seed: u64,
) -> Result<OracleResult> {
    let mut rng = seed::rng(seed, &[seed::stream::SEARCH, 1]);
    let phi = RisConfig::from_bits((0..model.elements).map(|_| rng.random_range(0..2u8)).collect())?;
    search(model, real, restarts, seed, Some(phi))
}

/// Something that picks an action from the environment state.
pub trait Policy {
    fn act(&mut self, env: &Env) -> Result<Action>;
}

pub struct RandomPolicy {
    schedules: Vec<SchedulingMatrix>,
    rng: SimRng,
}

impl RandomPolicy {
    pub fn new(model: &SlotModel, seed: u64) -> Self {
        Self {
            schedules: SchedulingMatrix::enumerate_valid(model.users, model.bands),
            rng: seed::rng(seed, &[seed::stream::POLICY]),
        }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, env: &Env) -> Result<Action> {
        Ok(random_action_from(&self.schedules, env.model().elements, &mut self.rng))
    }
}

/// Re-runs greedy local search on every step's realization.
pub struct GreedyPolicy {
    pub restarts: usize,
    seed: u64,
    calls: u64,
}

impl GreedyPolicy {
    pub fn new(restarts: usize, seed: u64) -> Self {
        Self {
            restarts,
            seed,
            calls: 0,
        }
    }
}

impl Policy for GreedyPolicy {
    fn act(&mut self, env: &Env) -> Result<Action> {
        let s = seed::derive(self.seed, &[seed::stream::POLICY, self.calls]);
        self.calls += 1;
        Ok(greedy_local_search(env.model(), env.realization(), self.restarts, s)?.best)
    }
}
