//! Clipped-surrogate PPO over variable-length token sequences.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::actor::{token_entropy, token_log_prob, ActionSequence, Actor, TokenKind};
use super::critic::Critic;
use crate::error::{Error, Result};
use crate::nn::{adam_step, clip_grad_norm, sigmoid, AdamConfig, AdamState, Parameters};
use crate::seed::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub discount: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub horizon: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub max_grad_norm: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            value_coef: 0.5,
            entropy_coef: 0.01,
            discount: 0.99,
            lambda: 0.95,
            epochs: 4,
            minibatch: 128,
            horizon: 512,
            actor_lr: 3e-4,
            critic_lr: 1e-3,
            max_grad_norm: 0.5,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.clip > 0.0
            && self.clip < 1.0
            && self.value_coef >= 0.0
            && self.entropy_coef >= 0.0
            && (0.0..=1.0).contains(&self.discount)
            && (0.0..=1.0).contains(&self.lambda)
            && self.epochs > 0
            && self.minibatch > 0
            && self.horizon > 0
            && self.actor_lr > 0.0
            && self.critic_lr > 0.0
            && self.max_grad_norm > 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid PPO settings: {self:?}")));
        }
        Ok(())
    }
}

/// One step of experience.
#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub seq: ActionSequence,
    /// Normalized reward.
    pub reward: f64,
    pub value: f64,
    /// Terminal for bootstrapping (the trainer folds time-limit bootstraps into `reward`).
    pub done: bool,
}

/// Generalized advantage estimation; returns `(advantages, returns)`.
pub fn compute_advantages(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    discount: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut gae = 0.0;
    for t in (0..n).rev() {
        let next = if t + 1 < n { values[t + 1] } else { last_value };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + discount * next * live - values[t];
        gae = delta + discount * lambda * live * gae;
        adv[t] = gae;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Scales rewards by the running standard deviation of the discounted return.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardNormalizer {
    discount: f64,
    ret: f64,
    count: u64,
    mean: f64,
    m2: f64,
}

impl RewardNormalizer {
    pub fn new(discount: f64) -> Self {
        Self {
            discount,
            ..Self::default()
        }
    }

    pub fn std(&self) -> f64 {
        if self.count < 2 {
            1.0
        } else {
            (self.m2 / (self.count - 1) as f64).sqrt().max(1e-8)
        }
    }

    pub fn normalize(&mut self, reward: f64, done: bool) -> f64 {
        self.ret = self.ret * self.discount + reward;
        self.count += 1;
        let d = self.ret - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (self.ret - self.mean);
        if done {
            self.ret = 0.0;
        }
        reward / self.std()
    }

    /// Applies the current scale without updating statistics.
    pub fn scale(&self, reward: f64) -> f64 {
        reward / self.std()
    }
}

pub struct PpoOptimizers {
    pub actor: AdamState,
    pub critic: AdamState,
}

impl PpoOptimizers {
    pub fn new(actor: &Actor, critic: &Critic, config: &PpoConfig) -> Self {
        let a = AdamConfig {
            lr: config.actor_lr,
            ..AdamConfig::default()
        };
        let c = AdamConfig {
            lr: config.critic_lr,
            ..AdamConfig::default()
        };
        Self {
            actor: AdamState::new(&actor.parameters(), a),
            critic: AdamState::new(&critic.parameters(), c),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub minibatches: usize,
}

/// `min(ρÂ, clip(ρ, 1−ε, 1+ε)Â)` and its derivative w.r.t. `ln ρ`.
pub fn clipped_objective(ratio: f64, adv: f64, clip: f64) -> (f64, f64) {
    let unclipped = ratio * adv;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * adv;
    if unclipped <= clipped {
        (unclipped, unclipped)
    } else {
        (clipped, 0.0)
    }
}

/// Gradient of the sequence log-probability and entropy w.r.t. each logit.
fn token_grads(z: &[f64], seq: &ActionSequence, d_logp: f64, d_ent: f64) -> (f64, f64, Vec<f64>) {
    let mut logp = 0.0;
    let mut ent = 0.0;
    let mut dz = vec![0.0; z.len()];
    for (j, ((zj, t), k)) in z.iter().zip(&seq.tokens).zip(&seq.kinds).enumerate() {
        if *k != TokenKind::Emitted {
            continue;
        }
        logp += token_log_prob(*zj, *t);
        ent += token_entropy(*zj);
        let s = sigmoid(*zj);
        dz[j] = d_logp * (*t as f64 - s) + d_ent * (-zj * s * (1.0 - s));
    }
    (logp, ent, dz)
}

/// Runs the clipped update over a finished rollout.
///
/// `last_value` bootstraps the final transition when it is not terminal.
pub fn ppo_update(
    actor: &mut Actor,
    critic: &mut Critic,
    opt: &mut PpoOptimizers,
    batch: &[Transition],
    last_value: f64,
    config: &PpoConfig,
    rng: &mut SimRng,
) -> Result<PpoStats> {
    if batch.is_empty() {
        return Ok(PpoStats::default());
    }
    let rewards: Vec<f64> = batch.iter().map(|t| t.reward).collect();
    let values: Vec<f64> = batch.iter().map(|t| t.value).collect();
    let dones: Vec<bool> = batch.iter().map(|t| t.done).collect();
    let (mut adv, ret) = compute_advantages(&rewards, &values, &dones, last_value, config.discount, config.lambda);
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
    for a in &mut adv {
        *a = (*a - mean) / (std + 1e-8);
    }

    let mut stats = PpoStats::default();
    let mut order: Vec<usize> = (0..batch.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(config.minibatch) {
            let m = chunk.len() as f64;
            let mut ga = actor.zero_grads();
            let mut p_loss = 0.0;
            let mut entropy = 0.0;
            let mut kl = 0.0;
            let mut clipped = 0.0;
            for &i in chunk {
                let t = &batch[i];
                let (z, tape) = actor.forward(&t.obs, &t.seq.tokens)?;
                let (logp, _, _) = token_grads(&z, &t.seq, 0.0, 0.0);
                let old = t.seq.log_prob();
                let ratio = (logp - old).exp();
                let (obj, d_obj) = clipped_objective(ratio, adv[i], config.clip);
                if d_obj == 0.0 && adv[i] != 0.0 {
                    clipped += 1.0;
                }
                let d_logp = -d_obj / m;
                let (_, ent, dz) = token_grads(&z, &t.seq, d_logp, -config.entropy_coef / m);
                p_loss -= obj;
                entropy += ent;
                kl += old - logp;
                actor.backward(&tape, &dz, &mut ga);
            }
            let (v, vtape) = critic.forward(&chunk.iter().map(|&i| batch[i].obs.clone()).collect::<Vec<_>>())?;
            let dv: Vec<f64> = chunk
                .iter()
                .zip(&v)
                .map(|(&i, v)| config.value_coef * (v - ret[i]) / m)
                .collect();
            let v_loss = chunk.iter().zip(&v).map(|(&i, v)| 0.5 * (v - ret[i]).powi(2)).sum::<f64>() / m;
            let mut gc = critic.zero_grads();
            critic.backward(&vtape, &dv, &mut gc);

            let p_loss = p_loss / m;
            if !p_loss.is_finite() || !v_loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "PPO loss (policy {p_loss}, value {v_loss}, advantage std {std}, returns {:?})",
                    &ret[..ret.len().min(8)]
                )));
            }
            clip_grad_norm(&mut ga, config.max_grad_norm);
            clip_grad_norm(&mut gc, config.max_grad_norm);
            adam_step(actor.parameters_mut(), &ga, &mut opt.actor)?;
            adam_step(critic.parameters_mut(), &gc, &mut opt.critic)?;

            stats.policy_loss += p_loss;
            stats.value_loss += v_loss;
            stats.entropy += entropy / m;
            stats.approx_kl += kl / m;
            stats.clip_fraction += clipped / m;
            stats.minibatches += 1;
        }
    }
    let k = stats.minibatches as f64;
    stats.policy_loss /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    stats.approx_kl /= k;
    stats.clip_fraction /= k;
    Ok(stats)
}
