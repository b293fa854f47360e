//! The outer training loop: schedule first, cache lookup or calibration,
//! truncated remainder, similarity from ground truth or the estimator,
//! PPO every horizon and estimator fine-tuning every update round.

use std::collections::VecDeque;
use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::action::Grammar;
use super::actor::{Actor, ActorConfig, SampleMode};
use super::cache::{self, CacheEntry, CacheTable};
use super::critic::Critic;
use super::policy::{decide, Layout};
use super::ppo::{ppo_update, PpoConfig, PpoOptimizers, PpoStats, RewardNormalizer, Transition};
use crate::env::{Env, LinkEval, SchedulingMatrix, SlotModel};
use crate::error::{Error, Result};
use crate::estimator::{inputs_for, Estimator, EstimatorConfig, EstimatorInput, ReplayBuffer};
use crate::nn::Checkpoint;
use crate::scenario::Scenario;
use crate::seed::{self, stream};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    /// Calibrate on every step instead of reusing cache entries.
    pub no_cache: bool,
    /// Fixed-length actor: no schedule context, compression groups for every possible link.
    pub no_truncation: bool,
    /// Always query the ground truth.
    pub no_estimator: bool,
}

impl Ablation {
    pub fn parse(name: &str) -> Result<Self> {
        let mut a = Self::default();
        match name {
            "no_cache" => a.no_cache = true,
            "no_truncation" => a.no_truncation = true,
            "no_estimator" => a.no_estimator = true,
            "none" => {}
            other => return Err(Error::Config(format!("unknown ablation {other:?}"))),
        }
        Ok(a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Scenario file (relative to the config file), used by the command line
    /// when no path is given there.
    pub scenario: Option<String>,
    pub steps: u64,
    pub toggles: usize,
    pub ppo: PpoConfig,
    pub actor: ActorConfig,
    pub estimator: EstimatorConfig,
    pub ablation: Ablation,
    pub calibration_budget: usize,
    pub audit_interval: u64,
    pub audit_window: usize,
    pub audit_threshold: f64,
    pub warm_start: bool,
    /// Steps between greedy evaluations (0 evaluates only at the end).
    pub eval_interval: u64,
    pub eval_steps: usize,
    /// Stop once an evaluation reaches this η.
    pub target_eval_eta: Option<f64>,
    /// Steps between checkpoints (0 disables them).
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            scenario: None,
            steps: 20_000,
            toggles: 4,
            ppo: PpoConfig::default(),
            actor: ActorConfig::default(),
            estimator: EstimatorConfig::default(),
            ablation: Ablation::default(),
            calibration_budget: cache::DEFAULT_BUDGET,
            audit_interval: 20,
            audit_window: 5,
            audit_threshold: 0.1,
            warm_start: true,
            eval_interval: 1000,
            eval_steps: 128,
            target_eval_eta: None,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, &e))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }

    pub fn validate(&self) -> Result<()> {
        self.ppo.validate()?;
        if self.audit_interval == 0 || self.audit_window == 0 || self.eval_steps == 0 {
            return Err(Error::Config("audit interval, audit window and eval steps must be positive".into()));
        }
        if self.calibration_budget < cache::MIN_BUDGET {
            return Err(Error::Config(format!(
                "calibration budget must be at least {}",
                cache::MIN_BUDGET
            )));
        }
        Ok(())
    }

    fn layout(&self) -> Layout {
        Layout {
            context: !self.ablation.no_truncation,
        }
    }

    fn grammar(&self, model: &SlotModel) -> Grammar {
        Grammar {
            fixed_length: self.ablation.no_truncation,
            ..Grammar::new(model.users, model.bands, model.elements, self.toggles)
        }
    }
}

/// Longest sequence the actor must hold under `layout`.
pub fn sequence_capacity(grammar: &Grammar, layout: Layout) -> usize {
    let context = if layout.context { grammar.schedule_len() } else { 0 };
    grammar.schedule_len() + context + grammar.ris_len() + 3 * grammar.max_links()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: u64,
    pub eta: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub steps: u64,
    pub best_eval_eta: f64,
    pub final_eval_eta: f64,
    pub evals: Vec<EvalPoint>,
    pub calibration_calls: u64,
    pub calibration_probes: u64,
    pub gt_queries: u64,
    pub converged_at: Option<u64>,
    pub steps_after_convergence: u64,
    pub gt_queries_after_convergence: u64,
    pub audit_maes: Vec<f64>,
    pub invalidations: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub cache_entries: usize,
    pub half_duplex_violations: u64,
    pub stopped_early: bool,
    pub checkpoints: Vec<PathBuf>,
    pub last_ppo: Option<PpoStats>,
}

impl TrainingReport {
    /// Ground-truth queries per 1000 steps after the estimator first converged.
    pub fn gt_rate_after_convergence(&self) -> Option<f64> {
        (self.steps_after_convergence > 0)
            .then(|| 1000.0 * self.gt_queries_after_convergence as f64 / self.steps_after_convergence as f64)
    }
}

/// Everything a checkpoint restores besides the networks.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Sidecar {
    step: u64,
    episode: u64,
    rounds: u64,
    seed: u64,
    scenario_hash: String,
    config: TrainConfig,
    cache: CacheTable,
    normalizer: RewardNormalizer,
    report: TrainingReport,
    audits: Vec<f64>,
}

/// Networks and learning state of one training run.
pub struct Agent {
    pub grammar: Grammar,
    pub layout: Layout,
    pub actor: Actor,
    pub critic: Critic,
    /// Delayed copy used for value targets; synchronized each update round.
    target: Critic,
    pub estimator: Estimator,
    opt: PpoOptimizers,
    pub cache: CacheTable,
    pub replay: ReplayBuffer,
    normalizer: RewardNormalizer,
}

impl Agent {
    pub fn new(model: &SlotModel, config: &TrainConfig, seed: u64) -> Result<Self> {
        let grammar = config.grammar(model);
        let layout = config.layout();
        let mut rng = seed::rng(seed, &[stream::INIT]);
        let actor = Actor::new(
            model.observation_dim(),
            sequence_capacity(&grammar, layout),
            config.actor,
            &mut rng,
        );
        let critic = Critic::new(model.observation_dim(), model.control_dim(), &mut rng)?;
        let estimator = Estimator::new(model, config.estimator, Some(critic.control_embedding()), seed)?;
        let opt = PpoOptimizers::new(&actor, &critic, &config.ppo);
        Ok(Self {
            grammar,
            layout,
            target: critic.clone(),
            actor,
            critic,
            estimator,
            opt,
            cache: CacheTable::new(),
            replay: ReplayBuffer::new(config.estimator.buffer),
            normalizer: RewardNormalizer::new(config.ppo.discount),
        })
    }

    fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        self.actor.to_checkpoint(&mut ck, "actor");
        self.critic.to_checkpoint(&mut ck, "critic");
        self.estimator.to_checkpoint(&mut ck, "estimator");
        self.opt.actor.to_checkpoint(&mut ck, "adam.actor");
        self.opt.critic.to_checkpoint(&mut ck, "adam.critic");
        ck
    }

    fn load_checkpoint(&mut self, ck: &Checkpoint) -> Result<()> {
        self.actor.load_checkpoint(ck, "actor")?;
        self.critic.load_checkpoint(ck, "critic")?;
        self.target = self.critic.clone();
        self.estimator.load_checkpoint(ck, "estimator")?;
        self.opt.actor.load_checkpoint(ck, "adam.actor")?;
        self.opt.critic.load_checkpoint(ck, "adam.critic")
    }

    /// Loads only the actor from a checkpoint file (for evaluation).
    pub fn load_actor(path: &Path, scenario: &Scenario, config: &TrainConfig) -> Result<(Actor, Grammar, Layout)> {
        let model = SlotModel::new(scenario, 0)?;
        let grammar = config.grammar(&model);
        let layout = config.layout();
        let mut rng = seed::rng(0, &[stream::INIT]);
        let mut actor = Actor::new(
            model.observation_dim(),
            sequence_capacity(&grammar, layout),
            config.actor,
            &mut rng,
        );
        actor.load_checkpoint(&Checkpoint::load(path)?, "actor")?;
        Ok((actor, grammar, layout))
    }
}

/// Mean noise-free η of greedy decoding over `steps` steps on fresh
/// environments built from `seed` (same channels and fidelity truth as training).
pub fn evaluate_actor(
    actor: &Actor,
    grammar: &Grammar,
    layout: Layout,
    scenario: &Scenario,
    seed: u64,
    steps: usize,
) -> Result<f64> {
    let mut env = Env::new(scenario, seed)?;
    let mut episode = 0;
    env.reset(seed::derive(seed, &[stream::EVAL, episode]))?;
    let mut total = 0.0;
    for _ in 0..steps {
        if env.step_index() >= env.model().episode_len {
            episode += 1;
            env.reset(seed::derive(seed, &[stream::EVAL, episode]))?;
        }
        let (action, _) = decide(actor, grammar, layout, &env, &mut SampleMode::Greedy, |_| Ok(()))?;
        let out = env.step_with(&action, |m, e| Ok(m.truth_noiseless(e)))?;
        total += out.eta;
    }
    Ok(total / steps as f64)
}

struct Outputs {
    dir: PathBuf,
    train: csv::Writer<File>,
    eval: csv::Writer<File>,
}

impl Outputs {
    fn open(dir: &Path, append: bool) -> Result<Self> {
        fs::create_dir_all(dir.join("checkpoints")).map_err(|e| Error::io(dir, e))?;
        let open = |name: &str, header: &[&str]| -> Result<csv::Writer<File>> {
            let path = dir.join(name);
            let fresh = !append || !path.exists();
            let f = OpenOptions::new()
                .create(true)
                .append(!fresh)
                .write(true)
                .truncate(fresh)
                .open(&path)
                .map_err(|e| Error::io(&path, e))?;
            let mut w = csv::Writer::from_writer(f);
            if fresh {
                w.write_record(header)?;
            }
            Ok(w)
        };
        Ok(Self {
            train: open(
                "train.csv",
                &["step", "reward", "eta_raw", "cache_hit_rate", "calibration_calls", "gt_queries", "l_est"],
            )?,
            eval: open("eval.csv", &["step", "eval_eta"])?,
            dir: dir.to_path_buf(),
        })
    }
}

pub struct Trainer {
    scenario: Scenario,
    config: TrainConfig,
    seed: u64,
    pub agent: Agent,
    env: Env,
    step: u64,
    episode: u64,
    rounds: u64,
    audits: VecDeque<f64>,
    report: TrainingReport,
    rollout: Vec<Transition>,
}

impl Trainer {
    pub fn new(scenario: &Scenario, config: &TrainConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut env = Env::new(scenario, seed)?;
        env.reset(seed::derive(seed, &[stream::EPISODE, 0]))?;
        let mut agent = Agent::new(env.model(), config, seed)?;
        if config.warm_start && !config.ablation.no_estimator {
            let nominal = env.model().truth.nominal;
            agent
                .estimator
                .warm_start(env.model(), &nominal, config.estimator.warm_samples, seed)?;
        }
        Ok(Self {
            scenario: scenario.clone(),
            config: config.clone(),
            seed,
            agent,
            env,
            step: 0,
            episode: 0,
            rounds: 0,
            audits: VecDeque::new(),
            report: TrainingReport::default(),
            rollout: Vec::new(),
        })
    }

    /// Restores a run from `checkpoint` (the `.ckpt` file; its `.json` and
    /// `.replay.csv` siblings are read too). `config.steps` stays the target.
    pub fn resume(scenario: &Scenario, config: &TrainConfig, checkpoint: &Path) -> Result<Self> {
        let side_path = checkpoint.with_extension("json");
        let text = fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
        let side: Sidecar = serde_json::from_str(&text).map_err(|e| Error::parse(&side_path, &e))?;
        if side.scenario_hash != scenario.hash() {
            return Err(Error::Config("checkpoint was written for a different scenario".into()));
        }
        let config = TrainConfig {
            steps: config.steps,
            checkpoint_every: config.checkpoint_every,
            ..side.config.clone()
        };
        let mut t = Self::new(scenario, &TrainConfig { warm_start: false, ..config.clone() }, side.seed)?;
        t.config = config;
        t.agent.load_checkpoint(&Checkpoint::load(checkpoint)?)?;
        let replay = checkpoint.with_extension("replay.csv");
        if replay.exists() {
            t.agent.replay = ReplayBuffer::load_csv(&replay, t.config.estimator.buffer)?;
        }
        t.agent.cache = side.cache;
        t.agent.normalizer = side.normalizer;
        t.step = side.step;
        t.episode = side.episode + 1;
        t.rounds = side.rounds;
        t.audits = side.audits.into();
        t.report = side.report;
        t.env
            .reset(seed::derive(t.seed, &[stream::EPISODE, t.episode]))?;
        Ok(t)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    fn calibrate(&mut self, b: &SchedulingMatrix) -> Result<(CacheEntry, bool)> {
        let model = self.env.model();
        let real = self.env.realization();
        let budget = self.config.calibration_budget;
        let step = self.step;
        let mut tags = vec![stream::CALIBRATION];
        tags.extend(b.bits().iter().map(|&x| x as u64));
        let cache = &mut self.agent.cache;
        if self.config.ablation.no_cache {
            tags.push(cache.calibration_calls);
            let s = seed::derive(self.seed, &tags);
            let e = cache.record(|| cache::calibrate_entry(model, real, b, budget, step, s))?;
            Ok((e, false))
        } else {
            let s = seed::derive(self.seed, &tags);
            cache.get_or_calibrate(b, || cache::calibrate_entry(model, real, b, budget, step, s))
        }
    }

    /// One environment step; returns the raw reward.
    fn env_step(&mut self) -> Result<(f64, f64)> {
        let mut rng = seed::rng(self.seed, &[stream::ACTOR, self.step]);
        let mut mode = SampleMode::Stochastic(&mut rng);
        let obs = self.env.observation().features;
        let value = self.agent.target.value(&obs)?;

        let mut settled: Option<SchedulingMatrix> = None;
        let (action, seq) = decide(
            &self.agent.actor,
            &self.agent.grammar,
            self.agent.layout,
            &self.env,
            &mut mode,
            |b| {
                settled = Some(b.clone());
                Ok(())
            },
        )?;
        let b = settled.expect("schedule hook runs");
        let (entry, _) = self.calibrate(&b)?;
        if !action.schedule.is_valid() {
            self.report.half_duplex_violations += 1;
        }

        let links = action.schedule.active_count();
        let use_estimator = !self.config.ablation.no_estimator && self.agent.estimator.converged();
        if use_estimator && self.report.converged_at.is_none() {
            self.report.converged_at = Some(self.step);
        }
        if self.report.converged_at.is_some() {
            self.report.steps_after_convergence += 1;
        }
        let audit = use_estimator && self.step % self.config.audit_interval == 0;
        let query_truth = links > 0 && (!use_estimator || audit);

        let noisy = self.env.model().xi_noise;
        let noise_seed = seed::derive(self.env.episode_seed(), &[self.env.step_index() as u64]);
        let estimator = &self.agent.estimator;
        let mut inputs: Vec<EstimatorInput> = Vec::new();
        let mut truth: Vec<f64> = Vec::new();
        let mut predicted: Vec<f64> = Vec::new();
        let out = self.env.step_with(&action, |m: &SlotModel, evals: &[LinkEval]| {
            inputs = inputs_for(m, &action, evals, |e| *entry.pair(e.link.tx, e.link.rx));
            if use_estimator {
                predicted = estimator.predict_many(&inputs.iter().collect::<Vec<_>>())?;
            }
            if query_truth {
                truth = if noisy {
                    m.truth_observed(evals, noise_seed)
                } else {
                    m.truth_noiseless(evals)
                };
                Ok(truth.clone())
            } else {
                Ok(predicted.clone())
            }
        })?;

        if query_truth {
            self.report.gt_queries += 1;
            if self.report.converged_at.is_some() {
                self.report.gt_queries_after_convergence += 1;
            }
            if !self.config.ablation.no_estimator {
                for (input, xi) in inputs.into_iter().zip(&truth) {
                    self.agent.replay.push(input, *xi, self.step);
                }
            }
        }
        if audit && links > 0 {
            let mae = predicted.iter().zip(&truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / links as f64;
            self.report.audit_maes.push(mae);
            self.audits.push_back(mae);
            if self.audits.len() > self.config.audit_window {
                self.audits.pop_front();
            }
            let mean = self.audits.iter().sum::<f64>() / self.audits.len() as f64;
            if mean > self.config.audit_threshold {
                log::info!("step {}: audit MAE {mean:.3} over threshold, estimator invalidated", self.step);
                self.agent.estimator.invalidate();
                self.report.invalidations += 1;
                self.audits.clear();
            }
        }

        let done = out.done;
        let mut reward = self.agent.normalizer.normalize(out.reward, done);
        if done {
            // episodes end on a time limit: bootstrap from the final state
            reward += self.config.ppo.discount * self.agent.target.value(&out.observation.features)?;
        }
        self.rollout.push(Transition {
            obs,
            seq,
            reward,
            value,
            done,
        });
        if done {
            self.episode += 1;
            self.env
                .reset(seed::derive(self.seed, &[stream::EPISODE, self.episode]))?;
        }
        Ok((out.reward, out.eta))
    }

    fn update(&mut self) -> Result<()> {
        let last_value = self.agent.target.value(&self.env.observation().features)?;
        let mut rng = seed::rng(self.seed, &[stream::PPO, self.rounds]);
        let stats = ppo_update(
            &mut self.agent.actor,
            &mut self.agent.critic,
            &mut self.agent.opt,
            &self.rollout,
            last_value,
            &self.config.ppo,
            &mut rng,
        )?;
        self.rollout.clear();
        self.agent.target = self.agent.critic.clone();
        if !self.config.ablation.no_estimator && !self.agent.replay.is_empty() {
            let s = seed::derive(self.seed, &[stream::ESTIMATOR, self.rounds]);
            let r = self
                .agent
                .estimator
                .fine_tune(&self.agent.replay, self.config.estimator.epochs, s)?;
            log::debug!("round {}: estimator L_est {:.2e}", self.rounds, r.l_est);
        }
        log::debug!("round {}: {stats:?}", self.rounds);
        self.report.last_ppo = Some(stats);
        self.rounds += 1;
        Ok(())
    }

    pub fn evaluate(&self) -> Result<f64> {
        evaluate_actor(
            &self.agent.actor,
            &self.agent.grammar,
            self.agent.layout,
            &self.scenario,
            self.seed,
            self.config.eval_steps,
        )
    }

    fn record_eval(&mut self, out: &mut Option<Outputs>) -> Result<f64> {
        let eta = self.evaluate()?;
        self.report.evals.push(EvalPoint { step: self.step, eta });
        self.report.best_eval_eta = self.report.best_eval_eta.max(eta);
        self.report.final_eval_eta = eta;
        if let Some(o) = out {
            o.eval.write_record(&[self.step.to_string(), eta.to_string()])?;
        }
        Ok(eta)
    }

    fn save_checkpoint(&mut self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("checkpoints").join(format!("step_{:08}.ckpt", self.step));
        self.agent.to_checkpoint().save(&path)?;
        self.agent.replay.save_csv(&path.with_extension("replay.csv"))?;
        self.report.checkpoints.push(path.clone());
        let side = Sidecar {
            step: self.step,
            episode: self.episode,
            rounds: self.rounds,
            seed: self.seed,
            scenario_hash: self.scenario.hash(),
            config: self.config.clone(),
            cache: self.agent.cache.clone(),
            normalizer: self.agent.normalizer.clone(),
            report: self.report.clone(),
            audits: self.audits.iter().copied().collect(),
        };
        let side_path = path.with_extension("json");
        let text = serde_json::to_string_pretty(&side)?;
        fs::write(&side_path, text).map_err(|e| Error::io(&side_path, e))?;
        Ok(path)
    }

    /// Trains until `config.steps` total steps (or the evaluation target).
    pub fn run(mut self, out_dir: Option<&Path>) -> Result<TrainingReport> {
        let mut out = match out_dir {
            Some(d) => Some(Outputs::open(d, self.step > 0)?),
            None => None,
        };
        while self.step < self.config.steps {
            let (reward, eta) = self.env_step()?;
            self.step += 1;
            if let Some(o) = &mut out {
                let c = &self.agent.cache;
                o.train.write_record(&[
                    self.step.to_string(),
                    reward.to_string(),
                    eta.to_string(),
                    c.hit_rate().to_string(),
                    c.calibration_calls.to_string(),
                    self.report.gt_queries.to_string(),
                    self.agent.estimator.l_est().to_string(),
                ])?;
            }
            if self.rollout.len() >= self.config.ppo.horizon {
                self.update()?;
            }
            if self.config.eval_interval > 0 && self.step % self.config.eval_interval == 0 {
                let eta = self.record_eval(&mut out)?;
                log::info!("step {}: eval η {eta:.4e}", self.step);
                if self.config.target_eval_eta.is_some_and(|t| eta >= t) {
                    self.report.stopped_early = true;
                    break;
                }
            }
            if self.config.checkpoint_every > 0 && self.step % self.config.checkpoint_every == 0 {
                if let Some(o) = &out {
                    let dir = o.dir.clone();
                    self.save_checkpoint(&dir)?;
                }
            }
        }
        if self.report.evals.last().is_none_or(|e| e.step != self.step) {
            self.record_eval(&mut out)?;
        }
        if let Some(o) = &mut out {
            o.train.flush().map_err(|e| Error::io(&o.dir, e))?;
            o.eval.flush().map_err(|e| Error::io(&o.dir, e))?;
            let path = o.dir.join("report.json");
            self.finish_report();
            fs::write(&path, serde_json::to_string_pretty(&self.report)?).map_err(|e| Error::io(&path, e))?;
        }
        self.finish_report();
        Ok(self.report)
    }

    fn finish_report(&mut self) {
        let c = &self.agent.cache;
        self.report.steps = self.step;
        self.report.calibration_calls = c.calibration_calls;
        self.report.calibration_probes = c.calibration_probes;
        self.report.cache_hits = c.hits;
        self.report.cache_misses = c.misses;
        self.report.cache_entries = c.len();
    }
}

/// Trains from scratch; with `out_dir`, writes `train.csv`, `eval.csv`,
/// `report.json` and checkpoints there.
pub fn run_training(
    scenario: &Scenario,
    config: &TrainConfig,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<TrainingReport> {
    Trainer::new(scenario, config, seed)?.run(out_dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(steps: u64) -> TrainConfig {
        TrainConfig {
            steps,
            ppo: PpoConfig {
                horizon: 32,
                minibatch: 16,
                epochs: 1,
                ..PpoConfig::default()
            },
            estimator: EstimatorConfig {
                warm_samples: 64,
                warm_epoch_cap: 1,
                ..EstimatorConfig::default()
            },
            eval_interval: 0,
            eval_steps: 8,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn runs_and_counts() {
        let r = run_training(&Scenario::tiny(), &quick(64), 1, None).unwrap();
        assert_eq!(r.steps, 64);
        assert_eq!(r.half_duplex_violations, 0);
        assert_eq!(r.cache_hits + r.cache_misses, 64);
        assert_eq!(r.calibration_calls as usize, r.cache_entries);
        assert!(r.cache_entries <= 3);
        assert!(r.final_eval_eta >= 0.0);
    }

    #[test]
    fn no_cache_calibrates_every_step() {
        let mut c = quick(40);
        c.ablation.no_cache = true;
        let r = run_training(&Scenario::tiny(), &c, 1, None).unwrap();
        assert_eq!(r.calibration_calls, 40);
        assert_eq!(r.cache_entries, 0);
    }

    #[test]
    fn deterministic() {
        let a = run_training(&Scenario::tiny(), &quick(48), 3, None).unwrap();
        let b = run_training(&Scenario::tiny(), &quick(48), 3, None).unwrap();
        assert_eq!(a.final_eval_eta, b.final_eval_eta);
        assert_eq!(a.gt_queries, b.gt_queries);
    }

    #[test]
    fn fixed_length_variant_runs() {
        let mut c = quick(40);
        c.ablation.no_truncation = true;
        c.ablation.no_estimator = true;
        let r = run_training(&Scenario::default(), &c, 2, None).unwrap();
        assert_eq!(r.converged_at, None);
        assert_eq!(r.half_duplex_violations, 0);
    }

    #[test]
    fn checkpoints_and_resume() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = quick(64);
        c.checkpoint_every = 16;
        let r = run_training(&Scenario::tiny(), &c, 5, Some(dir.path())).unwrap();
        assert_eq!(r.checkpoints.len(), 4);
        let ck = &r.checkpoints[1];
        let resumed = Trainer::resume(&Scenario::tiny(), &TrainConfig { steps: 80, ..c.clone() }, ck).unwrap();
        assert_eq!(resumed.step_count(), 32);
        let r2 = resumed.run(Some(dir.path())).unwrap();
        assert_eq!(r2.steps, 80);
        let text = fs::read_to_string(dir.path().join("train.csv")).unwrap();
        let steps: Vec<u64> = text.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
        // first run 1..=64, resumed run 33..=80
        assert_eq!(steps.len(), 64 + 48);
        assert_eq!(steps[64], 33);
        assert!(steps[64..].windows(2).all(|w| w[1] == w[0] + 1));
    }

    #[test]
    fn config_json_roundtrip() {
        let mut c = TrainConfig::default();
        c.ablation = Ablation::parse("no_cache").unwrap();
        let back: TrainConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
        let partial: TrainConfig = serde_json::from_str(r#"{"steps": 5, "ablation": {"no_estimator": true}}"#).unwrap();
        assert_eq!(partial.steps, 5);
        assert!(partial.ablation.no_estimator);
        assert!(Ablation::parse("bogus").is_err());
    }
}
