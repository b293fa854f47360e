//! Experiment drivers behind the command line: simulate, train, sweep,
//! oracle and ablate. Every run directory gets `manifest.json` plus copies
//! of the scenario and config it ran with.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{self, GreedyPolicy, OracleResult, Policy, RandomPolicy};
use crate::env::{Action, Env, StepLogWriter};
use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::seed::{self, stream};
use crate::tdrl::{run_training, Ablation, ActorPolicy, Agent, TrainConfig, Trainer, TrainingReport};

pub const THREADS_VAR: &str = "RIS_SEMOPT_THREADS";

/// Worker pool capped by `RIS_SEMOPT_THREADS` (all cores when unset).
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let n = match std::env::var(THREADS_VAR) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("{THREADS_VAR} must be a positive integer, got {v:?}")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Config(e.to_string()))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub scenario_hash: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub out_dir: PathBuf,
    pub started: String,
    pub finished: String,
    /// Command-specific settings (steps, policy, axis, ...).
    pub extra: serde_json::Value,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(&path, &e))
    }
}

/// Opens a run directory and writes the manifest once the run is done.
struct Run {
    command: &'static str,
    dir: PathBuf,
    scenario_hash: String,
    config_hash: String,
    seed: u64,
    started: chrono::DateTime<chrono::Utc>,
}

impl Run {
    fn start(command: &'static str, dir: &Path, scenario: &Scenario, config_json: &str, seed: u64) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, text: &str| {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        write("scenario.json", &scenario.to_json())?;
        write("config.json", config_json)?;
        Ok(Self {
            command,
            dir: dir.to_path_buf(),
            scenario_hash: scenario.hash(),
            config_hash: sha256_hex(config_json.as_bytes()),
            seed,
            started: chrono::Utc::now(),
        })
    }

    fn finish(self, extra: serde_json::Value) -> Result<RunManifest> {
        let m = RunManifest {
            command: self.command.into(),
            scenario_hash: self.scenario_hash,
            config_hash: self.config_hash,
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION").into(),
            out_dir: self.dir.clone(),
            started: self.started.to_rfc3339(),
            finished: chrono::Utc::now().to_rfc3339(),
            extra,
        };
        let p = self.dir.join("manifest.json");
        fs::write(&p, serde_json::to_string_pretty(&m)?).map_err(|e| Error::io(&p, e))?;
        Ok(m)
    }
}

/// Which policy `simulate` runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicySpec {
    Random,
    /// Greedy local search on every step's channel.
    Greedy { restarts: usize },
    /// No links, RIS left as is.
    Idle,
    /// Greedy decoding of a trained actor checkpoint.
    Checkpoint(PathBuf),
}

impl PolicySpec {
    /// `random`, `idle`, `greedy`, `greedy:<restarts>` or `checkpoint:<path>`.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "idle" => Ok(Self::Idle),
            "greedy" => Ok(Self::Greedy { restarts: 2 }),
            _ => {
                if let Some(r) = s.strip_prefix("greedy:") {
                    let restarts = r
                        .parse()
                        .map_err(|_| Error::Config(format!("bad restart count in policy {s:?}")))?;
                    Ok(Self::Greedy { restarts })
                } else if let Some(p) = s.strip_prefix("checkpoint:") {
                    Ok(Self::Checkpoint(p.into()))
                } else {
                    Err(Error::Config(format!("unknown policy {s:?}")))
                }
            }
        }
    }

    fn build(&self, scenario: &Scenario, config: &TrainConfig, env: &Env, seed: u64) -> Result<Box<dyn Policy>> {
        struct IdlePolicy;
        impl Policy for IdlePolicy {
            fn act(&mut self, env: &Env) -> Result<Action> {
                let m = env.model();
                let mut a = Action::idle(m.users, m.bands, m.elements);
                a.phi = env.last_action().phi.clone();
                Ok(a)
            }
        }
        Ok(match self {
            Self::Random => Box::new(RandomPolicy::new(env.model(), seed)),
            Self::Greedy { restarts } => Box::new(GreedyPolicy::new(*restarts, seed)),
            Self::Idle => Box::new(IdlePolicy),
            Self::Checkpoint(path) => {
                let (actor, grammar, layout) = Agent::load_actor(path, scenario, config)?;
                Box::new(ActorPolicy { actor, grammar, layout })
            }
        })
    }
}

impl std::fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Random => write!(f, "random"),
            Self::Idle => write!(f, "idle"),
            Self::Greedy { restarts } => write!(f, "greedy:{restarts}"),
            Self::Checkpoint(p) => write!(f, "checkpoint:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub steps: u64,
    pub mean_eta: f64,
    pub mean_reward: f64,
    pub half_duplex_violations: u64,
}

/// Runs `policy` for `steps` steps with ground-truth similarity and writes
/// `steps.csv` (one row per step).
pub fn cmd_simulate(
    scenario: &Scenario,
    config: &TrainConfig,
    policy: &PolicySpec,
    steps: u64,
    seed: u64,
    out: &Path,
) -> Result<SimulationSummary> {
    let run = Run::start("simulate", out, scenario, &config.to_json(), seed)?;
    let mut env = Env::new(scenario, seed)?;
    let mut episode = 0;
    env.reset(seed::derive(seed, &[stream::EPISODE, episode]))?;
    let mut pol = policy.build(scenario, config, &env, seed)?;
    let mut log = StepLogWriter::create(&out.join("steps.csv"), env.model().users)?;
    let mut summary = SimulationSummary {
        steps,
        mean_eta: 0.0,
        mean_reward: 0.0,
        half_duplex_violations: 0,
    };
    for t in 0..steps {
        let action = pol.act(&env)?;
        if !action.schedule.is_valid() {
            summary.half_duplex_violations += 1;
        }
        let o = env.step(&action)?;
        log.write(t + 1, &o, false)?;
        summary.mean_eta += o.eta;
        summary.mean_reward += o.reward;
        if o.done {
            episode += 1;
            env.reset(seed::derive(seed, &[stream::EPISODE, episode]))?;
        }
    }
    log.flush()?;
    if steps > 0 {
        summary.mean_eta /= steps as f64;
        summary.mean_reward /= steps as f64;
    }
    run.finish(serde_json::json!({ "policy": policy.to_string(), "steps": steps, "summary": summary }))?;
    Ok(summary)
}

/// Trains (or resumes from `resume`) and writes logs, checkpoints and
/// `report.json` to `out`.
pub fn cmd_train(
    scenario: &Scenario,
    config: &TrainConfig,
    seed: u64,
    out: &Path,
    resume: Option<&Path>,
) -> Result<TrainingReport> {
    let run = Run::start("train", out, scenario, &config.to_json(), seed)?;
    let report = match resume {
        Some(ck) => Trainer::resume(scenario, config, ck)?.run(Some(out))?,
        None => run_training(scenario, config, seed, Some(out))?,
    };
    run.finish(serde_json::json!({
        "steps": config.steps,
        "ablation": config.ablation,
        "resumed_from": resume,
        "final_eval_eta": report.final_eval_eta,
    }))?;
    Ok(report)
}

/// Variants trained by [`cmd_ablate`]: the full loop and each single ablation.
pub fn ablation_variants(only: Option<Ablation>) -> Vec<(&'static str, Ablation)> {
    let all = [
        ("full", Ablation::default()),
        ("no_cache", Ablation { no_cache: true, ..Ablation::default() }),
        ("no_truncation", Ablation { no_truncation: true, ..Ablation::default() }),
        ("no_estimator", Ablation { no_estimator: true, ..Ablation::default() }),
    ];
    match only {
        Some(a) if a != Ablation::default() => all.into_iter().filter(|(n, v)| *n == "full" || *v == a).collect(),
        _ => all.to_vec(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub final_eval_eta: f64,
    pub best_eval_eta: f64,
    pub calibration_calls: u64,
    pub gt_queries: u64,
    pub gt_per_1k_after_convergence: Option<f64>,
    pub wall_s: f64,
}

/// Trains the full loop and the requested ablation (all three when `only` is
/// `None`) with identical seeds; each variant gets a subdirectory and the
/// comparison goes to `ablation.csv`.
pub fn cmd_ablate(
    scenario: &Scenario,
    config: &TrainConfig,
    only: Option<Ablation>,
    seed: u64,
    out: &Path,
) -> Result<Vec<AblationRow>> {
    let run = Run::start("ablate", out, scenario, &config.to_json(), seed)?;
    let mut rows = Vec::new();
    for (name, ablation) in ablation_variants(only) {
        let cfg = TrainConfig { ablation, ..config.clone() };
        let t = Instant::now();
        let r = cmd_train(scenario, &cfg, seed, &out.join(name), None)?;
        rows.push(AblationRow {
            variant: name.into(),
            final_eval_eta: r.final_eval_eta,
            best_eval_eta: r.best_eval_eta,
            calibration_calls: r.calibration_calls,
            gt_queries: r.gt_queries,
            gt_per_1k_after_convergence: r.gt_rate_after_convergence(),
            wall_s: t.elapsed().as_secs_f64(),
        });
    }
    let mut w = csv::Writer::from_path(out.join("ablation.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    run.finish(serde_json::json!({ "variants": rows.iter().map(|r| &r.variant).collect::<Vec<_>>() }))?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    RisSize,
    Users,
}

impl Axis {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ris_size" => Ok(Self::RisSize),
            "users" => Ok(Self::Users),
            _ => Err(Error::Config(format!("unknown sweep axis {s:?}"))),
        }
    }

    pub fn apply(self, scenario: &Scenario, value: usize) -> Scenario {
        match self {
            Self::RisSize => scenario.clone().with_elements(value),
            Self::Users => scenario.clone().with_users(value),
        }
    }
}

/// Parses a comma-separated list such as `4,16,36`.
pub fn parse_values(s: &str) -> Result<Vec<usize>> {
    let v: Vec<usize> = s
        .split(',')
        .map(|x| x.trim().parse().map_err(|_| Error::Config(format!("bad sweep value {x:?}"))))
        .collect::<Result<_>>()?;
    if v.is_empty() {
        return Err(Error::Config("empty sweep value list".into()));
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: usize,
    pub seed: u64,
    pub eta: f64,
    pub eta_per_user: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: usize,
    pub seeds: usize,
    pub mean_eta: f64,
    pub std_eta: f64,
    pub mean_eta_per_user: f64,
}

pub const SWEEP_RESTARTS: usize = 2;

/// Greedy local search on each point's frozen realization.
pub fn sweep_points(scenario: &Scenario, axis: Axis, values: &[usize], seeds: &[u64]) -> Result<Vec<SweepPoint>> {
    let jobs: Vec<(usize, u64)> = values.iter().flat_map(|&v| seeds.iter().map(move |&s| (v, s))).collect();
    thread_pool()?.install(|| {
        jobs.par_iter()
            .map(|&(value, seed)| {
                let sc = axis.apply(scenario, value);
                sc.validate()?;
                let env = Env::new(&sc, seed)?;
                let r = baselines::greedy_local_search(env.model(), env.realization(), SWEEP_RESTARTS, seed)?;
                Ok(SweepPoint {
                    value,
                    seed,
                    eta: r.eta,
                    eta_per_user: r.eta / sc.user_count() as f64,
                })
            })
            .collect()
    })
}

pub fn aggregate(points: &[SweepPoint], values: &[usize]) -> Vec<SweepRow> {
    values
        .iter()
        .map(|&value| {
            let etas: Vec<&SweepPoint> = points.iter().filter(|p| p.value == value).collect();
            let n = etas.len() as f64;
            let mean = etas.iter().map(|p| p.eta).sum::<f64>() / n;
            let var = etas.iter().map(|p| (p.eta - mean).powi(2)).sum::<f64>() / n;
            SweepRow {
                value,
                seeds: etas.len(),
                mean_eta: mean,
                std_eta: var.sqrt(),
                mean_eta_per_user: etas.iter().map(|p| p.eta_per_user).sum::<f64>() / n,
            }
        })
        .collect()
}

/// Writes `points.csv` (one row per value and seed) and `sweep.csv`
/// (one aggregate row per value).
pub fn cmd_sweep(
    scenario: &Scenario,
    axis: Axis,
    values: &[usize],
    seeds: &[u64],
    out: &Path,
) -> Result<Vec<SweepRow>> {
    let config = serde_json::json!({ "axis": axis, "values": values, "seeds": seeds, "restarts": SWEEP_RESTARTS });
    let run = Run::start("sweep", out, scenario, &serde_json::to_string_pretty(&config)?, seeds[0])?;
    let points = sweep_points(scenario, axis, values, seeds)?;
    let rows = aggregate(&points, values);
    let mut w = csv::Writer::from_path(out.join("points.csv"))?;
    for p in &points {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    let mut w = csv::Writer::from_path(out.join("sweep.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    run.finish(config)?;
    Ok(rows)
}

/// Exhaustive search on the seed's first realization; writes `oracle.json`.
pub fn cmd_oracle(scenario: &Scenario, seed: u64, budget: u64, out: &Path) -> Result<OracleResult> {
    let env = Env::new(scenario, seed)?;
    let r = thread_pool()?.install(|| baselines::exhaustive_oracle(env.model(), env.realization(), budget))?;
    let run = Run::start("oracle", out, scenario, &serde_json::json!({ "budget": budget }).to_string(), seed)?;
    let p = out.join("oracle.json");
    fs::write(&p, r.to_json()).map_err(|e| Error::io(&p, e))?;
    run.finish(serde_json::json!({ "budget": budget, "eta": r.eta }))?;
    Ok(r)
}
