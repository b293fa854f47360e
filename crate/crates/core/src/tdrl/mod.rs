//! Truncated deep reinforcement learning: token actor, critic, PPO, the
//! scheduling-keyed model cache and the training loop.

pub mod action;
pub mod actor;
pub mod cache;
pub mod critic;
pub mod policy;
pub mod ppo;
pub mod trainer;

pub use action::{to_bits, Grammar, BETA_BITS};
pub use actor::{ActionSequence, Actor, ActorConfig, SampleMode, Sampler, TokenKind};
pub use cache::{calibrate_entry, CacheEntry, CacheTable};
pub use critic::Critic;
pub use ppo::{compute_advantages, ppo_update, PpoConfig, PpoOptimizers, PpoStats, RewardNormalizer, Transition};
pub use policy::{actor_sample, decide, sample_remainder, sample_schedule, ActorPolicy, Layout, Phase};
pub use trainer::{evaluate_actor, run_training, Ablation, Agent, EvalPoint, TrainConfig, Trainer, TrainingReport};
