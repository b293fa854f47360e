//! Simulator and optimizer for multi-band RIS-assisted multi-user semantic
//! communication.
//!
//! The crate models the physical layer ([`channel`]), semantic fidelity
//! ([`semfidelity`]), energy ([`energy`]) and the scheduling MDP ([`env`]), and
//! optimizes the network's energy efficiency with a truncated PPO agent
//! ([`tdrl`]) backed by a learned similarity estimator ([`estimator`]) and a
//! scheduling-keyed model cache. [`baselines`] provides exhaustive and greedy
//! reference solvers; [`runner`] drives experiments and writes CSV logs.

pub mod baselines;
pub mod channel;
pub mod energy;
pub mod env;
pub mod estimator;
pub mod nn;
pub mod runner;
pub mod scenario;
pub mod seed;
pub mod semfidelity;
pub mod tdrl;

mod error;

pub use error::{Error, Result};
