//! State-value network.
//!
//! The control part of the observation goes through a frozen embedding
//! (shared with the estimator when sharing is on); the rest is appended raw.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::EMBED;
use crate::nn::{Activation, Checkpoint, DenseLayer, LayerStack, Parameters, StackTape, Tensor};

pub const CRITIC_HIDDEN: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Critic {
    control_dim: usize,
    embed: DenseLayer,
    body: LayerStack,
}

pub struct CriticTape {
    body: StackTape,
}

impl Critic {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, control_dim: usize, rng: &mut R) -> Result<Self> {
        if control_dim > obs_dim {
            return Err(Error::Config(format!(
                "control part ({control_dim}) larger than the observation ({obs_dim})"
            )));
        }
        let embed = DenseLayer::new(control_dim, EMBED, Activation::Tanh, rng);
        let rest = obs_dim - control_dim;
        let body = LayerStack::new(
            &[EMBED + rest, CRITIC_HIDDEN, CRITIC_HIDDEN, 1],
            Activation::Tanh,
            Activation::Identity,
            rng,
        );
        Ok(Self {
            control_dim,
            embed,
            body,
        })
    }

    pub fn control_embedding(&self) -> &DenseLayer {
        &self.embed
    }

    pub fn obs_dim(&self) -> usize {
        self.body.in_dim() - EMBED + self.control_dim
    }

    fn features(&self, obs: &[Vec<f64>]) -> Result<Tensor> {
        let dim = self.obs_dim();
        if let Some(o) = obs.iter().find(|o| o.len() != dim) {
            return Err(Error::Usage(format!(
                "observation has {} features, critic expects {dim}",
                o.len()
            )));
        }
        let n = obs.len();
        let c: Vec<f64> = obs.iter().flat_map(|o| o[..self.control_dim].iter().copied()).collect();
        let r: Vec<f64> = obs.iter().flat_map(|o| o[self.control_dim..].iter().copied()).collect();
        let e = self.embed.infer(&Tensor::matrix(n, self.control_dim, c)?)?;
        e.hcat(&Tensor::matrix(n, dim - self.control_dim, r)?)
    }

    pub fn values(&self, obs: &[Vec<f64>]) -> Result<Vec<f64>> {
        if obs.is_empty() {
            return Ok(Vec::new());
        }
        Ok(self.body.infer(&self.features(obs)?)?.into_data())
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.values(&[obs.to_vec()])?[0])
    }

    pub fn forward(&self, obs: &[Vec<f64>]) -> Result<(Vec<f64>, CriticTape)> {
        let (v, body) = self.body.run(&self.features(obs)?)?;
        Ok((v.into_data(), CriticTape { body }))
    }

    /// Accumulates gradients of the trainable body (the embedding is frozen).
    pub fn backward(&self, tape: &CriticTape, dv: &[f64], grads: &mut [Tensor]) {
        let dy = Tensor::matrix(dv.len(), 1, dv.to_vec()).expect("one gradient per value");
        self.body.backprop(&tape.body, &dy, grads);
    }

    pub fn to_checkpoint(&self, ck: &mut Checkpoint, prefix: &str) {
        ck.push_all(&format!("{prefix}.embed"), self.embed.parameters());
        ck.push_all(prefix, self.parameters());
    }

    pub fn load_checkpoint(&mut self, ck: &Checkpoint, prefix: &str) -> Result<()> {
        let e = ck.take_all(&format!("{prefix}.embed"), 2)?;
        self.embed.load_parameters(&e)?;
        let n = self.parameters().len();
        self.load_parameters(&ck.take_all(prefix, n)?)
    }
}

/// Only the body is trainable.
impl Parameters for Critic {
    fn parameters(&self) -> Vec<&Tensor> {
        self.body.parameters()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.body.parameters_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn shapes_and_batching() {
        let mut rng = seed::rng(1, &[]);
        let c = Critic::new(10, 6, &mut rng).unwrap();
        let obs: Vec<Vec<f64>> = (0..3).map(|i| (0..10).map(|j| (i * j) as f64 * 0.01).collect()).collect();
        let batch = c.values(&obs).unwrap();
        for (o, v) in obs.iter().zip(&batch) {
            assert!((c.value(o).unwrap() - v).abs() < 1e-12);
        }
        assert!(c.value(&[0.0; 9]).is_err());
        assert!(Critic::new(3, 4, &mut rng).is_err());
    }

    #[test]
    fn value_gradient_matches_differences() {
        let mut rng = seed::rng(2, &[]);
        let mut c = Critic::new(5, 3, &mut rng).unwrap();
        let obs = vec![vec![0.1, 0.2, -0.3, 0.4, 0.5], vec![-0.2, 0.0, 0.7, 0.1, -0.4]];
        let target = [0.3, -0.6];
        let loss = |m: &Critic| -> f64 {
            let v = m.values(&obs).unwrap();
            v.iter().zip(&target).map(|(v, t)| 0.5 * (v - t) * (v - t)).sum()
        };
        let (v, tape) = c.forward(&obs).unwrap();
        let dv: Vec<f64> = v.iter().zip(&target).map(|(v, t)| v - t).collect();
        let mut grads = c.zero_grads();
        c.backward(&tape, &dv, &mut grads);
        let worst = crate::nn::gradient_check(&mut c, &grads, 1e-6, 1e-6, loss);
        assert!(worst < 1e-4, "{worst}");
    }
}
