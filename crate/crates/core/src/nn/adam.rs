use serde::{Deserialize, Serialize};

use super::{Checkpoint, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub(crate) first: Vec<Tensor>,
    pub(crate) second: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &[&Tensor], config: AdamConfig) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            config,
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    pub fn to_checkpoint(&self, ck: &mut Checkpoint, prefix: &str) {
        ck.push_all(&format!("{prefix}.m"), &self.first);
        ck.push_all(&format!("{prefix}.v"), &self.second);
        ck.push(format!("{prefix}.step"), Tensor::vector(vec![self.step as f64]));
    }

    /// Restores moments saved by [`AdamState::to_checkpoint`]; shapes must match.
    pub fn load_checkpoint(&mut self, ck: &Checkpoint, prefix: &str) -> Result<()> {
        let n = self.first.len();
        let first = ck.take_all(&format!("{prefix}.m"), n)?;
        let second = ck.take_all(&format!("{prefix}.v"), n)?;
        let step = ck
            .get(&format!("{prefix}.step"))
            .ok_or_else(|| Error::Checkpoint(format!("missing {prefix}.step")))?
            .data()[0] as u64;
        let current = self.first.iter().chain(&self.second);
        for (a, b) in current.zip(first.iter().chain(&second)) {
            if a.shape() != b.shape() {
                return Err(Error::Checkpoint(format!("{prefix}: optimizer moment shape mismatch")));
            }
        }
        self.first = first;
        self.second = second;
        self.step = step;
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.first, &self.second)
    }
}

/// One bias-corrected Adam update. Rejects the whole step if any gradient is
/// non-finite, leaving parameters and moments untouched.
pub fn adam_step(params: Vec<&mut Tensor>, grads: &[Tensor], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(Error::Config(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.first.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.first[i].shape() {
            return Err(Error::Config(format!(
                "adam: parameter {i} shape {:?} vs gradient {:?}",
                p.shape(),
                g.shape()
            )));
        }
        if !g.is_finite() {
            return Err(Error::NonFinite(format!(
                "adam: gradient for parameter {i} (shape {:?}) contains NaN/inf",
                g.shape()
            )));
        }
    }
    state.step += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (i, p) in params.into_iter().enumerate() {
        let m = state.first[i].data_mut();
        let v = state.second[i].data_mut();
        for (((pv, &gv), mv), vv) in p
            .data_mut()
            .iter_mut()
            .zip(grads[i].data())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *mv = beta1 * *mv + (1.0 - beta1) * gv;
            *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
            *pv -= lr * (*mv / c1) / ((*vv / c2).sqrt() + eps);
        }
    }
    Ok(())
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads.iter().map(Tensor::sum_squares).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let f = max_norm / norm;
        grads.iter_mut().for_each(|g| g.scale(f));
    }
    norm
}
