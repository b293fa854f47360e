//! Minimal tensor and reverse-mode gradient engine.
//!
//! Networks are fixed stacks of [`DenseLayer`]s and [`AttentionBlock`]s; each
//! forward pass returns a tape, and each backward pass accumulates gradients
//! into a flat `Vec<Tensor>` ordered like [`Parameters::parameters`].

mod adam;
mod attention;
mod checkpoint;
mod dense;
mod tensor;

pub use adam::{adam_step, clip_grad_norm, AdamConfig, AdamState};
pub use attention::{AttentionBlock, AttentionTape, KvCache};
pub use checkpoint::Checkpoint;
pub use dense::{
    sigmoid, softmax_in_place, softplus, Activation, DenseLayer, DenseTape, Gradients, LayerStack,
    StackTape,
};
pub use tensor::Tensor;

/// Anything holding trainable tensors in a fixed order.
pub trait Parameters {
    fn parameters(&self) -> Vec<&Tensor>;
    fn parameters_mut(&mut self) -> Vec<&mut Tensor>;

    fn zero_grads(&self) -> Vec<Tensor> {
        self.parameters()
            .into_iter()
            .map(|p| Tensor::zeros(p.shape()))
            .collect()
    }

    fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    fn load_parameters(&mut self, values: &[Tensor]) -> crate::Result<()> {
        let mut params = self.parameters_mut();
        if params.len() != values.len() {
            return Err(crate::Error::Checkpoint(format!(
                "expected {} tensors, got {}",
                params.len(),
                values.len()
            )));
        }
        for (p, v) in params.iter_mut().zip(values) {
            if p.shape() != v.shape() {
                return Err(crate::Error::Checkpoint(format!(
                    "shape {:?} does not match stored {:?}",
                    p.shape(),
                    v.shape()
                )));
            }
            **p = v.clone();
        }
        Ok(())
    }
}

/// Central-difference check of an analytic gradient.
///
/// `loss` is evaluated with each parameter entry nudged by `±step`; returns
/// the worst relative error `|a - n| / max(|a|, |n|, floor)`.
pub fn gradient_check<M, F>(model: &mut M, analytic: &[Tensor], step: f64, floor: f64, mut loss: F) -> f64
where
    M: Parameters,
    F: FnMut(&M) -> f64,
{
    let mut worst: f64 = 0.0;
    let n_params = analytic.len();
    for pi in 0..n_params {
        for ei in 0..analytic[pi].len() {
            let orig = model.parameters()[pi].data()[ei];
            model.parameters_mut()[pi].data_mut()[ei] = orig + step;
            let up = loss(model);
            model.parameters_mut()[pi].data_mut()[ei] = orig - step;
            let down = loss(model);
            model.parameters_mut()[pi].data_mut()[ei] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic[pi].data()[ei];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst = worst.max(rel);
        }
    }
    worst
}
