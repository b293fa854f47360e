use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Parameters, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Softmax,
    Sigmoid,
}

impl Activation {
    /// Applies the activation to one row of pre-activations in place.
    fn apply_row(self, z: &mut [f64]) {
        match self {
            Activation::Identity => {}
            Activation::Relu => z.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Tanh => z.iter_mut().for_each(|v| *v = v.tanh()),
            Activation::Sigmoid => z.iter_mut().for_each(|v| *v = sigmoid(*v)),
            Activation::Softmax => softmax_in_place(z),
        }
    }

    /// Maps `dL/dy` to `dL/dz` for one row, given the activation output `y`.
    fn backprop_row(self, y: &[f64], dy: &[f64], dz: &mut [f64]) {
        match self {
            Activation::Identity => dz.copy_from_slice(dy),
            Activation::Relu => {
                for ((d, &yv), &g) in dz.iter_mut().zip(y).zip(dy) {
                    *d = if yv > 0.0 { g } else { 0.0 };
                }
            }
            Activation::Tanh => {
                for ((d, &yv), &g) in dz.iter_mut().zip(y).zip(dy) {
                    *d = g * (1.0 - yv * yv);
                }
            }
            Activation::Sigmoid => {
                for ((d, &yv), &g) in dz.iter_mut().zip(y).zip(dy) {
                    *d = g * yv * (1.0 - yv);
                }
            }
            Activation::Softmax => {
                let dot: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
                for ((d, &yv), &g) in dz.iter_mut().zip(y).zip(dy) {
                    *d = yv * (g - dot);
                }
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Glorot-uniform weights, zero bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `[in × out]`
    pub weights: Tensor,
    /// `[out]`
    pub bias: Tensor,
    pub activation: Activation,
}

/// Intermediates kept by [`DenseLayer::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct DenseTape {
    input: Tensor,
    output: Tensor,
}

impl DenseTape {
    pub fn output(&self) -> &Tensor {
        &self.output
    }
}

impl DenseLayer {
    pub fn new<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let data = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self {
            weights: Tensor::new(vec![in_dim, out_dim], data).expect("consistent shape"),
            bias: Tensor::zeros(&[out_dim]),
            activation,
        }
    }

    pub fn from_parts(weights: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if weights.shape().len() != 2 || bias.shape() != [weights.cols()] {
            return Err(Error::Config(format!(
                "dense layer weights {:?} and bias {:?} disagree",
                weights.shape(),
                bias.shape()
            )));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.cols() != self.in_dim() {
            return Err(Error::Config(format!(
                "dense layer expects {} inputs, got shape {:?}",
                self.in_dim(),
                x.shape()
            )));
        }
        Ok(())
    }

    /// Forward pass over a `[batch × in]` matrix without recording a tape.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let (rows, n_in, n_out) = (x.rows(), self.in_dim(), self.out_dim());
        let w = self.weights.data();
        let mut out = vec![0.0; rows * n_out];
        for i in 0..rows {
            let xr = x.row(i);
            let o = &mut out[i * n_out..(i + 1) * n_out];
            o.copy_from_slice(self.bias.data());
            for (p, &xv) in xr.iter().enumerate().take(n_in) {
                if xv == 0.0 {
                    continue;
                }
                for (ov, wv) in o.iter_mut().zip(&w[p * n_out..(p + 1) * n_out]) {
                    *ov += xv * wv;
                }
            }
            self.activation.apply_row(o);
        }
        Tensor::matrix(rows, n_out, out)
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, DenseTape)> {
        let y = self.infer(x)?;
        let input = if x.shape().len() == 2 {
            x.clone()
        } else {
            Tensor::row_vector(x.data())
        };
        Ok((
            y.clone(),
            DenseTape {
                input,
                output: y,
            },
        ))
    }

    /// Accumulates `dW` into `grads[0]` and `db` into `grads[1]`; returns `dL/dx`.
    pub fn backward(&self, tape: &DenseTape, dy: &Tensor, grads: &mut [Tensor]) -> Tensor {
        let (rows, n_in, n_out) = (tape.input.rows(), self.in_dim(), self.out_dim());
        debug_assert_eq!(dy.len(), rows * n_out);
        let w = self.weights.data();
        let mut dz = vec![0.0; n_out];
        let mut dx = vec![0.0; rows * n_in];
        let (gw, gb) = grads.split_at_mut(1);
        let gw = gw[0].data_mut();
        let gb = gb[0].data_mut();
        for i in 0..rows {
            self.activation
                .backprop_row(tape.output.row(i), dy.row(i), &mut dz);
            for (b, d) in gb.iter_mut().zip(&dz) {
                *b += d;
            }
            let xr = tape.input.row(i);
            let dxr = &mut dx[i * n_in..(i + 1) * n_in];
            for p in 0..n_in {
                let wrow = &w[p * n_out..(p + 1) * n_out];
                let grow = &mut gw[p * n_out..(p + 1) * n_out];
                let xv = xr[p];
                let mut acc = 0.0;
                for o in 0..n_out {
                    grow[o] += xv * dz[o];
                    acc += wrow[o] * dz[o];
                }
                dxr[p] = acc;
            }
        }
        Tensor::matrix(rows, n_in, dx).expect("consistent shape")
    }
}

impl Parameters for DenseLayer {
    fn parameters(&self) -> Vec<&Tensor> {
        vec![&self.weights, &self.bias]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weights, &mut self.bias]
    }
}

/// A feed-forward stack of dense layers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerStack {
    pub layers: Vec<DenseLayer>,
    #[serde(skip)]
    cached: Option<StackTape>,
}

impl PartialEq for LayerStack {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

#[derive(Debug, Clone)]
pub struct StackTape {
    tapes: Vec<DenseTape>,
}

/// Parameter gradients plus the gradient with respect to the stack input.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Vec<Tensor>,
    pub input: Tensor,
}

impl LayerStack {
    /// Builds `dims.len() - 1` layers; every layer but the last uses `hidden`.
    pub fn new<R: Rng + ?Sized>(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(dims.len() >= 2, "a stack needs at least one layer");
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output } else { hidden };
                DenseLayer::new(dims[i], dims[i + 1], act, rng)
            })
            .collect();
        Self {
            layers,
            cached: None,
        }
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("empty layer stack".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Config(format!(
                    "layer output {} feeds input {}",
                    pair[0].out_dim(),
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Self {
            layers,
            cached: None,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = self.layers[0].infer(x)?;
        for layer in &self.layers[1..] {
            h = layer.infer(&h)?;
        }
        Ok(h)
    }

    pub fn run(&self, x: &Tensor) -> Result<(Tensor, StackTape)> {
        let mut tapes = Vec::with_capacity(self.layers.len());
        let (mut h, t) = self.layers[0].forward(x)?;
        tapes.push(t);
        for layer in &self.layers[1..] {
            let (y, t) = layer.forward(&h)?;
            tapes.push(t);
            h = y;
        }
        Ok((h, StackTape { tapes }))
    }

    /// Backward through a tape produced by [`LayerStack::run`], accumulating into `grads`.
    pub fn backprop(&self, tape: &StackTape, dy: &Tensor, grads: &mut [Tensor]) -> Tensor {
        let mut g = dy.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            g = layer.backward(&tape.tapes[i], &g, &mut grads[2 * i..2 * i + 2]);
        }
        g
    }

    /// Forward pass that keeps its intermediates for a later [`LayerStack::backward`].
    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let (y, tape) = self.run(x)?;
        self.cached = Some(tape);
        Ok(y)
    }

    /// Gradients of every parameter for the most recent [`LayerStack::forward`].
    pub fn backward(&mut self, upstream: &Tensor) -> Result<Gradients> {
        let tape = self
            .cached
            .take()
            .ok_or_else(|| Error::Usage("backward called before forward".into()))?;
        let out_rows = tape.tapes.last().expect("non-empty").output.rows();
        if upstream.len() != out_rows * self.out_dim() {
            self.cached = Some(tape);
            return Err(Error::Config(format!(
                "upstream gradient has {} values, expected {}",
                upstream.len(),
                out_rows * self.out_dim()
            )));
        }
        let mut params = self.zero_grads();
        let input = self.backprop(&tape, upstream, &mut params);
        if params.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("layer stack gradient".into()));
        }
        Ok(Gradients { params, input })
    }
}

impl Parameters for LayerStack {
    fn parameters(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| l.parameters()).collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.parameters_mut())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn layer(w: Vec<f64>, b: Vec<f64>, rows: usize, cols: usize, act: Activation) -> DenseLayer {
        DenseLayer::from_parts(
            Tensor::matrix(rows, cols, w).unwrap(),
            Tensor::vector(b),
            act,
        )
        .unwrap()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let l = DenseLayer::from_parts(Tensor::identity(3), Tensor::zeros(&[3]), Activation::Identity)
            .unwrap();
        let x = Tensor::row_vector(&[0.5, -1.0, 2.0]);
        assert_eq!(l.infer(&x).unwrap().data(), x.data());
    }

    #[test]
    fn relu_and_softmax_rows() {
        let relu = DenseLayer::from_parts(Tensor::identity(2), Tensor::zeros(&[2]), Activation::Relu)
            .unwrap();
        assert_eq!(
            relu.infer(&Tensor::row_vector(&[-1.0, 2.0])).unwrap().data(),
            &[0.0, 2.0]
        );
        let sm =
            DenseLayer::from_parts(Tensor::identity(2), Tensor::zeros(&[2]), Activation::Softmax)
                .unwrap();
        assert_eq!(
            sm.infer(&Tensor::row_vector(&[0.0, 0.0])).unwrap().data(),
            &[0.5, 0.5]
        );
    }

    #[test]
    fn shape_mismatch_is_config_error() {
        let mut rng = seed::rng(1, &[]);
        let l = DenseLayer::new(3, 2, Activation::Tanh, &mut rng);
        assert!(matches!(
            l.infer(&Tensor::row_vector(&[1.0, 2.0])),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn single_neuron_weight_gradient() {
        let mut stack = LayerStack::from_layers(vec![layer(
            vec![0.7],
            vec![0.0],
            1,
            1,
            Activation::Identity,
        )])
        .unwrap();
        stack.forward(&Tensor::row_vector(&[3.0])).unwrap();
        let g = stack.backward(&Tensor::row_vector(&[1.0])).unwrap();
        assert_eq!(g.params[0].data(), &[3.0]);
        assert_eq!(g.input.data(), &[0.7]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = seed::rng(2, &[]);
        let mut stack = LayerStack::new(&[4, 5, 3], Activation::Tanh, Activation::Sigmoid, &mut rng);
        stack.forward(&Tensor::row_vector(&[0.1, 0.2, -0.3, 0.4])).unwrap();
        let g = stack.backward(&Tensor::zeros(&[1, 3])).unwrap();
        assert!(g.params.iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn backward_before_forward_is_usage_error() {
        let mut rng = seed::rng(3, &[]);
        let mut stack = LayerStack::new(&[2, 2], Activation::Tanh, Activation::Identity, &mut rng);
        assert!(matches!(
            stack.backward(&Tensor::zeros(&[1, 2])),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn init_is_bounded_and_seeded() {
        let mut a = seed::rng(9, &[]);
        let mut b = seed::rng(9, &[]);
        let la = DenseLayer::new(10, 6, Activation::Relu, &mut a);
        let lb = DenseLayer::new(10, 6, Activation::Relu, &mut b);
        assert_eq!(la, lb);
        let limit = (6.0f64 / 16.0).sqrt();
        assert!(la.weights.data().iter().all(|w| w.abs() <= limit));
    }
}
