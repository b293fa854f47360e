//! Single-head causal self-attention with an output projection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dense::{softmax_in_place, Activation, DenseLayer, DenseTape};
use super::{Parameters, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionBlock {
    pub query: DenseLayer,
    pub key: DenseLayer,
    pub value: DenseLayer,
    pub output: DenseLayer,
    head_dim: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionTape {
    q: DenseTape,
    k: DenseTape,
    v: DenseTape,
    /// Row `t` holds the weights over positions `0..=t`, zero-padded.
    weights: Tensor,
    out: DenseTape,
}

impl AttentionTape {
    pub fn weights(&self) -> &Tensor {
        &self.weights
    }
}

/// Keys and values of already-processed positions, for incremental decoding.
#[derive(Debug, Clone, Default)]
pub struct KvCache {
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
}

impl KvCache {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

impl AttentionBlock {
    pub fn new<R: Rng + ?Sized>(embed: usize, head_dim: usize, rng: &mut R) -> Self {
        Self {
            query: DenseLayer::new(embed, head_dim, Activation::Identity, rng),
            key: DenseLayer::new(embed, head_dim, Activation::Identity, rng),
            value: DenseLayer::new(embed, head_dim, Activation::Identity, rng),
            output: DenseLayer::new(head_dim, embed, Activation::Identity, rng),
            head_dim,
        }
    }

    pub fn from_parts(
        query: DenseLayer,
        key: DenseLayer,
        value: DenseLayer,
        output: DenseLayer,
    ) -> Result<Self> {
        let head_dim = query.out_dim();
        let embed = query.in_dim();
        let consistent = head_dim > 0
            && key.in_dim() == embed
            && value.in_dim() == embed
            && key.out_dim() == head_dim
            && value.out_dim() == head_dim
            && output.in_dim() == head_dim
            && output.out_dim() == embed;
        if !consistent {
            return Err(Error::Config("attention projections disagree".into()));
        }
        Ok(Self {
            query,
            key,
            value,
            output,
            head_dim,
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.query.in_dim()
    }

    pub fn head_dim(&self) -> usize {
        self.head_dim
    }

    fn scale(&self) -> f64 {
        1.0 / (self.head_dim as f64).sqrt()
    }

    pub fn forward(&self, tokens: &Tensor) -> Result<(Tensor, AttentionTape)> {
        let len = tokens.rows();
        if tokens.is_empty() || len == 0 {
            return Err(Error::Usage("attention over an empty sequence".into()));
        }
        let (q, qt) = self.query.forward(tokens)?;
        let (k, kt) = self.key.forward(tokens)?;
        let (v, vt) = self.value.forward(tokens)?;
        let d = self.head_dim;
        let scale = self.scale();
        let mut weights = Tensor::zeros(&[len, len]);
        let mut attended = vec![0.0; len * d];
        let mut scores = Vec::with_capacity(len);
        for t in 0..len {
            scores.clear();
            let qr = q.row(t);
            for j in 0..=t {
                scores.push(dot(qr, k.row(j)) * scale);
            }
            softmax_in_place(&mut scores);
            weights.row_mut(t)[..=t].copy_from_slice(&scores);
            let o = &mut attended[t * d..(t + 1) * d];
            for (j, &a) in scores.iter().enumerate() {
                for (ov, vv) in o.iter_mut().zip(v.row(j)) {
                    *ov += a * vv;
                }
            }
        }
        let attended = Tensor::matrix(len, d, attended)?;
        let (y, out) = self.output.forward(&attended)?;
        Ok((
            y,
            AttentionTape {
                q: qt,
                k: kt,
                v: vt,
                weights,
                out,
            },
        ))
    }

    /// Processes one new position against the cached prefix and extends the cache.
    pub fn step(&self, token: &[f64], cache: &mut KvCache) -> Result<Vec<f64>> {
        let x = Tensor::row_vector(token);
        let q = self.query.infer(&x)?.into_data();
        cache.keys.push(self.key.infer(&x)?.into_data());
        cache.values.push(self.value.infer(&x)?.into_data());
        let scale = self.scale();
        let mut scores: Vec<f64> = cache.keys.iter().map(|k| dot(&q, k) * scale).collect();
        softmax_in_place(&mut scores);
        let mut attended = vec![0.0; self.head_dim];
        for (a, v) in scores.iter().zip(&cache.values) {
            for (ov, vv) in attended.iter_mut().zip(v) {
                *ov += a * vv;
            }
        }
        Ok(self.output.infer(&Tensor::row_vector(&attended))?.into_data())
    }

    /// Parameter order: query, key, value, output (weights then bias each).
    pub fn backward(&self, tape: &AttentionTape, dy: &Tensor, grads: &mut [Tensor]) -> Tensor {
        let len = tape.weights.rows();
        let d = self.head_dim;
        let scale = self.scale();
        let (gq, rest) = grads.split_at_mut(2);
        let (gk, rest) = rest.split_at_mut(2);
        let (gv, go) = rest.split_at_mut(2);

        let d_att = self.output.backward(&tape.out, dy, go);
        let q = tape.q.output();
        let k = tape.k.output();
        let v = tape.v.output();
        let a = &tape.weights;

        let mut dq = vec![0.0; len * d];
        let mut dk = vec![0.0; len * d];
        let mut dv = vec![0.0; len * d];
        let mut da = vec![0.0; len];
        for t in 0..len {
            let g = d_att.row(t);
            let arow = a.row(t);
            let mut weighted = 0.0;
            for j in 0..=t {
                da[j] = dot(g, v.row(j));
                weighted += da[j] * arow[j];
                let dvr = &mut dv[j * d..(j + 1) * d];
                for (x, gv) in dvr.iter_mut().zip(g) {
                    *x += arow[j] * gv;
                }
            }
            for j in 0..=t {
                let ds = arow[j] * (da[j] - weighted) * scale;
                if ds == 0.0 {
                    continue;
                }
                let kr = k.row(j);
                let qr = q.row(t);
                for c in 0..d {
                    dq[t * d + c] += ds * kr[c];
                    dk[j * d + c] += ds * qr[c];
                }
            }
        }
        let dq = Tensor::matrix(len, d, dq).expect("shape");
        let dk = Tensor::matrix(len, d, dk).expect("shape");
        let dv = Tensor::matrix(len, d, dv).expect("shape");
        let mut dx = self.query.backward(&tape.q, &dq, gq);
        dx.add_assign(&self.key.backward(&tape.k, &dk, gk));
        dx.add_assign(&self.value.backward(&tape.v, &dv, gv));
        dx
    }
}

impl Parameters for AttentionBlock {
    fn parameters(&self) -> Vec<&Tensor> {
        let mut p = self.query.parameters();
        p.extend(self.key.parameters());
        p.extend(self.value.parameters());
        p.extend(self.output.parameters());
        p
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.query.parameters_mut();
        p.extend(self.key.parameters_mut());
        p.extend(self.value.parameters_mut());
        p.extend(self.output.parameters_mut());
        p
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn identity_block(n: usize) -> AttentionBlock {
        let id = || {
            DenseLayer::from_parts(Tensor::identity(n), Tensor::zeros(&[n]), Activation::Identity)
                .unwrap()
        };
        AttentionBlock::from_parts(id(), id(), id(), id()).unwrap()
    }

    #[test]
    fn single_token_attends_to_itself() {
        let block = identity_block(3);
        let x = Tensor::row_vector(&[0.3, -0.2, 1.0]);
        let (y, tape) = block.forward(&x).unwrap();
        assert_eq!(tape.weights().data(), &[1.0]);
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn identical_tokens_average_values() {
        let block = identity_block(2);
        let x = Tensor::matrix(2, 2, vec![0.5, 1.5, 0.5, 1.5]).unwrap();
        let (y, tape) = block.forward(&x).unwrap();
        assert_eq!(tape.weights().row(1), &[0.5, 0.5]);
        assert_eq!(y.row(1), &[0.5, 1.5]);
    }

    #[test]
    fn empty_sequence_rejected() {
        let block = identity_block(2);
        let x = Tensor::zeros(&[0, 2]);
        assert!(matches!(block.forward(&x), Err(Error::Usage(_))));
    }

    #[test]
    fn hand_evaluated_four_tokens() {
        let mut rng = seed::rng(11, &[]);
        let block = AttentionBlock::new(3, 2, &mut rng);
        let data: Vec<f64> = (0..12).map(|i| ((i * 7) % 5) as f64 * 0.3 - 0.6).collect();
        let x = Tensor::matrix(4, 3, data).unwrap();
        let (y, _) = block.forward(&x).unwrap();

        // softmax(QK^T / sqrt(d)) V Wo + bo, written out with plain matrix products.
        let q = x.matmul(&block.query.weights).unwrap();
        let k = x.matmul(&block.key.weights).unwrap();
        let v = x.matmul(&block.value.weights).unwrap();
        let s = q.matmul(&k.transpose()).unwrap();
        let mut expected = Vec::new();
        for t in 0..4 {
            let row: Vec<f64> = (0..=t).map(|j| s.row(t)[j] / 2f64.sqrt()).collect();
            let m = row.iter().cloned().fold(f64::MIN, f64::max);
            let z: f64 = row.iter().map(|r| (r - m).exp()).sum();
            let mut att = [0.0; 2];
            for (j, r) in row.iter().enumerate() {
                for c in 0..2 {
                    att[c] += (r - m).exp() / z * v.row(j)[c];
                }
            }
            let o = Tensor::row_vector(&att).matmul(&block.output.weights).unwrap();
            expected.extend_from_slice(o.data());
        }
        for (a, b) in y.data().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn incremental_step_matches_full_forward() {
        let mut rng = seed::rng(12, &[]);
        let block = AttentionBlock::new(4, 6, &mut rng);
        let data: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = Tensor::matrix(5, 4, data).unwrap();
        let (y, _) = block.forward(&x).unwrap();
        let mut cache = KvCache::default();
        for t in 0..5 {
            let out = block.step(x.row(t), &mut cache).unwrap();
            assert_eq!(out.as_slice(), y.row(t));
        }
    }
}
