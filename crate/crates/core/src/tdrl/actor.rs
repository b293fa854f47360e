//! Autoregressive binary-token actor.
//!
//! Position 0 holds the embedded observation; position `j > 0` holds token
//! `j - 1`. The hidden state at position `j` gives the Bernoulli logit of
//! token `j`. Blocks are `x + attn(x)` then `x + ffn(x)` with causal masking.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    sigmoid, softplus, Activation, AttentionBlock, AttentionTape, Checkpoint, DenseLayer,
    DenseTape, KvCache, Parameters, Tensor,
};
use crate::seed::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActorConfig {
    pub embed: usize,
    pub width: usize,
    pub blocks: usize,
    pub ffn: usize,
}

impl Default for ActorConfig {
    fn default() -> Self {
        Self {
            embed: 32,
            width: 64,
            blocks: 2,
            ffn: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenKind {
    Emitted,
    /// Fed to the network as conditioning, never sampled or scored.
    Context,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ActionSequence {
    pub tokens: Vec<u8>,
    pub kinds: Vec<TokenKind>,
    /// Behaviour log-probability of each token (0 for context tokens).
    pub log_probs: Vec<f64>,
}

impl ActionSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn emitted_len(&self) -> usize {
        self.kinds.iter().filter(|k| **k == TokenKind::Emitted).count()
    }

    pub fn log_prob(&self) -> f64 {
        self.log_probs.iter().sum()
    }

    pub fn emitted_tokens(&self) -> Vec<u8> {
        self.tokens
            .iter()
            .zip(&self.kinds)
            .filter(|(_, k)| **k == TokenKind::Emitted)
            .map(|(t, _)| *t)
            .collect()
    }
}

pub enum SampleMode<'a> {
    Greedy,
    Stochastic(&'a mut SimRng),
}

/// `a z − softplus(z)`
pub fn token_log_prob(logit: f64, token: u8) -> f64 {
    token as f64 * logit - softplus(logit)
}

/// Entropy of a Bernoulli with logit `z`.
pub fn token_entropy(logit: f64) -> f64 {
    softplus(logit) - logit * sigmoid(logit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Block {
    attn: AttentionBlock,
    ffn_in: DenseLayer,
    ffn_out: DenseLayer,
}

struct BlockTape {
    attn: AttentionTape,
    ffn_in: DenseTape,
    ffn_out: DenseTape,
}

pub struct ActorTape {
    obs: DenseTape,
    blocks: Vec<BlockTape>,
    head: DenseTape,
    tokens: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Actor {
    pub config: ActorConfig,
    obs_dim: usize,
    max_len: usize,
    obs_embed: DenseLayer,
    token_embed: Tensor,
    pos_embed: Tensor,
    blocks: Vec<Block>,
    head: DenseLayer,
}

impl Actor {
    /// `max_len` bounds the number of tokens (emitted plus context) per sequence.
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, max_len: usize, config: ActorConfig, rng: &mut R) -> Self {
        let e = config.embed;
        let mut small = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-0.1..0.1)).collect() };
        let token_embed = Tensor::matrix(2, e, small(2 * e)).expect("shape");
        let pos_embed = Tensor::matrix(max_len + 1, e, small((max_len + 1) * e)).expect("shape");
        let obs_embed = DenseLayer::new(obs_dim, e, Activation::Tanh, rng);
        let blocks = (0..config.blocks)
            .map(|_| Block {
                attn: AttentionBlock::new(e, config.width, rng),
                ffn_in: DenseLayer::new(e, config.ffn, Activation::Tanh, rng),
                ffn_out: DenseLayer::new(config.ffn, e, Activation::Identity, rng),
            })
            .collect();
        let mut head = DenseLayer::new(e, 1, Activation::Identity, rng);
        // start close to a fair coin on every token
        head.weights.scale(0.1);
        Self {
            config,
            obs_dim,
            max_len,
            obs_embed,
            token_embed,
            pos_embed,
            blocks,
            head,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    fn input_row(&self, position: usize, token: u8) -> Vec<f64> {
        self.token_embed
            .row(token as usize)
            .iter()
            .zip(self.pos_embed.row(position))
            .map(|(a, b)| a + b)
            .collect()
    }

    pub fn sampler(&self, obs: &[f64]) -> Result<Sampler<'_>> {
        if obs.len() != self.obs_dim {
            return Err(Error::Usage(format!(
                "observation has {} features, actor expects {}",
                obs.len(),
                self.obs_dim
            )));
        }
        let mut x = self.obs_embed.infer(&Tensor::row_vector(obs))?.into_data();
        for (v, p) in x.iter_mut().zip(self.pos_embed.row(0)) {
            *v += p;
        }
        let mut s = Sampler {
            actor: self,
            caches: vec![KvCache::default(); self.blocks.len()],
            seq: ActionSequence::default(),
            logit: 0.0,
        };
        s.logit = s.advance(x)?;
        Ok(s)
    }

    /// Logits of every token of `seq` under the current parameters.
    pub fn forward(&self, obs: &[f64], tokens: &[u8]) -> Result<(Vec<f64>, ActorTape)> {
        if tokens.is_empty() || tokens.len() > self.max_len {
            return Err(Error::Usage(format!(
                "sequence of {} tokens (max {})",
                tokens.len(),
                self.max_len
            )));
        }
        let (o, obs_tape) = self.obs_embed.forward(&Tensor::row_vector(obs))?;
        let len = tokens.len();
        let e = self.config.embed;
        let mut x = Vec::with_capacity(len * e);
        x.extend(o.data().iter().zip(self.pos_embed.row(0)).map(|(a, b)| a + b));
        for j in 1..len {
            x.extend(self.input_row(j, tokens[j - 1]));
        }
        let mut x = Tensor::matrix(len, e, x)?;
        let mut tapes = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (a, attn) = b.attn.forward(&x)?;
            x.add_assign(&a);
            let (f1, ffn_in) = b.ffn_in.forward(&x)?;
            let (f2, ffn_out) = b.ffn_out.forward(&f1)?;
            x.add_assign(&f2);
            tapes.push(BlockTape {
                attn,
                ffn_in,
                ffn_out,
            });
        }
        let (z, head) = self.head.forward(&x)?;
        Ok((
            z.into_data(),
            ActorTape {
                obs: obs_tape,
                blocks: tapes,
                head,
                tokens: tokens.to_vec(),
            },
        ))
    }

    /// Accumulates parameter gradients for upstream `dz` (one per token).
    pub fn backward(&self, tape: &ActorTape, dz: &[f64], grads: &mut [Tensor]) {
        let len = tape.tokens.len();
        let dz = Tensor::matrix(len, 1, dz.to_vec()).expect("one gradient per token");
        let n_blocks = self.blocks.len();
        let (g_obs, rest) = grads.split_at_mut(2);
        let (g_tok, rest) = rest.split_at_mut(1);
        let (g_pos, rest) = rest.split_at_mut(1);
        let (g_blocks, g_head) = rest.split_at_mut(12 * n_blocks);
        let mut dx = self.head.backward(&tape.head, &dz, g_head);
        for (i, b) in self.blocks.iter().enumerate().rev() {
            let t = &tape.blocks[i];
            let g = &mut g_blocks[12 * i..12 * (i + 1)];
            let (g_attn, g_ffn) = g.split_at_mut(8);
            let (g_in, g_out) = g_ffn.split_at_mut(2);
            let d1 = b.ffn_out.backward(&t.ffn_out, &dx, g_out);
            let d0 = b.ffn_in.backward(&t.ffn_in, &d1, g_in);
            dx.add_assign(&d0);
            let da = b.attn.backward(&t.attn, &dx, g_attn);
            dx.add_assign(&da);
        }
        let e = self.config.embed;
        {
            let gp = g_pos[0].data_mut();
            for j in 0..len {
                for c in 0..e {
                    gp[j * e + c] += dx.row(j)[c];
                }
            }
            let gt = g_tok[0].data_mut();
            for j in 1..len {
                let t = tape.tokens[j - 1] as usize;
                for c in 0..e {
                    gt[t * e + c] += dx.row(j)[c];
                }
            }
        }
        let d_obs = Tensor::row_vector(dx.row(0));
        self.obs_embed.backward(&tape.obs, &d_obs, g_obs);
    }

    /// Log-probability of the emitted tokens of `seq`.
    pub fn sequence_log_prob(&self, obs: &[f64], seq: &ActionSequence) -> Result<f64> {
        let (z, _) = self.forward(obs, &seq.tokens)?;
        Ok(z.iter()
            .zip(&seq.tokens)
            .zip(&seq.kinds)
            .filter(|(_, k)| **k == TokenKind::Emitted)
            .map(|((z, t), _)| token_log_prob(*z, *t))
            .sum())
    }

    pub fn to_checkpoint(&self, ck: &mut Checkpoint, prefix: &str) {
        ck.push_all(prefix, self.parameters());
    }

    pub fn load_checkpoint(&mut self, ck: &Checkpoint, prefix: &str) -> Result<()> {
        let n = self.parameters().len();
        self.load_parameters(&ck.take_all(prefix, n)?)
    }
}

impl Parameters for Actor {
    fn parameters(&self) -> Vec<&Tensor> {
        let mut p = self.obs_embed.parameters();
        p.push(&self.token_embed);
        p.push(&self.pos_embed);
        for b in &self.blocks {
            p.extend(b.attn.parameters());
            p.extend(b.ffn_in.parameters());
            p.extend(b.ffn_out.parameters());
        }
        p.extend(self.head.parameters());
        p
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.obs_embed.parameters_mut();
        p.push(&mut self.token_embed);
        p.push(&mut self.pos_embed);
        for b in &mut self.blocks {
            p.extend(b.attn.parameters_mut());
            p.extend(b.ffn_in.parameters_mut());
            p.extend(b.ffn_out.parameters_mut());
        }
        p.extend(self.head.parameters_mut());
        p
    }
}

/// Incremental decoder over one sequence.
pub struct Sampler<'a> {
    actor: &'a Actor,
    caches: Vec<KvCache>,
    seq: ActionSequence,
    /// Logit of the next token.
    logit: f64,
}

impl Sampler<'_> {
    fn advance(&mut self, mut x: Vec<f64>) -> Result<f64> {
        for (b, cache) in self.actor.blocks.iter().zip(&mut self.caches) {
            let a = b.attn.step(&x, cache)?;
            for (v, d) in x.iter_mut().zip(&a) {
                *v += d;
            }
            let row = Tensor::row_vector(&x);
            let f = b.ffn_out.infer(&b.ffn_in.infer(&row)?)?;
            for (v, d) in x.iter_mut().zip(f.data()) {
                *v += d;
            }
        }
        Ok(self.actor.head.infer(&Tensor::row_vector(&x))?.data()[0])
    }

    fn push(&mut self, token: u8, kind: TokenKind, log_prob: f64) -> Result<()> {
        if self.seq.len() >= self.actor.max_len {
            return Err(Error::Usage(format!(
                "sequence longer than the actor's {} positions",
                self.actor.max_len
            )));
        }
        self.seq.tokens.push(token);
        self.seq.kinds.push(kind);
        self.seq.log_probs.push(log_prob);
        if self.seq.len() < self.actor.max_len {
            let x = self.actor.input_row(self.seq.len(), token);
            self.logit = self.advance(x)?;
        }
        Ok(())
    }

    pub fn next_logit(&self) -> f64 {
        self.logit
    }

    /// Samples (or takes the mode of) the next token.
    pub fn sample(&mut self, mode: &mut SampleMode<'_>) -> Result<u8> {
        let z = self.logit;
        let token = match mode {
            SampleMode::Greedy => (z >= 0.0) as u8,
            SampleMode::Stochastic(rng) => (rng.random::<f64>() < sigmoid(z)) as u8,
        };
        self.push(token, TokenKind::Emitted, token_log_prob(z, token))?;
        Ok(token)
    }

    pub fn sample_n(&mut self, n: usize, mode: &mut SampleMode<'_>) -> Result<Vec<u8>> {
        (0..n).map(|_| self.sample(mode)).collect()
    }

    /// Forces the next token to `token` and scores it as emitted.
    pub fn force(&mut self, token: u8) -> Result<()> {
        let z = self.logit;
        self.push(token, TokenKind::Emitted, token_log_prob(z, token))
    }

    pub fn feed_context(&mut self, tokens: &[u8]) -> Result<()> {
        for &t in tokens {
            self.push(t, TokenKind::Context, 0.0)?;
        }
        Ok(())
    }

    pub fn sequence(&self) -> &ActionSequence {
        &self.seq
    }

    pub fn finish(self) -> ActionSequence {
        self.seq
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn actor(obs: usize, len: usize, s: u64) -> Actor {
        let mut rng = seed::rng(s, &[]);
        Actor::new(obs, len, ActorConfig::default(), &mut rng)
    }

    #[test]
    fn stored_log_probs_reproduce() {
        let a = actor(5, 20, 1);
        let obs = [0.1, -0.3, 0.5, 1.0, 0.0];
        let mut rng = seed::rng(2, &[]);
        let mut s = a.sampler(&obs).unwrap();
        s.sample_n(6, &mut SampleMode::Stochastic(&mut rng)).unwrap();
        s.feed_context(&[1, 0, 1]).unwrap();
        s.sample_n(8, &mut SampleMode::Stochastic(&mut rng)).unwrap();
        let seq = s.finish();
        assert_eq!(seq.emitted_len(), 14);
        let (z, _) = a.forward(&obs, &seq.tokens).unwrap();
        for ((zj, t), lp) in z.iter().zip(&seq.tokens).zip(&seq.log_probs) {
            if *lp != 0.0 {
                assert!((token_log_prob(*zj, *t) - lp).abs() < 1e-9);
            }
        }
        assert!((a.sequence_log_prob(&obs, &seq).unwrap() - seq.log_prob()).abs() < 1e-9);
    }

    #[test]
    fn greedy_is_repeatable() {
        let a = actor(3, 12, 4);
        let run = || {
            let mut s = a.sampler(&[1.0, 2.0, 3.0]).unwrap();
            s.sample_n(12, &mut SampleMode::Greedy).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn overlong_sequences_fail() {
        let a = actor(2, 3, 4);
        let mut s = a.sampler(&[0.0, 0.0]).unwrap();
        s.sample_n(3, &mut SampleMode::Greedy).unwrap();
        assert!(s.sample(&mut SampleMode::Greedy).is_err());
        assert!(a.sampler(&[0.0]).is_err());
    }

    #[test]
    fn entropy_properties() {
        assert!((token_entropy(0.0) - 2f64.ln()).abs() < 1e-12);
        for z in [-30.0, -2.0, 0.5, 7.0, 40.0] {
            let h = token_entropy(z);
            assert!(h >= 0.0);
            let p = sigmoid(z);
            let direct = -(p * p.max(1e-300).ln() + (1.0 - p) * (1.0 - p).max(1e-300).ln());
            assert!((h - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn log_prob_gradient_matches_differences() {
        let mut a = actor(4, 10, 9);
        let obs = [0.2, -0.1, 0.4, 0.3];
        let tokens = [1u8, 0, 1, 1, 0, 0, 1];
        let loss = |m: &Actor| -> f64 {
            let (z, _) = m.forward(&obs, &tokens).unwrap();
            z.iter().zip(&tokens).map(|(z, t)| token_log_prob(*z, *t)).sum()
        };
        let (z, tape) = a.forward(&obs, &tokens).unwrap();
        let dz: Vec<f64> = z.iter().zip(&tokens).map(|(z, t)| *t as f64 - sigmoid(*z)).collect();
        let mut grads = a.zero_grads();
        a.backward(&tape, &dz, &mut grads);
        let worst = crate::nn::gradient_check(&mut a, &grads, 1e-6, 1e-4, loss);
        assert!(worst < 1e-4, "worst relative error {worst}");
    }
}
