//! Learned similarity estimator.
//!
//! Two branches feed a fusion head: a control branch over the encoded
//! `(B, β, φ)` and a link branch over per-link radio features. Each branch
//! starts with a frozen random embedding (the control one can be shared with
//! the critic) followed by a trainable 128-128 tanh stack; the fusion stack
//! maps the concatenation to a sigmoid score.

use std::collections::VecDeque;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Action, LinkEval, SlotModel};
use crate::error::{Error, Result};
use crate::nn::{
    adam_step, clip_grad_norm, Activation, AdamConfig, AdamState, Checkpoint, DenseLayer,
    LayerStack, Parameters, Tensor,
};
use crate::seed::{self, SimRng};
use crate::semfidelity::{beta_from_index, SurrogateCoeffs, LEVELS};

pub const EMBED: usize = 64;
pub const HIDDEN: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// Convergence threshold on the held-out loss.
    pub epsilon: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub batches_per_epoch: usize,
    pub buffer: usize,
    pub lr: f64,
    pub share_embedding: bool,
    pub warm_samples: usize,
    pub warm_epoch_cap: usize,
    pub warm_target: f64,
    /// Held-out samples scored after each epoch (most recent first).
    pub holdout_eval: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-2,
            epochs: 5,
            minibatch: 64,
            batches_per_epoch: 4,
            buffer: 50_000,
            lr: 1e-3,
            share_embedding: true,
            warm_samples: 2048,
            warm_epoch_cap: 40,
            warm_target: 1e-3,
            holdout_eval: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorInput {
    pub control: Vec<f64>,
    pub link: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplaySample {
    pub input: EstimatorInput,
    pub xi: f64,
    pub step: u64,
    /// Insertion ordinal; every fifth sample is held out.
    pub ordinal: u64,
}

impl ReplaySample {
    pub fn held_out(&self) -> bool {
        self.ordinal % 5 == 4
    }
}

/// FIFO replay of ground-truth observations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    samples: VecDeque<ReplaySample>,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            samples: VecDeque::new(),
            inserted: 0,
        }
    }

    pub fn push(&mut self, input: EstimatorInput, xi: f64, step: u64) {
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(ReplaySample {
            input,
            xi: xi.clamp(0.0, 1.0),
            step,
            ordinal: self.inserted,
        });
        self.inserted += 1;
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = &ReplaySample> {
        self.samples.iter()
    }

    fn split(&self) -> (Vec<&ReplaySample>, Vec<&ReplaySample>) {
        let (held, train): (Vec<_>, Vec<_>) = self.samples.iter().partition(|s| s.held_out());
        (train, held)
    }

    /// Writes `c0..,l0..,xi,step` rows.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let Some(first) = self.samples.front() else {
            w.write_record(["xi", "step"])?;
            w.flush().map_err(|e| Error::io(path, e))?;
            return Ok(());
        };
        let mut header: Vec<String> = (0..first.input.control.len()).map(|i| format!("c{i}")).collect();
        header.extend((0..first.input.link.len()).map(|i| format!("l{i}")));
        header.push("xi".into());
        header.push("step".into());
        w.write_record(&header)?;
        for s in &self.samples {
            let mut rec: Vec<String> = s.input.control.iter().map(|v| v.to_string()).collect();
            rec.extend(s.input.link.iter().map(|v| v.to_string()));
            rec.push(s.xi.to_string());
            rec.push(s.step.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: &Path, capacity: usize) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        let n_ctrl = header.iter().filter(|h| h.starts_with('c')).count();
        let n_link = header.iter().filter(|h| h.starts_with('l')).count();
        let mut buf = Self::new(capacity);
        for rec in r.records() {
            let rec = rec?;
            let nums: Vec<f64> = rec
                .iter()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("{}: bad number: {e}", path.display())))?;
            if nums.len() != n_ctrl + n_link + 2 {
                return Err(Error::Config(format!("{}: ragged replay row", path.display())));
            }
            let input = EstimatorInput {
                control: nums[..n_ctrl].to_vec(),
                link: nums[n_ctrl..n_ctrl + n_link].to_vec(),
            };
            buf.push(input, nums[n_ctrl + n_link], nums[n_ctrl + n_link + 1] as u64);
        }
        Ok(buf)
    }
}

/// Link-branch width for `users` users and `bands` bands.
pub fn link_feature_dim(users: usize, bands: usize) -> usize {
    users * users + bands + 5
}

/// `[pair one-hot | band one-hot | ln(1+γ)/5 | SNR, INR (log10(1+x)/4) | β | prior ξ]`.
pub fn link_features(model: &SlotModel, eval: &LinkEval, prior_xi: f64) -> Vec<f64> {
    let k = model.users;
    let mut v = vec![0.0; link_feature_dim(k, model.bands)];
    v[eval.link.tx * k + eval.link.rx] = 1.0;
    v[k * k + eval.link.band] = 1.0;
    let o = k * k + model.bands;
    v[o] = (1.0 + eval.gamma).ln() / 5.0;
    v[o + 1] = (1.0 + eval.signal / model.sigma2).log10() / 4.0;
    v[o + 2] = (1.0 + eval.interference / model.sigma2).log10() / 4.0;
    v[o + 3] = eval.beta;
    v[o + 4] = prior_xi;
    v
}

/// Estimator inputs for every link of an action; `prior` gives the
/// surrogate coefficients used for the prior-ξ feature of each link.
pub fn inputs_for(
    model: &SlotModel,
    action: &Action,
    evals: &[LinkEval],
    prior: impl Fn(&LinkEval) -> SurrogateCoeffs,
) -> Vec<EstimatorInput> {
    let control = model.encode_control(action);
    evals
        .iter()
        .map(|e| EstimatorInput {
            control: control.clone(),
            link: link_features(model, e, prior(e).eval(e.gamma, e.beta).clamp(0.0, 1.0)),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarmStartReport {
    pub epochs: usize,
    pub heldout_mse: f64,
    pub reached_target: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneReport {
    /// Mean training-split loss after each epoch.
    pub train_losses: Vec<f64>,
    pub l_est: f64,
}

#[derive(Debug, Clone)]
pub struct Estimator {
    pub config: EstimatorConfig,
    users: usize,
    bands: usize,
    control_embed: DenseLayer,
    link_embed: DenseLayer,
    control: LayerStack,
    link: LayerStack,
    fusion: LayerStack,
    adam: AdamState,
    l_est: f64,
}

impl Estimator {
    /// `shared_control` is the critic's control embedding; it is used when
    /// `config.share_embedding` is set, otherwise a private one is drawn.
    pub fn new(
        model: &SlotModel,
        config: EstimatorConfig,
        shared_control: Option<&DenseLayer>,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = seed::rng(seed, &[seed::stream::ESTIMATOR, seed::stream::INIT]);
        let ctrl_dim = model.control_dim();
        let own = DenseLayer::new(ctrl_dim, EMBED, Activation::Tanh, &mut rng);
        let control_embed = match (config.share_embedding, shared_control) {
            (true, Some(layer)) => {
                if layer.in_dim() != ctrl_dim || layer.out_dim() != EMBED {
                    return Err(Error::Config("shared control embedding has the wrong shape".into()));
                }
                layer.clone()
            }
            (true, None) => {
                return Err(Error::Config("embedding sharing requested without a critic embedding".into()))
            }
            (false, _) => own,
        };
        let link_dim = link_feature_dim(model.users, model.bands);
        let link_embed = DenseLayer::new(link_dim, EMBED, Activation::Tanh, &mut rng);
        let control = LayerStack::new(&[EMBED, HIDDEN, HIDDEN], Activation::Tanh, Activation::Tanh, &mut rng);
        let link = LayerStack::new(&[EMBED, HIDDEN, HIDDEN], Activation::Tanh, Activation::Tanh, &mut rng);
        let fusion = LayerStack::new(&[2 * HIDDEN, HIDDEN, 1], Activation::Tanh, Activation::Sigmoid, &mut rng);
        let mut est = Self {
            config,
            users: model.users,
            bands: model.bands,
            control_embed,
            link_embed,
            control,
            link,
            fusion,
            adam: AdamState::new(&[], AdamConfig::default()),
            l_est: f64::INFINITY,
        };
        est.reset_optimizer();
        Ok(est)
    }

    fn reset_optimizer(&mut self) {
        let cfg = AdamConfig {
            lr: self.config.lr,
            ..AdamConfig::default()
        };
        self.adam = AdamState::new(&self.parameters(), cfg);
    }

    pub fn l_est(&self) -> f64 {
        self.l_est
    }

    /// Marks the estimator as untrusted (e.g. after a failed audit).
    pub fn invalidate(&mut self) {
        self.l_est = f64::INFINITY;
    }

    pub fn converged(&self) -> bool {
        self.l_est < self.config.epsilon
    }

    pub fn control_embedding(&self) -> &DenseLayer {
        &self.control_embed
    }

    fn check(&self, input: &EstimatorInput) -> Result<()> {
        if input.control.len() != self.control_embed.in_dim()
            || input.link.len() != link_feature_dim(self.users, self.bands)
        {
            return Err(Error::Usage(format!(
                "estimator input dims {}+{} (expected {}+{})",
                input.control.len(),
                input.link.len(),
                self.control_embed.in_dim(),
                link_feature_dim(self.users, self.bands)
            )));
        }
        Ok(())
    }

    fn embed(&self, inputs: &[&EstimatorInput]) -> Result<(Tensor, Tensor)> {
        let c: Vec<f64> = inputs.iter().flat_map(|i| i.control.iter().copied()).collect();
        let l: Vec<f64> = inputs.iter().flat_map(|i| i.link.iter().copied()).collect();
        let n = inputs.len();
        let c = Tensor::matrix(n, self.control_embed.in_dim(), c)?;
        let l = Tensor::matrix(n, self.link_embed.in_dim(), l)?;
        Ok((self.control_embed.infer(&c)?, self.link_embed.infer(&l)?))
    }

    pub fn predict(&self, input: &EstimatorInput) -> Result<f64> {
        Ok(self.predict_many(&[input])?[0])
    }

    pub fn predict_many(&self, inputs: &[&EstimatorInput]) -> Result<Vec<f64>> {
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        for i in inputs {
            self.check(i)?;
        }
        let (ce, le) = self.embed(inputs)?;
        let h = self.control.infer(&ce)?.hcat(&self.link.infer(&le)?)?;
        Ok(self.fusion.infer(&h)?.into_data().into_iter().map(|p| p.clamp(0.0, 1.0)).collect())
    }

    /// Minibatch MSE and its gradients, in [`Parameters`] order.
    pub fn loss_and_grads(&self, batch: &[&ReplaySample]) -> Result<(f64, Vec<Tensor>)> {
        let inputs: Vec<&EstimatorInput> = batch.iter().map(|s| &s.input).collect();
        for i in &inputs {
            self.check(i)?;
        }
        let (ce, le) = self.embed(&inputs)?;
        let (hc, tc) = self.control.run(&ce)?;
        let (hl, tl) = self.link.run(&le)?;
        let (p, tf) = self.fusion.run(&hc.hcat(&hl)?)?;
        let n = batch.len() as f64;
        let mut loss = 0.0;
        let dy: Vec<f64> = p
            .data()
            .iter()
            .zip(batch)
            .map(|(pv, s)| {
                let d = pv - s.xi;
                loss += d * d / n;
                2.0 * d / n
            })
            .collect();
        let dy = Tensor::matrix(batch.len(), 1, dy)?;
        let mut grads = self.zero_grads();
        let nc = self.control.parameters().len();
        let nl = self.link.parameters().len();
        let (gc, rest) = grads.split_at_mut(nc);
        let (gl, gf) = rest.split_at_mut(nl);
        let dh = self.fusion.backprop(&tf, &dy, gf);
        let (dhc, dhl) = dh.hsplit(HIDDEN);
        self.control.backprop(&tc, &dhc, gc);
        self.link.backprop(&tl, &dhl, gl);
        Ok((loss, grads))
    }

    /// One Adam step on the MSE of a minibatch; returns the batch loss.
    fn train_batch(&mut self, batch: &[&ReplaySample]) -> Result<f64> {
        let (loss, mut grads) = self.loss_and_grads(batch)?;
        clip_grad_norm(&mut grads, 1.0);
        let mut adam = std::mem::replace(&mut self.adam, AdamState::new(&[], AdamConfig::default()));
        let res = adam_step(self.parameters_mut(), &grads, &mut adam);
        self.adam = adam;
        res?;
        Ok(loss)
    }

    pub fn mse(&self, samples: &[&ReplaySample]) -> Result<f64> {
        if samples.is_empty() {
            return Ok(f64::INFINITY);
        }
        let inputs: Vec<&EstimatorInput> = samples.iter().map(|s| &s.input).collect();
        let p = self.predict_many(&inputs)?;
        Ok(p.iter().zip(samples).map(|(a, s)| (a - s.xi).powi(2)).sum::<f64>() / samples.len() as f64)
    }

    fn minibatches<'a>(
        &self,
        pool: &[&'a ReplaySample],
        count: usize,
        rng: &mut SimRng,
    ) -> Vec<Vec<&'a ReplaySample>> {
        let size = self.config.minibatch.min(pool.len()).max(1);
        (0..count)
            .map(|_| sample(rng, pool.len(), size).into_iter().map(|i| pool[i]).collect())
            .collect()
    }

    /// Trains on synthetic `(γ, β)` samples labelled by the nominal surrogate,
    /// stopping once the held-out MSE drops below `warm_target` or after
    /// `warm_epoch_cap` passes. Leaves `L_est` untouched.
    pub fn warm_start(
        &mut self,
        model: &SlotModel,
        nominal: &SurrogateCoeffs,
        sample_count: usize,
        seed: u64,
    ) -> Result<WarmStartReport> {
        if sample_count == 0 {
            return Err(Error::Usage("warm start needs at least one sample".into()));
        }
        nominal.validate()?;
        let mut rng = seed::rng(seed, &[seed::stream::ESTIMATOR, 1]);
        let mut buf = ReplayBuffer::new(sample_count);
        for i in 0..sample_count {
            let (input, xi) = synthetic_sample(model, nominal, &mut rng);
            buf.push(input, xi, i as u64);
        }
        let (train, held) = buf.split();
        let held: Vec<&ReplaySample> = if held.is_empty() { train.clone() } else { held };
        let per_epoch = train.len().div_ceil(self.config.minibatch.max(1));
        let mut report = WarmStartReport {
            epochs: 0,
            heldout_mse: self.mse(&held)?,
            reached_target: false,
        };
        for epoch in 0..self.config.warm_epoch_cap {
            for batch in self.minibatches(&train, per_epoch, &mut rng) {
                self.train_batch(&batch)?;
            }
            report.epochs = epoch + 1;
            report.heldout_mse = self.mse(&held)?;
            if report.heldout_mse < self.config.warm_target {
                report.reached_target = true;
                break;
            }
        }
        if !report.reached_target {
            log::warn!(
                "estimator warm start stopped at held-out MSE {:.2e} after {} epochs",
                report.heldout_mse,
                report.epochs
            );
        }
        Ok(report)
    }

    /// `epochs` rounds of `batches_per_epoch` minibatches from the training
    /// split; `L_est` becomes the held-out MSE after the last round.
    pub fn fine_tune(&mut self, buffer: &ReplayBuffer, epochs: usize, seed: u64) -> Result<FineTuneReport> {
        if buffer.is_empty() {
            return Err(Error::Usage("fine-tune on an empty replay buffer".into()));
        }
        if epochs == 0 {
            return Ok(FineTuneReport {
                train_losses: Vec::new(),
                l_est: self.l_est,
            });
        }
        let mut rng = seed::rng(seed, &[seed::stream::ESTIMATOR, 2]);
        let (train, held) = buffer.split();
        let train = if train.is_empty() { held.clone() } else { train };
        let probe: Vec<&ReplaySample> = train.iter().rev().take(self.config.holdout_eval).copied().collect();
        let mut losses = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            for batch in self.minibatches(&train, self.config.batches_per_epoch, &mut rng) {
                self.train_batch(&batch)?;
            }
            losses.push(self.mse(&probe)?);
        }
        let held: Vec<&ReplaySample> = held.into_iter().rev().take(self.config.holdout_eval).collect();
        self.l_est = if held.is_empty() { self.mse(&probe)? } else { self.mse(&held)? };
        Ok(FineTuneReport {
            train_losses: losses,
            l_est: self.l_est,
        })
    }

    pub fn to_checkpoint(&self, ck: &mut Checkpoint, prefix: &str) {
        ck.push_all(&format!("{prefix}.control_embed"), self.control_embed.parameters());
        ck.push_all(&format!("{prefix}.link_embed"), self.link_embed.parameters());
        ck.push_all(&format!("{prefix}.trainable"), self.parameters());
        ck.push(format!("{prefix}.l_est"), Tensor::vector(vec![self.l_est]));
    }

    pub fn load_checkpoint(&mut self, ck: &Checkpoint, prefix: &str) -> Result<()> {
        let ce = ck.take_all(&format!("{prefix}.control_embed"), 2)?;
        self.control_embed.load_parameters(&ce)?;
        let le = ck.take_all(&format!("{prefix}.link_embed"), 2)?;
        self.link_embed.load_parameters(&le)?;
        let n = self.parameters().len();
        let t = ck.take_all(&format!("{prefix}.trainable"), n)?;
        self.load_parameters(&t)?;
        self.l_est = ck
            .get(&format!("{prefix}.l_est"))
            .map(|t| t.data()[0])
            .unwrap_or(f64::INFINITY);
        self.reset_optimizer();
        Ok(())
    }
}

impl Parameters for Estimator {
    fn parameters(&self) -> Vec<&Tensor> {
        let mut p = self.control.parameters();
        p.extend(self.link.parameters());
        p.extend(self.fusion.parameters());
        p
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.control.parameters_mut();
        p.extend(self.link.parameters_mut());
        p.extend(self.fusion.parameters_mut());
        p
    }
}

/// A random context with `γ` log-uniform over roughly 0-30 dB, labelled by the
/// nominal surrogate (which also fills the prior feature).
fn synthetic_sample(model: &SlotModel, nominal: &SurrogateCoeffs, rng: &mut SimRng) -> (EstimatorInput, f64) {
    let k = model.users;
    let tx = rng.random_range(0..k);
    let rx = (tx + rng.random_range(1..k)) % k;
    let band = rng.random_range(0..model.bands);
    let index = rng.random_range(0..LEVELS) as u8;
    let beta = beta_from_index(index).expect("ladder index");
    let gamma = if rng.random_bool(0.1) { 0.0 } else { 10f64.powf(rng.random_range(-1.0..3.0)) };
    let inr = 10f64.powf(rng.random_range(-2.0..2.0)) * rng.random_range(0.0..1.0);
    let interference = inr * model.sigma2;
    let eval = LinkEval {
        link: crate::env::Link { tx, rx, band },
        index,
        beta,
        gamma,
        signal: gamma * (model.sigma2 + interference),
        interference,
    };
    let mut control: Vec<f64> = (0..model.control_dim()).map(|_| rng.random_range(0..2) as f64).collect();
    let kkc = k * k * model.bands;
    for v in &mut control[kkc..2 * kkc] {
        *v *= rng.random_range(0..LEVELS) as f64 / (LEVELS - 1) as f64;
    }
    let xi = nominal.eval(gamma, beta).clamp(0.0, 1.0);
    let input = EstimatorInput {
        control,
        link: link_features(model, &eval, xi),
    };
    (input, xi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Link;
    use crate::scenario::Scenario;

    fn model() -> SlotModel {
        SlotModel::new(&Scenario::default(), 1).unwrap()
    }

    fn private(m: &SlotModel, seed: u64) -> Estimator {
        let cfg = EstimatorConfig {
            share_embedding: false,
            ..EstimatorConfig::default()
        };
        Estimator::new(m, cfg, None, seed).unwrap()
    }

    fn probe(m: &SlotModel, gamma: f64, index: u8) -> EstimatorInput {
        let beta = beta_from_index(index).unwrap();
        let eval = LinkEval {
            link: Link { tx: 0, rx: 1, band: 0 },
            index,
            beta,
            gamma,
            signal: gamma * m.sigma2,
            interference: 0.0,
        };
        let prior = SurrogateCoeffs::default().eval(gamma, beta);
        EstimatorInput {
            control: vec![0.0; m.control_dim()],
            link: link_features(m, &eval, prior),
        }
    }

    #[test]
    fn fresh_state_is_not_converged() {
        let m = model();
        let mut e = private(&m, 1);
        assert!(!e.converged());
        e.config.epsilon = 0.0;
        e.l_est = 0.0;
        assert!(!e.converged());
    }

    #[test]
    fn sharing_requires_an_embedding() {
        let m = model();
        assert!(Estimator::new(&m, EstimatorConfig::default(), None, 1).is_err());
        let mut rng = seed::rng(1, &[]);
        let shared = DenseLayer::new(m.control_dim(), EMBED, Activation::Tanh, &mut rng);
        let e = Estimator::new(&m, EstimatorConfig::default(), Some(&shared), 1).unwrap();
        assert_eq!(e.control_embedding(), &shared);
    }

    #[test]
    fn warm_start_matches_surrogate() {
        let m = model();
        let mut e = private(&m, 3);
        let rep = e.warm_start(&m, &SurrogateCoeffs::default(), 2048, 5).unwrap();
        assert!(rep.heldout_mse < 2e-3, "{rep:?}");
        let p = e.predict(&probe(&m, 10.0, 0)).unwrap();
        assert!((p - 0.9572).abs() < 0.02, "prediction {p}");
        assert!(!e.converged());
    }

    #[test]
    fn warm_start_is_deterministic() {
        let m = model();
        let mut a = private(&m, 3);
        let mut b = private(&m, 3);
        let cfg = EstimatorConfig {
            warm_epoch_cap: 2,
            share_embedding: false,
            ..EstimatorConfig::default()
        };
        a.config = cfg;
        b.config = cfg;
        a.warm_start(&m, &SurrogateCoeffs::default(), 256, 9).unwrap();
        b.warm_start(&m, &SurrogateCoeffs::default(), 256, 9).unwrap();
        assert_eq!(a.parameters(), b.parameters());
    }

    #[test]
    fn memorizes_a_point() {
        let m = model();
        let mut e = private(&m, 4);
        let x = probe(&m, 3.0, 2);
        let mut buf = ReplayBuffer::new(100);
        for i in 0..100 {
            buf.push(x.clone(), 0.7, i);
        }
        for round in 0..40 {
            e.fine_tune(&buf, 5, round).unwrap();
        }
        assert!((e.predict(&x).unwrap() - 0.7).abs() < 0.01);
        assert!(e.l_est() < 1e-3);
    }

    #[test]
    fn zero_epochs_and_empty_buffer() {
        let m = model();
        let mut e = private(&m, 4);
        let before = e.parameters().into_iter().cloned().collect::<Vec<_>>();
        let mut buf = ReplayBuffer::new(10);
        assert!(matches!(e.fine_tune(&buf, 1, 0), Err(Error::Usage(_))));
        buf.push(probe(&m, 1.0, 0), 0.5, 0);
        e.fine_tune(&buf, 0, 0).unwrap();
        assert_eq!(e.parameters().into_iter().cloned().collect::<Vec<_>>(), before);
    }

    #[test]
    fn dimension_mismatch_is_usage_error() {
        let m = model();
        let e = private(&m, 4);
        let bad = EstimatorInput {
            control: vec![0.0; 3],
            link: vec![0.0; 3],
        };
        assert!(matches!(e.predict(&bad), Err(Error::Usage(_))));
    }

    #[test]
    fn replay_fifo_and_csv_roundtrip() {
        let m = model();
        let mut buf = ReplayBuffer::new(3);
        for i in 0..5 {
            buf.push(probe(&m, i as f64, 1), 0.1 * i as f64, i);
        }
        assert_eq!(buf.len(), 3);
        assert_eq!(buf.samples().next().unwrap().step, 2);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("replay.csv");
        buf.save_csv(&p).unwrap();
        let back = ReplayBuffer::load_csv(&p, 3).unwrap();
        let a: Vec<_> = buf.samples().map(|s| (&s.input, s.xi, s.step)).collect();
        let b: Vec<_> = back.samples().map(|s| (&s.input, s.xi, s.step)).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let m = model();
        let mut a = private(&m, 6);
        a.l_est = 0.25;
        let mut ck = Checkpoint::default();
        a.to_checkpoint(&mut ck, "est");
        let mut b = private(&m, 7);
        b.load_checkpoint(&ck, "est").unwrap();
        let x = probe(&m, 5.0, 3);
        assert_eq!(a.predict(&x).unwrap(), b.predict(&x).unwrap());
        assert_eq!(b.l_est(), 0.25);
    }
}
