//! Bivariate meta-transfer baseline.
//!
//! Two tabular factorizations of the joint, `X1 -> X2` and `X2 -> X1`, are
//! fitted to the observational distribution. After every intervention both
//! adapt online for a few steps from that common starting point; whichever
//! accumulates more log-likelihood pulls the structural logit `gamma`
//! towards itself through the regret gradient
//! `dR/dgamma = sigmoid(gamma) - sigmoid(gamma + logL12 - logL21)`.

use std::fmt;

use crate::error::{Error, Result};
use crate::info::{ConditionalTable, ProbVector};
use crate::sampling::SeededRng;
use crate::scm::{choose_target, BivariateScm, DependencyState, SamplePair};
use crate::toy::model::{log_softmax, softmax};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    /// `P(X1) P(X2 | X1)`.
    Forward,
    /// `P(X2) P(X1 | X2)`.
    Backward,
}

impl Direction {
    /// `(parent, child)` values of a sample under this factorization.
    fn split(self, s: SamplePair) -> (usize, usize) {
        match self {
            Direction::Forward => (s.x1, s.x2),
            Direction::Backward => (s.x2, s.x1),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Forward => "x1->x2",
            Direction::Backward => "x2->x1",
        })
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

/// `log sigmoid(x)` without overflow.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Tabular model of one factorization: marginal logits of the parent and a
/// row-per-parent-value table of child logits.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorizationModel {
    pub direction: Direction,
    pub marginal_logits: Vec<f64>,
    /// Row-major `K x K`, row = parent value.
    pub conditional_logits: Vec<f64>,
}

impl FactorizationModel {
    /// All logits zero: uniform predictions.
    pub fn uniform(direction: Direction, k: usize) -> Self {
        Self {
            direction,
            marginal_logits: vec![0.0; k],
            conditional_logits: vec![0.0; k * k],
        }
    }

    pub fn k(&self) -> usize {
        self.marginal_logits.len()
    }

    pub fn marginal(&self) -> Result<ProbVector> {
        ProbVector::from_weights(softmax(&self.marginal_logits))
    }

    pub fn conditional(&self) -> Result<ConditionalTable> {
        let k = self.k();
        let rows = self
            .conditional_logits
            .chunks(k)
            .map(|row| ProbVector::from_weights(softmax(row)))
            .collect::<Result<Vec<_>>>()?;
        ConditionalTable::new(rows)
    }

    fn log_tables(&self) -> (Vec<f64>, Vec<f64>) {
        let k = self.k();
        let marg = log_softmax(&self.marginal_logits);
        let cond = self.conditional_logits.chunks(k).flat_map(log_softmax).collect();
        (marg, cond)
    }

    /// Summed log-likelihood of a batch.
    pub fn log_likelihood(&self, batch: &[SamplePair]) -> Result<f64> {
        let k = self.k();
        let (marg, cond) = self.log_tables();
        let mut total = 0.0;
        for &s in batch {
            let (parent, child) = self.direction.split(s);
            if parent >= k || child >= k {
                return Err(Error::IndexOutOfRange {
                    index: parent.max(child),
                    k,
                });
            }
            total += marg[parent] + cond[parent * k + child];
        }
        Ok(total)
    }

    /// Mean negative log-likelihood per sample.
    pub fn nll(&self, batch: &[SamplePair]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        Ok(-self.log_likelihood(batch)? / batch.len() as f64)
    }

    /// Gradient of [`Self::nll`] as `(marginal, conditional)` logit gradients.
    pub fn nll_gradient(&self, batch: &[SamplePair]) -> Result<(Vec<f64>, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let k = self.k();
        let mut counts = vec![0.0; k * k];
        for &s in batch {
            let (parent, child) = self.direction.split(s);
            if parent >= k || child >= k {
                return Err(Error::IndexOutOfRange {
                    index: parent.max(child),
                    k,
                });
            }
            counts[parent * k + child] += 1.0;
        }
        let b = batch.len() as f64;
        for c in &mut counts {
            *c /= b;
        }
        Ok(self.expected_nll_gradient(&counts))
    }

    /// Gradient of the expected NLL under a joint over (parent, child),
    /// row-major with row = parent.
    fn expected_nll_gradient(&self, joint: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let k = self.k();
        let parent_mass: Vec<f64> = joint.chunks(k).map(|r| r.iter().sum()).collect();
        let q = softmax(&self.marginal_logits);
        let marg = q.iter().zip(&parent_mass).map(|(q, p)| q - p).collect();
        let mut cond = Vec::with_capacity(k * k);
        for (a, row) in self.conditional_logits.chunks(k).enumerate() {
            let qr = softmax(row);
            for (c, qc) in qr.iter().enumerate() {
                cond.push(parent_mass[a] * qc - joint[a * k + c]);
            }
        }
        (marg, cond)
    }

    fn descend(&mut self, grads: &(Vec<f64>, Vec<f64>), lr: f64) {
        for (p, g) in self.marginal_logits.iter_mut().zip(&grads.0) {
            *p -= lr * g;
        }
        for (p, g) in self.conditional_logits.iter_mut().zip(&grads.1) {
            *p -= lr * g;
        }
    }

    /// Expected NLL under a joint over (parent, child).
    fn expected_nll(&self, joint: &[f64]) -> f64 {
        let (marg, cond) = self.log_tables();
        let k = self.k();
        let mut total = 0.0;
        for a in 0..k {
            for c in 0..k {
                let p = joint[a * k + c];
                if p > 0.0 {
                    total -= p * (marg[a] + cond[a * k + c]);
                }
            }
        }
        total
    }
}

/// Both factorizations, forward first.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelPair {
    pub forward: FactorizationModel,
    pub backward: FactorizationModel,
}

impl ModelPair {
    pub fn uniform(k: usize) -> Self {
        Self {
            forward: FactorizationModel::uniform(Direction::Forward, k),
            backward: FactorizationModel::uniform(Direction::Backward, k),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PretrainConfig {
    pub lr: f64,
    pub max_steps: usize,
    /// Allowed excess of the expected NLL over the joint entropy, in nats.
    pub tol: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            lr: 4.0,
            max_steps: 200_000,
            tol: 1e-5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PretrainReport {
    pub steps: usize,
    pub excess_forward: f64,
    pub excess_backward: f64,
}

/// Fit both models by full-batch gradient descent on the exact
/// observational joint until each is within `tol` nats of its entropy.
pub fn pretrain(models: &mut ModelPair, scm: &BivariateScm, cfg: &PretrainConfig) -> Result<PretrainReport> {
    if scm.state() != DependencyState::Related {
        return Err(Error::invalid("pretraining needs the observational (related) state"));
    }
    if models.forward.k() != scm.k() || models.backward.k() != scm.k() {
        return Err(Error::DimensionMismatch {
            expected: scm.k(),
            actual: models.forward.k(),
        });
    }
    let k = scm.k();
    let joint = scm.joint();
    let transposed: Vec<f64> = (0..k * k).map(|i| joint[(i % k) * k + i / k]).collect();
    let entropy: f64 = -joint.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>();

    let mut steps = 0;
    loop {
        let excess_forward = models.forward.expected_nll(&joint) - entropy;
        let excess_backward = models.backward.expected_nll(&transposed) - entropy;
        if excess_forward <= cfg.tol && excess_backward <= cfg.tol {
            return Ok(PretrainReport {
                steps,
                excess_forward,
                excess_backward,
            });
        }
        if steps == cfg.max_steps {
            return Err(Error::NotConverged {
                steps,
                excess: excess_forward.max(excess_backward),
            });
        }
        let g = models.forward.expected_nll_gradient(&joint);
        models.forward.descend(&g, cfg.lr);
        let g = models.backward.expected_nll_gradient(&transposed);
        models.backward.descend(&g, cfg.lr);
        steps += 1;
    }
}

/// `R = -log[sigmoid(gamma) L12 + (1 - sigmoid(gamma)) L21]`, from log-likelihoods.
pub fn regret(gamma: f64, log_l12: f64, log_l21: f64) -> f64 {
    let a = log_sigmoid(gamma) + log_l12;
    let b = log_sigmoid(-gamma) + log_l21;
    let m = a.max(b);
    -(m + ((a - m).exp() + (b - m).exp()).ln())
}

pub fn regret_gradient(gamma: f64, log_l12: f64, log_l21: f64) -> f64 {
    sigmoid(gamma) - sigmoid(gamma + (log_l12 - log_l21))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetaParams {
    pub gamma: f64,
    pub meta_lr: f64,
    pub adapt_lr: f64,
    pub adapt_steps: usize,
}

impl MetaParams {
    pub fn new(meta_lr: f64, adapt_lr: f64, adapt_steps: usize) -> Result<Self> {
        if !(meta_lr > 0.0 && adapt_lr > 0.0) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        if adapt_steps == 0 {
            return Err(Error::invalid("adapt_steps must be at least 1"));
        }
        Ok(Self {
            gamma: 0.0,
            meta_lr,
            adapt_lr,
            adapt_steps,
        })
    }

    pub fn belief(&self) -> f64 {
        sigmoid(self.gamma)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeOutcome {
    pub log_l12: f64,
    pub log_l21: f64,
    /// Running `logL12 - logL21` after each adaptation step.
    pub cumulative_diff: Vec<f64>,
    /// Per-step mean NLL of each model, before its update on that batch.
    pub nll_forward: Vec<f64>,
    pub nll_backward: Vec<f64>,
}

/// Adapt both models in place on the given batches, scoring each batch
/// before learning from it, then take one regret step on `gamma`.
pub fn adapt_on_batches(
    models: &mut ModelPair,
    meta: &mut MetaParams,
    batches: &[Vec<SamplePair>],
) -> Result<EpisodeOutcome> {
    let mut out = EpisodeOutcome {
        log_l12: 0.0,
        log_l21: 0.0,
        cumulative_diff: Vec::with_capacity(batches.len()),
        nll_forward: Vec::with_capacity(batches.len()),
        nll_backward: Vec::with_capacity(batches.len()),
    };
    for batch in batches {
        let l12 = models.forward.log_likelihood(batch)?;
        let l21 = models.backward.log_likelihood(batch)?;
        out.log_l12 += l12;
        out.log_l21 += l21;
        out.cumulative_diff.push(out.log_l12 - out.log_l21);
        out.nll_forward.push(-l12 / batch.len() as f64);
        out.nll_backward.push(-l21 / batch.len() as f64);
        let g = models.forward.nll_gradient(batch)?;
        models.forward.descend(&g, meta.adapt_lr);
        let g = models.backward.nll_gradient(batch)?;
        models.backward.descend(&g, meta.adapt_lr);
    }
    meta.gamma -= meta.meta_lr * regret_gradient(meta.gamma, out.log_l12, out.log_l21);
    Ok(out)
}

/// [`adapt_on_batches`] on copies, leaving the given models untouched.
pub fn episode_on_batches(
    models: &ModelPair,
    meta: &mut MetaParams,
    batches: &[Vec<SamplePair>],
) -> Result<EpisodeOutcome> {
    adapt_on_batches(&mut models.clone(), meta, batches)
}

/// One episode on fresh batches from `scm`.
pub fn episode(
    models: &ModelPair,
    meta: &mut MetaParams,
    scm: &BivariateScm,
    batch_size: usize,
    rng: &mut SeededRng,
) -> Result<EpisodeOutcome> {
    let batches = (0..meta.adapt_steps)
        .map(|_| scm.sample_batch(batch_size, rng))
        .collect::<Result<Vec<_>>>()?;
    episode_on_batches(models, meta, &batches)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetaConfig {
    pub k: usize,
    pub epsilon: f64,
    pub lambda: f64,
    pub episodes: usize,
    pub adapt_steps: usize,
    pub batch_size: usize,
    pub adapt_lr: f64,
    pub meta_lr: f64,
    /// Restore the pretrained models before every episode; otherwise the
    /// adapted models carry over to the next one.
    pub reset: bool,
    pub pretrain: PretrainConfig,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            k: 5,
            epsilon: 1.0,
            lambda: 0.0,
            episodes: 500,
            adapt_steps: 30,
            batch_size: 128,
            adapt_lr: 1.0,
            meta_lr: 0.1,
            reset: false,
            pretrain: PretrainConfig::default(),
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::invalid("k must be at least 2"));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid("lambda must lie in [0, 1]"));
        }
        if self.episodes == 0 || self.batch_size == 0 {
            return Err(Error::invalid("episodes and batch_size must be at least 1"));
        }
        MetaParams::new(self.meta_lr, self.adapt_lr, self.adapt_steps)?;
        if !(self.pretrain.lr > 0.0 && self.pretrain.tol > 0.0) {
            return Err(Error::invalid("pretraining lr and tol must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetaRecord {
    pub seed: u64,
    pub pretrain: PretrainReport,
    /// `sigmoid(gamma)` after each episode.
    pub sigma_gamma: Vec<f64>,
    /// `logL12 - logL21` of each episode.
    pub loglik_diff: Vec<f64>,
}

impl MetaRecord {
    pub fn final_belief(&self) -> f64 {
        *self.sigma_gamma.last().expect("episodes >= 1")
    }
}

/// Pretrain once, then repeatedly intervene and run an episode.
///
/// Sub-streams of `seed`: 0 generator and interventions, 1 data.
pub fn run_meta(config: &MetaConfig, seed: u64) -> Result<MetaRecord> {
    config.validate()?;
    let root = SeededRng::new(seed);
    let mut scm_rng = root.substream(0);
    let mut data_rng = root.substream(1);

    let mut scm = BivariateScm::new(config.k, config.epsilon, &mut scm_rng)?;
    let mut models = ModelPair::uniform(config.k);
    let report = pretrain(&mut models, &scm, &config.pretrain)?;
    let mut meta = MetaParams::new(config.meta_lr, config.adapt_lr, config.adapt_steps)?;

    let mut sigma_gamma = Vec::with_capacity(config.episodes);
    let mut loglik_diff = Vec::with_capacity(config.episodes);
    for _ in 0..config.episodes {
        let target = choose_target(config.lambda, &mut scm_rng)?;
        scm.intervene(target, &mut scm_rng)?;
        let batches = (0..config.adapt_steps)
            .map(|_| scm.sample_batch(config.batch_size, &mut data_rng))
            .collect::<Result<Vec<_>>>()?;
        let out = if config.reset {
            episode_on_batches(&models, &mut meta, &batches)?
        } else {
            adapt_on_batches(&mut models, &mut meta, &batches)?
        };
        sigma_gamma.push(meta.belief());
        loglik_diff.push(out.log_l12 - out.log_l21);
    }
    Ok(MetaRecord {
        seed,
        pretrain: report,
        sigma_gamma,
        loglik_diff,
    })
}
