//! Bivariate ENCO baseline.
//!
//! Each variable gets a marginal table and a table conditioned on the other
//! variable. Edge existence (`gamma12`, `gamma21`) and orientation
//! (`theta12`, with `theta21 = -theta12`) are learned from how much
//! conditioning lowers a variable's own negative log-likelihood on
//! interventional data. Only likelihood differences of the same variable
//! enter the structural gradients, and the intervened-upon variable's terms
//! are suppressed.

use crate::error::{Error, Result};
use crate::meta::sigmoid;
use crate::sampling::SeededRng;
use crate::scm::{choose_target, BivariateScm, SamplePair, Variable};
use crate::toy::model::{log_softmax, softmax};

fn sigmoid_prime(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 - s)
}

fn value(s: SamplePair, v: Variable) -> usize {
    match v {
        Variable::X1 => s.x1,
        Variable::X2 => s.x2,
    }
}

fn slot(v: Variable) -> usize {
    match v {
        Variable::X1 => 0,
        Variable::X2 => 1,
    }
}

/// Tabular distribution models. Index 0 models `X1`, index 1 models `X2`;
/// conditional tables are row-major with row = value of the other variable.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoNets {
    k: usize,
    pub marginal: [Vec<f64>; 2],
    pub conditional: [Vec<f64>; 2],
}

impl EncoNets {
    pub fn uniform(k: usize) -> Self {
        Self {
            k,
            marginal: [vec![0.0; k], vec![0.0; k]],
            conditional: [vec![0.0; k * k], vec![0.0; k * k]],
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Per-sample NLL of `target` without (`marginal`) and with
    /// (`conditional`) the incoming edge from the other variable.
    pub fn nlls(&self, batch: &[SamplePair], target: Variable) -> Result<(Vec<f64>, Vec<f64>)> {
        let k = self.k;
        let i = slot(target);
        let marg = log_softmax(&self.marginal[i]);
        let cond: Vec<f64> = self.conditional[i].chunks(k).flat_map(log_softmax).collect();
        let mut without = Vec::with_capacity(batch.len());
        let mut with = Vec::with_capacity(batch.len());
        for &s in batch {
            let (x, parent) = (value(s, target), value(s, target.other()));
            if x >= k || parent >= k {
                return Err(Error::IndexOutOfRange { index: x.max(parent), k });
            }
            without.push(-marg[x]);
            with.push(-cond[parent * k + x]);
        }
        Ok((without, with))
    }

    /// One SGD step on the mean NLL of all four tables.
    pub fn fit_step(&mut self, batch: &[SamplePair], lr: f64) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let k = self.k;
        let b = batch.len() as f64;
        for target in [Variable::X1, Variable::X2] {
            let i = slot(target);
            let mut marg_counts = vec![0.0; k];
            let mut joint_counts = vec![0.0; k * k];
            for &s in batch {
                let (x, parent) = (value(s, target), value(s, target.other()));
                if x >= k || parent >= k {
                    return Err(Error::IndexOutOfRange { index: x.max(parent), k });
                }
                marg_counts[x] += 1.0;
                joint_counts[parent * k + x] += 1.0;
            }
            let q = softmax(&self.marginal[i]);
            for (j, p) in self.marginal[i].iter_mut().enumerate() {
                *p -= lr * (q[j] - marg_counts[j] / b);
            }
            for (parent, row) in self.conditional[i].chunks_mut(k).enumerate() {
                let row_counts = &joint_counts[parent * k..(parent + 1) * k];
                let n: f64 = row_counts.iter().sum();
                if n == 0.0 {
                    continue;
                }
                let q = softmax(row);
                for (j, p) in row.iter_mut().enumerate() {
                    *p -= lr * (n * q[j] - row_counts[j]) / b;
                }
            }
        }
        Ok(())
    }
}

/// `n_batches` SGD steps on batches from the observational generator.
pub fn distribution_fit_stage(
    nets: &mut EncoNets,
    scm: &BivariateScm,
    n_batches: usize,
    batch_size: usize,
    lr: f64,
    rng: &mut SeededRng,
) -> Result<()> {
    for _ in 0..n_batches {
        let batch = scm.sample_batch(batch_size, rng)?;
        nets.fit_step(&batch, lr)?;
    }
    Ok(())
}

/// Per-sample likelihood terms of one interventional batch.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphBatch {
    pub target: Variable,
    /// NLL of `X2` with / without the edge `X1 -> X2`.
    pub x2_with: Vec<f64>,
    pub x2_without: Vec<f64>,
    /// NLL of `X1` with / without the edge `X2 -> X1`.
    pub x1_with: Vec<f64>,
    pub x1_without: Vec<f64>,
}

impl GraphBatch {
    pub fn score(nets: &EncoNets, batch: &[SamplePair], target: Variable) -> Result<Self> {
        let (x2_without, x2_with) = nets.nlls(batch, Variable::X2)?;
        let (x1_without, x1_with) = nets.nlls(batch, Variable::X1)?;
        Ok(Self {
            target,
            x2_with,
            x2_without,
            x1_with,
            x1_without,
        })
    }

    pub fn len(&self) -> usize {
        self.x2_with.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x2_with.is_empty()
    }

    /// Per-sample `L_with - L_without (+ lambda_sparse)` for the edge into
    /// `child`; all zero when `child` was intervened upon.
    pub fn edge_slots(&self, child: Variable, lambda_sparse: f64) -> Vec<f64> {
        if self.target == child {
            return vec![0.0; self.len()];
        }
        let (with, without) = match child {
            Variable::X1 => (&self.x1_with, &self.x1_without),
            Variable::X2 => (&self.x2_with, &self.x2_without),
        };
        with.iter()
            .zip(without)
            .map(|(w, o)| w - o + lambda_sparse)
            .collect()
    }

    fn mean_difference(&self, child: Variable) -> f64 {
        let slots = self.edge_slots(child, 0.0);
        slots.iter().sum::<f64>() / slots.len() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EncoParams {
    pub gamma12: f64,
    pub gamma21: f64,
    pub theta12: f64,
    pub lambda_sparse: f64,
    /// Probability that `X2` is the intervention target; `X1` gets `1 - lambda`.
    pub lambda: f64,
}

impl EncoParams {
    pub fn new(lambda: f64, lambda_sparse: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::invalid(format!("lambda must lie in [0, 1], got {lambda}")));
        }
        if lambda_sparse.is_nan() || lambda_sparse < 0.0 {
            return Err(Error::invalid("lambda_sparse must be non-negative"));
        }
        Ok(Self {
            gamma12: 0.0,
            gamma21: 0.0,
            theta12: 0.0,
            lambda_sparse,
            lambda,
        })
    }

    pub fn theta21(&self) -> f64 {
        -self.theta12
    }

    pub fn p_x1(&self) -> f64 {
        1.0 - self.lambda
    }

    pub fn p_x2(&self) -> f64 {
        self.lambda
    }
}

fn mean_slots(batches: &[GraphBatch], child: Variable, lambda_sparse: f64) -> Result<f64> {
    let n: usize = batches.iter().map(GraphBatch::len).sum();
    if n == 0 {
        return Err(Error::invalid("no samples for the gamma gradient"));
    }
    let total: f64 = batches
        .iter()
        .flat_map(|b| b.edge_slots(child, lambda_sparse))
        .sum();
    Ok(total / n as f64)
}

/// `(dL/dgamma12, dL/dgamma21)`. Suppressed slots count as zeros in the
/// sample mean.
pub fn gamma_gradient(params: &EncoParams, batches: &[GraphBatch]) -> Result<(f64, f64)> {
    let e12 = mean_slots(batches, Variable::X2, params.lambda_sparse)?;
    let e21 = mean_slots(batches, Variable::X1, params.lambda_sparse)?;
    Ok((
        sigmoid_prime(params.gamma12) * sigmoid(params.theta12) * e12,
        sigmoid_prime(params.gamma21) * sigmoid(params.theta21()) * e21,
    ))
}

/// Mean likelihood difference for the edge into `child` over the batches
/// that intervened on the other variable; zero when there are none.
fn target_mean(batches: &[GraphBatch], child: Variable) -> f64 {
    let matching: Vec<f64> = batches
        .iter()
        .filter(|b| b.target == child.other())
        .map(|b| b.mean_difference(child))
        .collect();
    if matching.is_empty() {
        0.0
    } else {
        matching.iter().sum::<f64>() / matching.len() as f64
    }
}

/// `dL/dtheta12`.
pub fn theta_gradient(params: &EncoParams, batches: &[GraphBatch]) -> f64 {
    let e1 = target_mean(batches, Variable::X2);
    let e2 = target_mean(batches, Variable::X1);
    sigmoid_prime(params.theta12)
        * (params.p_x1() * sigmoid(params.gamma12) * e1 - params.p_x2() * sigmoid(params.gamma21) * e2)
}

/// Scalar objectives whose derivatives are the two estimators above; used
/// to check them numerically.
pub fn gamma_surrogate(params: &EncoParams, batches: &[GraphBatch]) -> Result<f64> {
    let e12 = mean_slots(batches, Variable::X2, params.lambda_sparse)?;
    let e21 = mean_slots(batches, Variable::X1, params.lambda_sparse)?;
    Ok(sigmoid(params.gamma12) * sigmoid(params.theta12) * e12
        + sigmoid(params.gamma21) * sigmoid(params.theta21()) * e21)
}

pub fn theta_surrogate(params: &EncoParams, batches: &[GraphBatch]) -> f64 {
    let e1 = target_mean(batches, Variable::X2);
    let e2 = target_mean(batches, Variable::X1);
    params.p_x1() * sigmoid(params.gamma12) * sigmoid(params.theta12) * e1
        + params.p_x2() * sigmoid(params.gamma21) * sigmoid(params.theta21()) * e2
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoConfig {
    pub k: usize,
    pub epsilon: f64,
    pub lambda: f64,
    pub stages: usize,
    pub fit_batches: usize,
    pub graph_batches: usize,
    pub batch_size: usize,
    pub fit_lr: f64,
    /// Plain gradient descent step for `gamma` and `theta`.
    pub graph_lr: f64,
    pub lambda_sparse: f64,
}

impl Default for EncoConfig {
    fn default() -> Self {
        Self {
            k: 5,
            epsilon: 1.0,
            lambda: 0.0,
            stages: 50,
            fit_batches: 20,
            graph_batches: 20,
            batch_size: 128,
            fit_lr: 1.0,
            graph_lr: 2.0,
            lambda_sparse: 0.002,
        }
    }
}

impl EncoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::invalid("k must be at least 2"));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        EncoParams::new(self.lambda, self.lambda_sparse)?;
        for (name, v) in [
            ("stages", self.stages),
            ("fit_batches", self.fit_batches),
            ("graph_batches", self.graph_batches),
            ("batch_size", self.batch_size),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be at least 1")));
            }
        }
        if !(self.fit_lr > 0.0 && self.graph_lr > 0.0) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageBeliefs {
    pub sigma_gamma12: f64,
    pub sigma_gamma21: f64,
    pub sigma_theta12: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoRecord {
    pub seed: u64,
    pub stages: Vec<StageBeliefs>,
}

impl EncoRecord {
    pub fn final_beliefs(&self) -> StageBeliefs {
        *self.stages.last().expect("stages >= 1")
    }
}

/// Alternate observational fitting and one structural update on a set of
/// interventional batches, stage by stage.
///
/// Sub-streams of `seed`: 0 generator and interventions, 1 observational
/// data, 2 interventional data.
pub fn run_enco(config: &EncoConfig, seed: u64) -> Result<EncoRecord> {
    config.validate()?;
    let root = SeededRng::new(seed);
    let mut scm_rng = root.substream(0);
    let mut fit_rng = root.substream(1);
    let mut graph_rng = root.substream(2);

    let observational = BivariateScm::new(config.k, config.epsilon, &mut scm_rng)?;
    let mut chain = observational.clone();
    let mut nets = EncoNets::uniform(config.k);
    let mut params = EncoParams::new(config.lambda, config.lambda_sparse)?;

    let mut stages = Vec::with_capacity(config.stages);
    for _ in 0..config.stages {
        distribution_fit_stage(
            &mut nets,
            &observational,
            config.fit_batches,
            config.batch_size,
            config.fit_lr,
            &mut fit_rng,
        )?;
        let mut batches = Vec::with_capacity(config.graph_batches);
        for _ in 0..config.graph_batches {
            let target = choose_target(config.lambda, &mut scm_rng)?;
            chain.intervene(target, &mut scm_rng)?;
            let batch = chain.sample_batch(config.batch_size, &mut graph_rng)?;
            batches.push(GraphBatch::score(&nets, &batch, target)?);
        }
        let (g12, g21) = gamma_gradient(&params, &batches)?;
        let gt = theta_gradient(&params, &batches);
        params.gamma12 -= config.graph_lr * g12;
        params.gamma21 -= config.graph_lr * g21;
        params.theta12 -= config.graph_lr * gt;
        stages.push(StageBeliefs {
            sigma_gamma12: sigmoid(params.gamma12),
            sigma_gamma21: sigmoid(params.gamma21),
            sigma_theta12: sigmoid(params.theta12),
        });
    }
    Ok(EncoRecord { seed, stages })
}
