//! Marginal (MM) and conditional (CM) illustrator models.
//!
//! MM scores both variables with one vector: `x1_hat = c2 i`,
//! `x2_hat = c1 i`. CM conditions each variable on the other through one
//! shared matrix: `x1_hat = c2 W e_{x2}`, `x2_hat = c1 W e_{x1}`. The loss is
//! the summed cross-entropy of both variables, averaged over the batch.
//!
//! Gradients are analytic and work on count tables, so their cost does not
//! grow with the batch beyond the counting pass. The per-sample
//! [`ToyModel::forward`] + [`batch_loss`] path is kept separate and is what
//! the finite-difference checks differentiate.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sampling::SeededRng;
use crate::scm::SamplePair;

use super::gate::GateParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Marginal,
    Conditional,
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Marginal => "mm",
            ModelKind::Conditional => "cm",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mm" | "marginal" => Ok(ModelKind::Marginal),
            "cm" | "conditional" => Ok(ModelKind::Conditional),
            other => Err(Error::invalid(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Numerically stable `log softmax`.
pub fn log_softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = x.iter().map(|v| (v - m).exp()).sum::<f64>().ln() + m;
    x.iter().map(|v| v - lse).collect()
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

/// `L = -(1/B) sum_j [log softmax(x1_hat_j)[x1_j] + log softmax(x2_hat_j)[x2_j]]`.
pub fn batch_loss(preds: &[(Vec<f64>, Vec<f64>)], targets: &[SamplePair]) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if preds.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: targets.len(),
            actual: preds.len(),
        });
    }
    let mut total = 0.0;
    for ((x1_hat, x2_hat), s) in preds.iter().zip(targets) {
        total -= log_softmax(x1_hat)[s.x1] + log_softmax(x2_hat)[s.x2];
    }
    Ok(total / targets.len() as f64)
}

/// Gradients of the batch loss, and the quantities they were evaluated at.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    /// Gradient w.r.t. `i` (MM) or row-major `W` (CM).
    pub params: Vec<f64>,
    pub z: [f64; 2],
    pub loss: f64,
    pub c: [f64; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub enum ToyModel {
    /// The vector `i`.
    Marginal { i: Vec<f64> },
    /// Row-major `K x K` matrix `W`; column `x` is the score vector `W e_x`.
    Conditional { k: usize, w: Vec<f64> },
}

impl ToyModel {
    /// `i = 1_K / K`; `W` Kaiming-uniform on `+-sqrt(6 / K)`.
    pub fn init(kind: ModelKind, k: usize, rng: &mut SeededRng) -> Self {
        match kind {
            ModelKind::Marginal => ToyModel::Marginal {
                i: vec![1.0 / k as f64; k],
            },
            ModelKind::Conditional => {
                let bound = (6.0 / k as f64).sqrt();
                ToyModel::Conditional {
                    k,
                    w: (0..k * k).map(|_| rng.uniform_range(-bound, bound)).collect(),
                }
            }
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ToyModel::Marginal { .. } => ModelKind::Marginal,
            ToyModel::Conditional { .. } => ModelKind::Conditional,
        }
    }

    pub fn k(&self) -> usize {
        match self {
            ToyModel::Marginal { i } => i.len(),
            ToyModel::Conditional { k, .. } => *k,
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            ToyModel::Marginal { i } => i,
            ToyModel::Conditional { w, .. } => w,
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            ToyModel::Marginal { i } => i,
            ToyModel::Conditional { w, .. } => w,
        }
    }

    /// Raw scores `(x1_hat, x2_hat)` for one sample.
    pub fn forward(&self, pair: SamplePair, c: [f64; 2]) -> Result<(Vec<f64>, Vec<f64>)> {
        let k = self.k();
        for x in [pair.x1, pair.x2] {
            if x >= k {
                return Err(Error::IndexOutOfRange { index: x, k });
            }
        }
        match self {
            ToyModel::Marginal { i } => Ok((
                i.iter().map(|v| c[1] * v).collect(),
                i.iter().map(|v| c[0] * v).collect(),
            )),
            ToyModel::Conditional { k, w } => {
                let column = |x: usize, scale: f64| -> Vec<f64> {
                    (0..*k).map(|r| scale * w[r * k + x]).collect()
                };
                Ok((column(pair.x2, c[1]), column(pair.x1, c[0])))
            }
        }
    }

    /// Batch loss through the per-sample forward pass.
    pub fn loss(&self, c: [f64; 2], batch: &[SamplePair]) -> Result<f64> {
        let preds = batch
            .iter()
            .map(|&s| self.forward(s, c))
            .collect::<Result<Vec<_>>>()?;
        batch_loss(&preds, batch)
    }

    /// Exact gradients of the batch loss w.r.t. the model parameters and
    /// both structural logits, with the gate noise held fixed.
    pub fn gradients(&self, gate: &GateParams, noise: [f64; 2], batch: &[SamplePair]) -> Result<Gradients> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let k = self.k();
        if let Some(s) = batch.iter().find(|s| s.x1 >= k || s.x2 >= k) {
            return Err(Error::IndexOutOfRange {
                index: s.x1.max(s.x2),
                k,
            });
        }
        let c = gate.gate(noise);
        let b = batch.len() as f64;
        let (params, d_c1, d_c2, loss) = match self {
            ToyModel::Marginal { i } => marginal_grads(i, c, batch, b),
            ToyModel::Conditional { k, w } => conditional_grads(*k, w, c, batch, b),
        };
        // c1 = softmax((z + g) / tau)[0]: dc1/dz1 = c1 c2 / tau = -dc1/dz2
        let coupling = c[0] * c[1] / gate.tau;
        let z = [(d_c1 - d_c2) * coupling, (d_c2 - d_c1) * coupling];
        Ok(Gradients { params, z, loss, c })
    }
}

fn marginal_grads(i: &[f64], c: [f64; 2], batch: &[SamplePair], b: f64) -> (Vec<f64>, f64, f64, f64) {
    let k = i.len();
    let mut n1 = vec![0.0; k];
    let mut n2 = vec![0.0; k];
    for s in batch {
        n1[s.x1] += 1.0;
        n2[s.x2] += 1.0;
    }
    // x1 is scored by c2 i, x2 by c1 i
    let scores1: Vec<f64> = i.iter().map(|v| c[1] * v).collect();
    let scores2: Vec<f64> = i.iter().map(|v| c[0] * v).collect();
    let (ls1, ls2) = (log_softmax(&scores1), log_softmax(&scores2));
    let resid1: Vec<f64> = ls1.iter().zip(&n1).map(|(l, n)| b * l.exp() - n).collect();
    let resid2: Vec<f64> = ls2.iter().zip(&n2).map(|(l, n)| b * l.exp() - n).collect();

    let nll1: f64 = -n1.iter().zip(&ls1).map(|(n, l)| n * l).sum::<f64>();
    let nll2: f64 = -n2.iter().zip(&ls2).map(|(n, l)| n * l).sum::<f64>();
    let loss = (nll1 + nll2) / b;

    let grad = (0..k)
        .map(|j| (c[1] * resid1[j] + c[0] * resid2[j]) / b)
        .collect();
    let d_c2 = resid1.iter().zip(i).map(|(r, v)| r * v).sum::<f64>() / b;
    let d_c1 = resid2.iter().zip(i).map(|(r, v)| r * v).sum::<f64>() / b;
    (grad, d_c1, d_c2, loss)
}

fn conditional_grads(
    k: usize,
    w: &[f64],
    c: [f64; 2],
    batch: &[SamplePair],
    b: f64,
) -> (Vec<f64>, f64, f64, f64) {
    // counts[a][b]: x1 = a, x2 = b
    let mut counts = vec![0.0; k * k];
    for s in batch {
        counts[s.x1 * k + s.x2] += 1.0;
    }
    let row_sum: Vec<f64> = (0..k).map(|a| (0..k).map(|b| counts[a * k + b]).sum()).collect();
    let col_sum: Vec<f64> = (0..k).map(|b| (0..k).map(|a| counts[a * k + b]).sum()).collect();

    let mut grad = vec![0.0; k * k];
    let (mut d_c1, mut d_c2) = (0.0, 0.0);
    let (mut nll1, mut nll2) = (0.0, 0.0);
    let mut column = vec![0.0; k];
    for j in 0..k {
        for (r, slot) in column.iter_mut().enumerate() {
            *slot = w[r * k + j];
        }
        // column j scores x2 given x1 = j (scaled by c1) and x1 given x2 = j (scaled by c2)
        let ls2 = log_softmax(&column.iter().map(|v| c[0] * v).collect::<Vec<_>>());
        let ls1 = log_softmax(&column.iter().map(|v| c[1] * v).collect::<Vec<_>>());
        for r in 0..k {
            let from_x1 = counts[j * k + r];
            let from_x2 = counts[r * k + j];
            let resid2 = row_sum[j] * ls2[r].exp() - from_x1;
            let resid1 = col_sum[j] * ls1[r].exp() - from_x2;
            grad[r * k + j] = (c[0] * resid2 + c[1] * resid1) / b;
            d_c1 += resid2 * column[r];
            d_c2 += resid1 * column[r];
            nll2 -= from_x1 * ls2[r];
            nll1 -= from_x2 * ls1[r];
        }
    }
    (grad, d_c1 / b, d_c2 / b, (nll1 + nll2) / b)
}
