//! Self-checks behind `bias-lab verify`: the shift ordering after cause
//! interventions, central finite-difference checks of every analytic
//! gradient, and the case-frequency oracle.

use crate::enco::{self, EncoNets, EncoParams, GraphBatch};
use crate::error::Result;
use crate::meta;
use crate::probes::{case_ratios, stationary_case_ratios, verify_dpi};
use crate::sampling::{derive_seed, SeededRng};
use crate::scm::{SamplePair, Variable};
use crate::toy::gate::GateParams;
use crate::toy::model::{ModelKind, ToyModel};

pub const FD_STEP: f64 = 1e-5;

/// Denominator floor for relative errors, so that vanishing gradients are
/// judged on absolute error instead.
pub const REL_FLOOR: f64 = 1e-3;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Central difference of `f` at `x`.
pub fn central_difference(mut f: impl FnMut(f64) -> f64, x: f64) -> f64 {
    (f(x + FD_STEP) - f(x - FD_STEP)) / (2.0 * FD_STEP)
}

fn random_batch(k: usize, n: usize, rng: &mut SeededRng) -> Vec<SamplePair> {
    (0..n)
        .map(|_| {
            SamplePair::new(
                (rng.uniform() * k as f64) as usize,
                (rng.uniform() * k as f64) as usize,
            )
        })
        .collect()
}

/// Worst relative error over all coordinates of one random illustrator
/// model instance.
pub fn toy_gradient_error(kind: ModelKind, rng: &mut SeededRng) -> Result<f64> {
    let k = 2 + (rng.uniform() * 5.0) as usize;
    let mut model = ToyModel::init(kind, k, rng);
    for p in model.params_mut() {
        *p = rng.standard_normal();
    }
    let gate = GateParams::new(rng.standard_normal(), rng.standard_normal(), rng.uniform_range(0.5, 3.0))?;
    let noise = [rng.standard_normal(), rng.standard_normal()];
    let batch = random_batch(k, 1 + (rng.uniform() * 32.0) as usize, rng);
    let g = model.gradients(&gate, noise, &batch)?;

    let mut worst: f64 = 0.0;
    for i in 0..model.params().len() {
        let x0 = model.params()[i];
        let mut probe = model.clone();
        let fd = central_difference(
            |x| {
                probe.params_mut()[i] = x;
                probe.loss(gate.gate(noise), &batch).expect("valid batch")
            },
            x0,
        );
        worst = worst.max(relative_error(g.params[i], fd));
    }
    for j in 0..2 {
        let fd = central_difference(
            |x| {
                let mut moved = gate;
                moved.z[j] = x;
                model.loss(moved.gate(noise), &batch).expect("valid batch")
            },
            gate.z[j],
        );
        worst = worst.max(relative_error(g.z[j], fd));
    }
    Ok(worst)
}

/// Relative error of the regret gradient on one random instance.
pub fn meta_gradient_error(rng: &mut SeededRng) -> f64 {
    let gamma = rng.uniform_range(-4.0, 4.0);
    let l21 = rng.uniform_range(-200.0, -1.0);
    let l12 = l21 + rng.uniform_range(-6.0, 6.0);
    let fd = central_difference(|g| meta::regret(g, l12, l21), gamma);
    relative_error(meta::regret_gradient(gamma, l12, l21), fd)
}

/// Random tables, tagged batches and structural parameters.
pub fn random_enco_instance(rng: &mut SeededRng) -> Result<(EncoParams, Vec<GraphBatch>)> {
    let k = 2 + (rng.uniform() * 5.0) as usize;
    let mut nets = EncoNets::uniform(k);
    for table in nets.marginal.iter_mut().chain(nets.conditional.iter_mut()) {
        for p in table.iter_mut() {
            *p = rng.standard_normal();
        }
    }
    let n_batches = 2 + (rng.uniform() * 6.0) as usize;
    let mut batches = Vec::with_capacity(n_batches);
    for i in 0..n_batches {
        // first two batches cover both targets
        let target = match i {
            0 => Variable::X1,
            1 => Variable::X2,
            _ if rng.uniform() < 0.5 => Variable::X1,
            _ => Variable::X2,
        };
        let batch = random_batch(k, 1 + (rng.uniform() * 16.0) as usize, rng);
        batches.push(GraphBatch::score(&nets, &batch, target)?);
    }
    let mut params = EncoParams::new(rng.uniform(), rng.uniform() * 0.01)?;
    params.gamma12 = rng.uniform_range(-3.0, 3.0);
    params.gamma21 = rng.uniform_range(-3.0, 3.0);
    params.theta12 = rng.uniform_range(-3.0, 3.0);
    Ok((params, batches))
}

/// Worst relative error over `dL/dgamma12`, `dL/dgamma21` and
/// `dL/dtheta12` on one random instance.
pub fn enco_gradient_error(rng: &mut SeededRng) -> Result<f64> {
    let (params, batches) = random_enco_instance(rng)?;
    let (g12, g21) = enco::gamma_gradient(&params, &batches)?;
    let gt = enco::theta_gradient(&params, &batches);
    let fd12 = central_difference(
        |x| enco::gamma_surrogate(&EncoParams { gamma12: x, ..params }, &batches).expect("non-empty"),
        params.gamma12,
    );
    let fd21 = central_difference(
        |x| enco::gamma_surrogate(&EncoParams { gamma21: x, ..params }, &batches).expect("non-empty"),
        params.gamma21,
    );
    let fdt = central_difference(
        |x| enco::theta_surrogate(&EncoParams { theta12: x, ..params }, &batches),
        params.theta12,
    );
    Ok(relative_error(g12, fd12)
        .max(relative_error(g21, fd21))
        .max(relative_error(gt, fdt)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    pub dpi_violations: usize,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.dpi_violations == 0 && self.checks.iter().all(|c| c.passed)
    }
}

pub const GRADIENT_INSTANCES: usize = 100;
pub const DPI_TRIALS: usize = 10_000;
pub const CASE_RATIO_INTERVENTIONS: usize = 100_000;

/// Run every check from one seed.
pub fn run(seed: u64) -> Result<VerifyReport> {
    let mut dpi_violations = 0;
    for (i, &eps) in [0.2, 1.0, 5.0].iter().enumerate() {
        for (j, &k) in [2usize, 5, 10].iter().enumerate() {
            let mut rng = SeededRng::new(derive_seed(seed, &[0, i as u64, j as u64]));
            dpi_violations += verify_dpi(k, eps, DPI_TRIALS, &mut rng)?;
        }
    }

    type ErrorFn = fn(&mut SeededRng) -> Result<f64>;
    let gradients: [(&str, f64, ErrorFn); 4] = [
        ("mm gradient", 1e-5, |r| toy_gradient_error(ModelKind::Marginal, r)),
        ("cm gradient", 1e-5, |r| toy_gradient_error(ModelKind::Conditional, r)),
        ("meta gamma gradient", 1e-6, |r| Ok(meta_gradient_error(r))),
        ("enco gamma/theta gradient", 1e-6, enco_gradient_error),
    ];
    let mut checks = Vec::new();
    for (tag, (name, limit, error)) in gradients.into_iter().enumerate() {
        let mut rng = SeededRng::new(derive_seed(seed, &[1, tag as u64]));
        let mut value: f64 = 0.0;
        for _ in 0..GRADIENT_INSTANCES {
            value = value.max(error(&mut rng)?);
        }
        checks.push(Check {
            name: name.to_string(),
            value,
            limit,
            passed: value < limit,
        });
    }

    for (i, &lambda) in [0.2, 0.5, 0.8].iter().enumerate() {
        let mut rng = SeededRng::new(derive_seed(seed, &[2, i as u64]));
        let got = case_ratios(5, lambda, CASE_RATIO_INTERVENTIONS, &mut rng)?;
        let want = stationary_case_ratios(lambda);
        let dev = got
            .iter()
            .zip(&want)
            .map(|(g, w)| (g - w).abs())
            .fold(0.0, f64::max);
        checks.push(Check {
            name: format!("case ratios at lambda={lambda}"),
            value: dev,
            limit: 0.01,
            passed: dev <= 0.01,
        });
    }
    Ok(VerifyReport { dpi_violations, checks })
}
