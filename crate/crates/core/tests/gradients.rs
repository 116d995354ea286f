//! Analytic gradients against central finite differences, computed here
//! from the public loss functions only.

use bias_lab::enco::{gamma_gradient, gamma_surrogate, theta_gradient, theta_surrogate, EncoParams, GraphBatch};
use bias_lab::meta::{regret, regret_gradient};
use bias_lab::sampling::SeededRng;
use bias_lab::scm::{SamplePair, Variable};
use bias_lab::toy::{GateParams, ModelKind, ToyModel};

const STEP: f64 = 1e-5;
const INSTANCES: usize = 100;

fn fd(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    (f(x + STEP) - f(x - STEP)) / (2.0 * STEP)
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

fn random_batch(k: usize, n: usize, rng: &mut SeededRng) -> Vec<SamplePair> {
    let pick = |rng: &mut SeededRng| ((rng.uniform() * k as f64) as usize).min(k - 1);
    (0..n).map(|_| SamplePair::new(pick(rng), pick(rng))).collect()
}

fn toy_worst(kind: ModelKind, seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..INSTANCES {
        let k = 2 + (rng.uniform() * 5.0) as usize;
        let mut model = ToyModel::init(kind, k, &mut rng);
        for p in model.params_mut() {
            *p = rng.uniform_range(-2.0, 2.0);
        }
        let gate = GateParams::new(rng.uniform_range(-2.0, 2.0), rng.uniform_range(-2.0, 2.0), 2.0).unwrap();
        let noise = [rng.uniform_range(-1.0, 3.0), rng.uniform_range(-1.0, 3.0)];
        let batch = random_batch(k, 1 + (rng.uniform() * 40.0) as usize, &mut rng);
        let g = model.gradients(&gate, noise, &batch).unwrap();

        for j in 0..model.params().len() {
            let loss_at = |v: f64| {
                let mut m = model.clone();
                m.params_mut()[j] = v;
                m.loss(gate.gate(noise), &batch).unwrap()
            };
            worst = worst.max(rel_err(g.params[j], fd(loss_at, model.params()[j])));
        }
        for j in 0..2 {
            let loss_at = |v: f64| {
                let mut gt = gate;
                gt.z[j] = v;
                model.loss(gt.gate(noise), &batch).unwrap()
            };
            worst = worst.max(rel_err(g.z[j], fd(loss_at, gate.z[j])));
        }
    }
    worst
}

#[test]
fn marginal_model_gradients() {
    let worst = toy_worst(ModelKind::Marginal, 21);
    assert!(worst < 1e-5, "{worst}");
}

#[test]
fn conditional_model_gradients() {
    let worst = toy_worst(ModelKind::Conditional, 22);
    assert!(worst < 1e-5, "{worst}");
}

#[test]
fn regret_gradient_matches() {
    let mut rng = SeededRng::new(23);
    let mut worst = 0.0f64;
    for _ in 0..INSTANCES {
        let gamma = rng.uniform_range(-4.0, 4.0);
        let l12 = rng.uniform_range(-200.0, -1.0);
        let l21 = l12 + rng.uniform_range(-6.0, 6.0);
        let numeric = fd(|g| regret(g, l12, l21), gamma);
        worst = worst.max(rel_err(regret_gradient(gamma, l12, l21), numeric));
    }
    assert!(worst < 1e-6, "{worst}");
}

fn random_graph_batches(rng: &mut SeededRng) -> (EncoParams, Vec<GraphBatch>) {
    let mut params = EncoParams::new(rng.uniform(), 0.002).unwrap();
    params.gamma12 = rng.uniform_range(-3.0, 3.0);
    params.gamma21 = rng.uniform_range(-3.0, 3.0);
    params.theta12 = rng.uniform_range(-3.0, 3.0);
    let batches = (0..2 + (rng.uniform() * 6.0) as usize)
        .map(|_| {
            let n = 1 + (rng.uniform() * 30.0) as usize;
            let nll = |rng: &mut SeededRng| (0..n).map(|_| rng.uniform_range(0.1, 3.0)).collect::<Vec<_>>();
            GraphBatch {
                target: if rng.bernoulli(0.5) { Variable::X2 } else { Variable::X1 },
                x2_with: nll(rng),
                x2_without: nll(rng),
                x1_with: nll(rng),
                x1_without: nll(rng),
            }
        })
        .collect();
    (params, batches)
}

#[test]
fn enco_gradients_match() {
    let mut rng = SeededRng::new(24);
    let mut worst = 0.0f64;
    for _ in 0..INSTANCES {
        let (params, batches) = random_graph_batches(&mut rng);
        let (g12, g21) = gamma_gradient(&params, &batches).unwrap();
        let n12 = fd(|v| gamma_surrogate(&EncoParams { gamma12: v, ..params }, &batches).unwrap(), params.gamma12);
        let n21 = fd(|v| gamma_surrogate(&EncoParams { gamma21: v, ..params }, &batches).unwrap(), params.gamma21);
        let nt = fd(|v| theta_surrogate(&EncoParams { theta12: v, ..params }, &batches), params.theta12);
        worst = worst
            .max(rel_err(g12, n12))
            .max(rel_err(g21, n21))
            .max(rel_err(theta_gradient(&params, &batches), nt));
    }
    assert!(worst < 1e-6, "{worst}");
}
