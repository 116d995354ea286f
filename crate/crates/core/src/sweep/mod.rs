//! Seeded, parallel sweeps over epsilon / lambda grids and their CSV output.
//!
//! Every run gets its own seed from `(base_seed, epsilon index, lambda
//! index, run index)`, runs execute on a fixed-size thread pool, and results
//! are collected in grid-major, run-minor order before anything is written,
//! so the output bytes do not depend on the number of workers.

pub mod config;
pub mod output;
pub mod stats;

use rayon::prelude::*;

use crate::enco::{run_enco, EncoRecord};
use crate::error::{Error, Result};
use crate::meta::{run_meta, MetaRecord};
use crate::probes::{monte_carlo_delta_h, monte_carlo_delta_s, BiasSample, Estimate};
use crate::sampling::{derive_seed, SeededRng};
use crate::toy::{train_run, ModelKind, RunRecord};

pub use config::{Experiment, ExperimentConfig, ModelChoice};
pub use stats::Quartiles;

/// Environment variable consulted when no output directory is given.
pub const OUT_DIR_ENV: &str = "BIAS_LAB_OUT_DIR";

/// One run of a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunSlot {
    pub run_id: usize,
    pub eps_idx: usize,
    pub lam_idx: usize,
    pub run_idx: usize,
    pub epsilon: f64,
    pub lambda: f64,
    pub seed: u64,
}

pub fn run_seed(base_seed: u64, eps_idx: usize, lam_idx: usize, run_idx: usize) -> u64 {
    derive_seed(base_seed, &[eps_idx as u64, lam_idx as u64, run_idx as u64])
}

/// All runs of a grid, epsilon outermost, then lambda, then run index.
pub fn grid_slots(base_seed: u64, epsilons: &[f64], lambdas: &[f64], n_runs: usize) -> Vec<RunSlot> {
    let mut slots = Vec::with_capacity(epsilons.len() * lambdas.len() * n_runs);
    for (eps_idx, &epsilon) in epsilons.iter().enumerate() {
        for (lam_idx, &lambda) in lambdas.iter().enumerate() {
            for run_idx in 0..n_runs {
                slots.push(RunSlot {
                    run_id: slots.len(),
                    eps_idx,
                    lam_idx,
                    run_idx,
                    epsilon,
                    lambda,
                    seed: run_seed(base_seed, eps_idx, lam_idx, run_idx),
                });
            }
        }
    }
    slots
}

/// Order-preserving parallel map on a pool of `jobs` workers.
pub fn par_map<T, R, F>(jobs: usize, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    if jobs <= 1 {
        return items.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| items.par_iter().map(f).collect())
}

fn grids(config: &ExperimentConfig, experiment: Experiment) -> (Vec<f64>, Vec<f64>) {
    (config.epsilon_grid(experiment), config.lambda_grid(experiment))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiasHPoint {
    pub epsilon: f64,
    pub estimate: Estimate,
}

/// Mean entropy difference over `n_runs` fresh generators per epsilon.
pub fn run_bias_h(config: &ExperimentConfig, jobs: usize) -> Result<Vec<BiasHPoint>> {
    config.validate()?;
    let epsilons = config.epsilon_grid(Experiment::BiasH);
    let indexed: Vec<(usize, f64)> = epsilons.into_iter().enumerate().collect();
    par_map(jobs, &indexed, |&(i, epsilon)| {
        let mut rng = SeededRng::new(run_seed(config.base_seed, i, 0, 0));
        Ok(BiasHPoint {
            epsilon,
            estimate: monte_carlo_delta_h(config.k, epsilon, config.n_runs, &mut rng)?,
        })
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiasSPoint {
    pub lambda: f64,
    pub mean_ds: f64,
    pub mean_ds_ce: f64,
    /// Standard error across chain means.
    pub stderr_ds: f64,
    /// Total number of interventions.
    pub n: usize,
    pub case_counts: [usize; 4],
    pub scatter: Vec<BiasSample>,
}

impl BiasSPoint {
    pub fn case_ratios(&self) -> [f64; 4] {
        let total: usize = self.case_counts.iter().sum();
        self.case_counts.map(|c| c as f64 / total as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiasSSweep {
    pub epsilon: f64,
    pub points: Vec<BiasSPoint>,
}

/// `n_runs` independent intervention chains of `chain_length` steps per
/// lambda, at a single epsilon.
pub fn run_bias_s(config: &ExperimentConfig, jobs: usize) -> Result<BiasSSweep> {
    config.validate()?;
    let (epsilons, lambdas) = grids(config, Experiment::BiasS);
    let [epsilon] = epsilons[..] else {
        return Err(Error::Config("the shift sweep takes exactly one epsilon".into()));
    };
    let slots = grid_slots(config.base_seed, &[epsilon], &lambdas, config.n_runs);
    let chains = par_map(jobs, &slots, |slot| {
        let mut rng = SeededRng::new(slot.seed);
        monte_carlo_delta_s(
            config.k,
            slot.epsilon,
            slot.lambda,
            config.chain_length,
            config.scatter_cap,
            &mut rng,
        )
    })?;

    let mut points = Vec::with_capacity(lambdas.len());
    for (lam_idx, chunk) in chains.chunks(config.n_runs).enumerate() {
        let means: Vec<f64> = chunk.iter().map(|c| c.delta_s.mean).collect();
        let ce_means: Vec<f64> = chunk.iter().map(|c| c.delta_s_ce.mean).collect();
        let spread = Estimate::from_values(&means);
        let stderr_ds = if chunk.len() > 1 { spread.stderr } else { chunk[0].delta_s.stderr };
        let mut case_counts = [0usize; 4];
        let mut scatter = Vec::new();
        let mut kept = [0usize; 4];
        for chain in chunk {
            for (total, case) in case_counts.iter_mut().zip(&chain.per_case) {
                *total += case.count;
            }
            for sample in &chain.scatter {
                let idx = sample.case.expect("chain samples carry a case").index();
                if kept[idx] < config.scatter_cap {
                    kept[idx] += 1;
                    scatter.push(sample.clone());
                }
            }
        }
        points.push(BiasSPoint {
            lambda: lambdas[lam_idx],
            mean_ds: spread.mean,
            mean_ds_ce: Estimate::from_values(&ce_means).mean,
            stderr_ds,
            n: chunk.iter().map(|c| c.delta_s.n).sum(),
            case_counts,
            scatter,
        });
    }
    Ok(BiasSSweep { epsilon, points })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSweep {
    pub kind: ModelKind,
    pub runs: Vec<(RunSlot, RunRecord)>,
}

pub fn run_train(config: &ExperimentConfig, kind: ModelKind, jobs: usize) -> Result<TrainSweep> {
    config.validate()?;
    let (epsilons, lambdas) = grids(config, Experiment::Train);
    let slots = grid_slots(config.base_seed, &epsilons, &lambdas, config.n_runs);
    let records = par_map(jobs, &slots, |slot| {
        train_run(kind, &config.train_config(slot.epsilon, slot.lambda), slot.seed)
    })?;
    Ok(TrainSweep {
        kind,
        runs: slots.into_iter().zip(records).collect(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetaSweep {
    pub runs: Vec<(RunSlot, MetaRecord)>,
}

pub fn run_meta_sweep(config: &ExperimentConfig, jobs: usize) -> Result<MetaSweep> {
    config.validate()?;
    let (epsilons, lambdas) = grids(config, Experiment::Meta);
    let slots = grid_slots(config.base_seed, &epsilons, &lambdas, config.n_runs);
    let records = par_map(jobs, &slots, |slot| {
        run_meta(&config.meta_config(slot.epsilon, slot.lambda), slot.seed)
    })?;
    Ok(MetaSweep {
        runs: slots.into_iter().zip(records).collect(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoSweep {
    pub runs: Vec<(RunSlot, EncoRecord)>,
}

pub fn run_enco_sweep(config: &ExperimentConfig, jobs: usize) -> Result<EncoSweep> {
    config.validate()?;
    let (epsilons, lambdas) = grids(config, Experiment::Enco);
    let slots = grid_slots(config.base_seed, &epsilons, &lambdas, config.n_runs);
    let records = par_map(jobs, &slots, |slot| {
        run_enco(&config.enco_config(slot.epsilon, slot.lambda), slot.seed)
    })?;
    Ok(EncoSweep {
        runs: slots.into_iter().zip(records).collect(),
    })
}

/// Per grid point quartiles of one scalar per run, in grid order.
pub fn summarize<R>(
    runs: &[(RunSlot, R)],
    metric: impl Fn(&R) -> f64,
) -> Vec<(f64, f64, Quartiles)> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < runs.len() {
        let key = (runs[start].0.eps_idx, runs[start].0.lam_idx);
        let end = start
            + runs[start..]
                .iter()
                .take_while(|(s, _)| (s.eps_idx, s.lam_idx) == key)
                .count();
        let values: Vec<f64> = runs[start..end].iter().map(|(_, r)| metric(r)).collect();
        let slot = runs[start].0;
        out.push((
            slot.epsilon,
            slot.lambda,
            Quartiles::of(&values).expect("non-empty group"),
        ));
        start = end;
    }
    out
}
