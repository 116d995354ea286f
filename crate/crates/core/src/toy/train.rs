//! The per-run training loop for the illustrator models.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::SeededRng;
use crate::scm::{choose_target, BivariateScm, SamplePair};

use super::adam::AdamState;
use super::gate::{sample_gate_noise, GateParams, DEFAULT_TAU};
use super::model::{ModelKind, ToyModel};

/// Initial value of both structural logits.
pub const INITIAL_LOGIT: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Observational,
    Interventional,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Observational => "observational",
            Mode::Interventional => "interventional",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "observational" | "obs" => Ok(Mode::Observational),
            "interventional" | "int" => Ok(Mode::Interventional),
            other => Err(Error::invalid(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub k: usize,
    pub epsilon: f64,
    pub lambda: f64,
    pub mode: Mode,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub tau: f64,
    /// Batches between interventions; the first one lands on the first
    /// batch after the warmup.
    pub batches_per_intervention: usize,
    /// Observational batches before interventions start.
    pub warmup_batches: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 5,
            epsilon: 1.0,
            lambda: 0.0,
            mode: Mode::Observational,
            epochs: 300,
            batches_per_epoch: 32,
            batch_size: 128,
            lr: 0.1,
            tau: DEFAULT_TAU,
            batches_per_intervention: 32,
            warmup_batches: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::invalid(format!("k must be at least 2, got {}", self.k)));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::invalid(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        for (name, v) in [
            ("epochs", self.epochs),
            ("batches_per_epoch", self.batches_per_epoch),
            ("batch_size", self.batch_size),
            ("batches_per_intervention", self.batches_per_intervention),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be at least 1")));
            }
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::invalid(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::invalid(format!("tau must be positive, got {}", self.tau)));
        }
        Ok(())
    }

    /// Whether an intervention is applied right before global batch `t`.
    pub fn intervenes_at(&self, t: usize) -> bool {
        self.mode == Mode::Interventional
            && t >= self.warmup_batches
            && (t - self.warmup_batches).is_multiple_of(self.batches_per_intervention)
    }
}

/// Model, gate and optimizer state of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trainer {
    pub model: ToyModel,
    pub gate: GateParams,
    model_opt: AdamState,
    gate_opt: AdamState,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub loss: f64,
    pub c: [f64; 2],
}

impl Trainer {
    pub fn new(model: ToyModel, gate: GateParams, lr: f64) -> Self {
        let n = model.params().len();
        Self {
            model,
            gate,
            model_opt: AdamState::new(n, lr),
            gate_opt: AdamState::new(2, lr),
        }
    }

    /// One Adam step on a batch with the given gate noise. Reports the loss
    /// and gate values before the update.
    pub fn step(&mut self, batch: &[SamplePair], noise: [f64; 2]) -> Result<StepOutcome> {
        let g = self.model.gradients(&self.gate, noise, batch)?;
        self.model_opt.step(self.model.params_mut(), &g.params)?;
        self.gate_opt.step(&mut self.gate.z, &g.z)?;
        if !g.loss.is_finite() {
            return Err(Error::invalid("non-finite training loss"));
        }
        Ok(StepOutcome { loss: g.loss, c: g.c })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub kind: ModelKind,
    pub config: TrainConfig,
    pub seed: u64,
    /// Mean `c1` over the batches of each epoch.
    pub c1_trajectory: Vec<f64>,
    pub final_c1: f64,
}

/// Train one model on one freshly sampled generator.
///
/// Sub-streams of `seed`: 0 generator and interventions, 1 data, 2 gate
/// noise, 3 parameter initialization.
pub fn train_run(kind: ModelKind, config: &TrainConfig, seed: u64) -> Result<RunRecord> {
    config.validate()?;
    let root = SeededRng::new(seed);
    let mut scm_rng = root.substream(0);
    let mut data_rng = root.substream(1);
    let mut noise_rng = root.substream(2);
    let mut init_rng = root.substream(3);

    let mut scm = BivariateScm::new(config.k, config.epsilon, &mut scm_rng)?;
    let model = ToyModel::init(kind, config.k, &mut init_rng);
    let gate = GateParams::new(INITIAL_LOGIT, INITIAL_LOGIT, config.tau)?;
    let mut trainer = Trainer::new(model, gate, config.lr);

    let mut trajectory = Vec::with_capacity(config.epochs);
    let mut t = 0;
    for _ in 0..config.epochs {
        let mut c1_sum = 0.0;
        for _ in 0..config.batches_per_epoch {
            if config.intervenes_at(t) {
                let target = choose_target(config.lambda, &mut scm_rng)?;
                scm.intervene(target, &mut scm_rng)?;
            }
            let batch = scm.sample_batch(config.batch_size, &mut data_rng)?;
            let noise = sample_gate_noise(&mut noise_rng);
            c1_sum += trainer.step(&batch, noise)?.c[0];
            t += 1;
        }
        trajectory.push(c1_sum / config.batches_per_epoch as f64);
    }
    let final_c1 = *trajectory.last().expect("epochs >= 1");
    Ok(RunRecord {
        kind,
        config: config.clone(),
        seed,
        c1_trajectory: trajectory,
        final_c1,
    })
}
