//! Seeded sampling primitives.
//!
//! Every stochastic draw in the crate goes through [`SeededRng`], a ChaCha8
//! stream keyed by a 64-bit seed. Sub-streams are selected with ChaCha's
//! stream counter, so a run can hand out independent generators for data,
//! gate noise and initialization without the order of use mattering.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::info::ProbVector;

/// Uniform draws are clamped into `[UNIFORM_CLAMP, 1 - UNIFORM_CLAMP]`
/// before any log transform.
pub const UNIFORM_CLAMP: f64 = 1e-12;

/// Deterministic generator owned by a single run.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream `index` under the same seed. Stream 0 is the
    /// base generator, so sub-streams start at 1.
    pub fn substream(&self, index: u64) -> SeededRng {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(index.wrapping_add(1));
        SeededRng {
            seed: self.seed,
            inner,
        }
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform on the open interval, clamped away from 0 and 1.
    pub fn uniform_open(&mut self) -> f64 {
        self.uniform().clamp(UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Stable seed for a run identified by `parts` (e.g. grid indices and run
/// index) under `base`. Pure integer mixing, identical on every platform.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Concentration vector of a Dirichlet distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct DirichletParams {
    alpha: Vec<f64>,
}

impl DirichletParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(Error::invalid(format!(
                "dirichlet needs at least 2 components, got {}",
                alpha.len()
            )));
        }
        if let Some(a) = alpha.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::invalid(format!(
                "dirichlet concentration must be positive and finite, got {a}"
            )));
        }
        Ok(Self { alpha })
    }

    /// `alpha * 1_K`.
    pub fn symmetric(k: usize, alpha: f64) -> Result<Self> {
        Self::new(vec![alpha; k])
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn k(&self) -> usize {
        self.alpha.len()
    }
}

/// Natural log of a Gamma(shape, 1) draw.
///
/// Shapes below one use the boost `G(a) = G(a + 1) * U^(1/a)`, carried out
/// in log space so that tiny shapes do not underflow to zero.
pub fn sample_log_gamma(shape: f64, rng: &mut SeededRng) -> Result<f64> {
    if !(shape.is_finite() && shape > 0.0) {
        return Err(Error::invalid(format!(
            "gamma shape must be positive, got {shape}"
        )));
    }
    if shape < 1.0 {
        let boosted = marsaglia_tsang(shape + 1.0, rng);
        let u = rng.uniform_open();
        return Ok(boosted.ln() + u.ln() / shape);
    }
    Ok(marsaglia_tsang(shape, rng).ln())
}

pub fn sample_gamma(shape: f64, rng: &mut SeededRng) -> Result<f64> {
    sample_log_gamma(shape, rng).map(f64::exp)
}

// Marsaglia & Tsang (2000) squeeze method, valid for shape >= 1.
fn marsaglia_tsang(shape: f64, rng: &mut SeededRng) -> f64 {
    debug_assert!(shape >= 1.0);
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = rng.standard_normal();
        let t = 1.0 + c * x;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u = rng.uniform_open();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 {
            return d * v;
        }
        if u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// Draw from `Dirichlet(alpha)` by normalising independent Gamma draws.
pub fn sample_dirichlet(params: &DirichletParams, rng: &mut SeededRng) -> Result<ProbVector> {
    let logs = params
        .alpha
        .iter()
        .map(|&a| sample_log_gamma(a, rng))
        .collect::<Result<Vec<_>>>()?;
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    ProbVector::new(weights.into_iter().map(|w| w / total).collect())
}

/// Inverse-CDF draw of a category index.
pub fn sample_categorical(p: &ProbVector, rng: &mut SeededRng) -> usize {
    let u = rng.uniform();
    let probs = p.as_slice();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &pi) in probs.iter().enumerate() {
        if pi > 0.0 {
            last_positive = i;
        }
        acc += pi;
        if u < acc {
            return i;
        }
    }
    // rounding left `acc` marginally below one
    last_positive
}

/// Standard Gumbel(0, 1) draw, `-ln(-ln U)`.
pub fn sample_gumbel(rng: &mut SeededRng) -> f64 {
    gumbel_from_uniform(rng.uniform_open())
}

pub fn gumbel_from_uniform(u: f64) -> f64 {
    let u = u.clamp(UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP);
    -(-u.ln()).ln()
}
