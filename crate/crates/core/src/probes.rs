//! Measurements of the two biases on exact model parameters.
//!
//! Nothing here estimates from finite samples: every probe reads the
//! distributions straight out of a [`BivariateScm`].

use crate::error::{Error, Result};
use crate::info::{ce_shift, conditional_kl, entropy, kl, ProbVector};
use crate::sampling::SeededRng;
use crate::scm::{choose_target, BivariateScm, InterventionCase, Variable};

/// Tolerance used when checking `D_KL(P2'||P2) <= D_KL(P1'||P1)`.
pub const DPI_TOLERANCE: f64 = 1e-9;

/// Default cap on exported scatter points per case and lambda.
pub const SCATTER_CAP: usize = 2000;

/// Bias measurements for one intervention (or one observational model when
/// `case` is `None`).
#[derive(Clone, Debug, PartialEq)]
pub struct BiasSample {
    pub delta_h: f64,
    pub s1: f64,
    pub s2: f64,
    pub delta_s: f64,
    pub delta_s_ce: f64,
    /// Shift of `P(X1 | X2)`.
    pub s1_cond: f64,
    /// Shift of `P(X2 | X1)`.
    pub s2_cond: f64,
    pub case: Option<InterventionCase>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                stderr: f64::NAN,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr, n }
    }

    /// `|mean| > z * stderr`, with the sign of the mean.
    pub fn significant_sign(&self, z: f64) -> i8 {
        if self.mean > z * self.stderr {
            1
        } else if self.mean < -z * self.stderr {
            -1
        } else {
            0
        }
    }
}

/// `H(X1) - H(X2)` of the current marginals.
pub fn delta_entropy(scm: &BivariateScm) -> Result<f64> {
    let (p1, p2) = scm.current_marginals()?;
    Ok(entropy(&p1) - entropy(&p2))
}

/// `(D_KL(P1'||P1), D_KL(P2'||P2))`.
pub fn shift_pair(
    before: &(ProbVector, ProbVector),
    after: &(ProbVector, ProbVector),
) -> Result<(f64, f64)> {
    Ok((kl(&after.0, &before.0)?, kl(&after.1, &before.1)?))
}

/// Marginal entropies `(H(X1), H(X2))` of `n` fresh models.
pub fn entropy_pairs(k: usize, epsilon: f64, n: usize, rng: &mut SeededRng) -> Result<Vec<(f64, f64)>> {
    (0..n)
        .map(|_| {
            let scm = BivariateScm::new(k, epsilon, rng)?;
            let (p1, p2) = scm.current_marginals()?;
            Ok((entropy(&p1), entropy(&p2)))
        })
        .collect()
}

/// Mean and standard error of `Delta H` over `n` fresh models.
pub fn monte_carlo_delta_h(k: usize, epsilon: f64, n: usize, rng: &mut SeededRng) -> Result<Estimate> {
    if n == 0 {
        return Err(Error::invalid("need at least one model"));
    }
    let diffs: Vec<f64> = entropy_pairs(k, epsilon, n, rng)?
        .into_iter()
        .map(|(h1, h2)| h1 - h2)
        .collect();
    Ok(Estimate::from_values(&diffs))
}

/// Apply one intervention on `target` and measure every shift it caused.
pub fn measure_intervention(
    scm: &mut BivariateScm,
    target: Variable,
    rng: &mut SeededRng,
) -> Result<BiasSample> {
    let before = scm.current_marginals()?;
    let (fwd_before, rev_before) = scm.current_conditionals()?;
    let case = scm.intervene(target, rng)?;
    let after = scm.current_marginals()?;
    let (fwd_after, rev_after) = scm.current_conditionals()?;

    let (s1, s2) = shift_pair(&before, &after)?;
    let delta_s_ce = ce_shift(&after.0, &before.0)? - ce_shift(&after.1, &before.1)?;
    // conditional shifts weight by the new joint, i.e. the new parent marginal
    let s2_cond = conditional_kl(&after.0, &fwd_after, &fwd_before)?;
    let s1_cond = conditional_kl(&after.1, &rev_after, &rev_before)?;
    Ok(BiasSample {
        delta_h: entropy(&after.0) - entropy(&after.1),
        s1,
        s2,
        delta_s: s1 - s2,
        delta_s_ce,
        s1_cond,
        s2_cond,
        case: Some(case),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CaseSummary {
    pub count: usize,
    pub mean_s1: f64,
    pub mean_s2: f64,
}

#[derive(Clone, Debug)]
pub struct ShiftSummary {
    pub lambda: f64,
    pub delta_s: Estimate,
    pub delta_s_ce: Estimate,
    pub per_case: [CaseSummary; 4],
    /// At most `scatter_cap` samples per case, in chain order.
    pub scatter: Vec<BiasSample>,
}

impl ShiftSummary {
    pub fn case_ratios(&self) -> [f64; 4] {
        let total: usize = self.per_case.iter().map(|c| c.count).sum();
        self.per_case.map(|c| c.count as f64 / total as f64)
    }
}

/// Run an `n`-step continuous intervention chain on one fresh model, with
/// targets drawn i.i.d. from `lambda`, and summarise the shifts.
pub fn monte_carlo_delta_s(
    k: usize,
    epsilon: f64,
    lambda: f64,
    n_interventions: usize,
    scatter_cap: usize,
    rng: &mut SeededRng,
) -> Result<ShiftSummary> {
    if n_interventions == 0 {
        return Err(Error::invalid("need at least one intervention"));
    }
    let mut scm = BivariateScm::new(k, epsilon, rng)?;
    let mut ds = Vec::with_capacity(n_interventions);
    let mut ds_ce = Vec::with_capacity(n_interventions);
    let mut per_case = [CaseSummary::default(); 4];
    let mut scatter = Vec::new();
    for _ in 0..n_interventions {
        let target = choose_target(lambda, rng)?;
        let sample = measure_intervention(&mut scm, target, rng)?;
        let case = sample.case.expect("intervention samples carry a case");
        ds.push(sample.delta_s);
        ds_ce.push(sample.delta_s_ce);
        let slot = &mut per_case[case.index()];
        slot.count += 1;
        slot.mean_s1 += sample.s1;
        slot.mean_s2 += sample.s2;
        if slot.count <= scatter_cap {
            scatter.push(sample);
        }
    }
    for c in &mut per_case {
        if c.count > 0 {
            c.mean_s1 /= c.count as f64;
            c.mean_s2 /= c.count as f64;
        }
    }
    Ok(ShiftSummary {
        lambda,
        delta_s: Estimate::from_values(&ds),
        delta_s_ce: Estimate::from_values(&ds_ce),
        per_case,
        scatter,
    })
}

/// `(D_KL(P1'||P1), D_KL(P2'||P2))` for a Case-1 intervention on `scm`.
pub fn case1_shifts(scm: &mut BivariateScm, rng: &mut SeededRng) -> Result<(f64, f64)> {
    let before = scm.current_marginals()?;
    scm.intervene(Variable::X1, rng)?;
    let after = scm.current_marginals()?;
    shift_pair(&before, &after)
}

/// Count Case-1 interventions where the effect shifted more than the cause.
/// Each of the `n` trials uses a fresh model, so every intervention is Case 1.
pub fn verify_dpi(k: usize, epsilon: f64, n: usize, rng: &mut SeededRng) -> Result<usize> {
    let mut violations = 0;
    for _ in 0..n {
        let mut scm = BivariateScm::new(k, epsilon, rng)?;
        let (s1, s2) = case1_shifts(&mut scm, rng)?;
        if s2 > s1 + DPI_TOLERANCE {
            violations += 1;
        }
    }
    Ok(violations)
}

/// Empirical Case1..Case4 frequencies over an `n`-step chain.
pub fn case_ratios(k: usize, lambda: f64, n: usize, rng: &mut SeededRng) -> Result<[f64; 4]> {
    if n == 0 {
        return Err(Error::invalid("need at least one intervention"));
    }
    let mut scm = BivariateScm::new(k, 1.0, rng)?;
    let mut counts = [0usize; 4];
    for _ in 0..n {
        let target = choose_target(lambda, rng)?;
        counts[scm.intervene(target, rng)?.index()] += 1;
    }
    Ok(counts.map(|c| c as f64 / n as f64))
}

/// Steady-state case frequencies under i.i.d. targets.
pub fn stationary_case_ratios(lambda: f64) -> [f64; 4] {
    let mu = 1.0 - lambda;
    [mu * mu, lambda * mu, mu * lambda, lambda * lambda]
}
