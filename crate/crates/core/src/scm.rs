//! The bivariate categorical structural causal model `X1 -> X2`.
//!
//! `P(X1)` is drawn from `Dirichlet(1_K)` and every row of `P(X2 | X1)` from
//! `Dirichlet(1/(eps K) 1_K)`; `eps = 1` is the BDe prior. The mechanism is
//! sampled once and never touched again. Soft interventions either replace
//! `P(X1)` (which also releases any fix on `X2`) or pin `X2` to a fresh
//! independent distribution.

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::fmt::g17;
use crate::info::{marginalize, ConditionalTable, ProbVector};
use crate::sampling::{sample_categorical, sample_dirichlet, DirichletParams, SeededRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variable {
    X1,
    X2,
}

impl Variable {
    pub fn other(self) -> Self {
        match self {
            Variable::X1 => Variable::X2,
            Variable::X2 => Variable::X1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DependencyState {
    /// `X2` is sampled ancestrally through the mechanism.
    Related,
    /// `X2` is pinned to its own distribution, independent of `X1`.
    IndependentX2,
}

/// Intervention target crossed with the state it was applied in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InterventionCase {
    Case1,
    Case2,
    Case3,
    Case4,
}

impl InterventionCase {
    pub const ALL: [InterventionCase; 4] = [
        InterventionCase::Case1,
        InterventionCase::Case2,
        InterventionCase::Case3,
        InterventionCase::Case4,
    ];

    pub fn classify(target: Variable, prior: DependencyState) -> Self {
        match (target, prior) {
            (Variable::X1, DependencyState::Related) => InterventionCase::Case1,
            (Variable::X1, DependencyState::IndependentX2) => InterventionCase::Case2,
            (Variable::X2, DependencyState::Related) => InterventionCase::Case3,
            (Variable::X2, DependencyState::IndependentX2) => InterventionCase::Case4,
        }
    }

    /// Zero-based position, `Case1 -> 0`.
    pub fn index(self) -> usize {
        self as usize
    }

    /// One-based label used in CSV output.
    pub fn number(self) -> usize {
        self.index() + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SamplePair {
    pub x1: usize,
    pub x2: usize,
}

impl SamplePair {
    pub fn new(x1: usize, x2: usize) -> Self {
        Self { x1, x2 }
    }

    /// The same sample with the variable labels exchanged.
    pub fn swapped(self) -> Self {
        Self {
            x1: self.x2,
            x2: self.x1,
        }
    }
}

/// Draws `X2` with probability `lambda`, else `X1`.
pub fn choose_target(lambda: f64, rng: &mut SeededRng) -> Result<Variable> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    Ok(if rng.uniform() < lambda {
        Variable::X2
    } else {
        Variable::X1
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BivariateScm {
    k: usize,
    epsilon: f64,
    p1: ProbVector,
    cond: ConditionalTable,
    fixed_p2: Option<ProbVector>,
    seed: Option<u64>,
}

impl BivariateScm {
    /// Sample a fresh model in the `Related` state.
    pub fn new(k: usize, epsilon: f64, rng: &mut SeededRng) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid(format!("k must be at least 2, got {k}")));
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        let seed = rng.seed();
        let p1 = sample_dirichlet(&Self::marginal_prior(k)?, rng)?;
        let mech = Self::mechanism_prior(k, epsilon)?;
        let rows = (0..k)
            .map(|_| sample_dirichlet(&mech, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            k,
            epsilon,
            p1,
            cond: ConditionalTable::new(rows)?,
            fixed_p2: None,
            seed: Some(seed),
        })
    }

    /// Assemble a model from explicit parts.
    pub fn from_parts(
        epsilon: f64,
        p1: ProbVector,
        cond: ConditionalTable,
        fixed_p2: Option<ProbVector>,
    ) -> Result<Self> {
        let k = p1.k();
        if k < 2 {
            return Err(Error::invalid(format!("k must be at least 2, got {k}")));
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        if cond.k() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: cond.k(),
            });
        }
        if let Some(p2) = &fixed_p2 {
            if p2.k() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    actual: p2.k(),
                });
            }
        }
        Ok(Self {
            k,
            epsilon,
            p1,
            cond,
            fixed_p2,
            seed: None,
        })
    }

    /// `Dirichlet(1_K)`, shared by `X1` and by interventions on either variable.
    pub fn marginal_prior(k: usize) -> Result<DirichletParams> {
        DirichletParams::symmetric(k, 1.0)
    }

    /// `Dirichlet(1/(eps K) 1_K)` for each mechanism row.
    pub fn mechanism_prior(k: usize, epsilon: f64) -> Result<DirichletParams> {
        DirichletParams::symmetric(k, 1.0 / (epsilon * k as f64))
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn p1(&self) -> &ProbVector {
        &self.p1
    }

    /// The mechanism `P(X2 | X1)` sampled at construction.
    pub fn mechanism(&self) -> &ConditionalTable {
        &self.cond
    }

    pub fn fixed_p2(&self) -> Option<&ProbVector> {
        self.fixed_p2.as_ref()
    }

    pub fn state(&self) -> DependencyState {
        if self.fixed_p2.is_some() {
            DependencyState::IndependentX2
        } else {
            DependencyState::Related
        }
    }

    /// Apply a soft intervention and report which case it was.
    pub fn intervene(&mut self, target: Variable, rng: &mut SeededRng) -> Result<InterventionCase> {
        let case = InterventionCase::classify(target, self.state());
        let prior = Self::marginal_prior(self.k)?;
        match target {
            Variable::X1 => {
                self.p1 = sample_dirichlet(&prior, rng)?;
                self.fixed_p2 = None;
            }
            Variable::X2 => {
                self.fixed_p2 = Some(sample_dirichlet(&prior, rng)?);
            }
        }
        Ok(case)
    }

    /// `(P(X1), P(X2))` in the current state.
    pub fn current_marginals(&self) -> Result<(ProbVector, ProbVector)> {
        let p2 = match &self.fixed_p2 {
            Some(p2) => p2.clone(),
            None => marginalize(&self.p1, &self.cond)?,
        };
        Ok((self.p1.clone(), p2))
    }

    /// `(P(X2 | X1), P(X1 | X2))` in the current state.
    ///
    /// The reverse table is obtained by Bayes' rule on the joint. A column of
    /// the joint with zero mass carries no information about `X1`, so its
    /// reverse row falls back to `P(X1)`.
    pub fn current_conditionals(&self) -> Result<(ConditionalTable, ConditionalTable)> {
        if let Some(p2) = &self.fixed_p2 {
            return Ok((ConditionalTable::constant(p2), ConditionalTable::constant(&self.p1)));
        }
        let k = self.k;
        let mut rows = Vec::with_capacity(k);
        for b in 0..k {
            let col: Vec<f64> = (0..k).map(|a| self.p1[a] * self.cond.get(a, b)).collect();
            let total: f64 = col.iter().sum();
            if total > 0.0 {
                rows.push(ProbVector::from_weights(col)?);
            } else {
                rows.push(self.p1.clone());
            }
        }
        Ok((self.cond.clone(), ConditionalTable::new(rows)?))
    }

    /// Joint `P(x1, x2)` as a row-major `K x K` matrix (row = `x1`).
    pub fn joint(&self) -> Vec<f64> {
        let k = self.k;
        let mut out = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..k {
                let p2 = match &self.fixed_p2 {
                    Some(p2) => p2[b],
                    None => self.cond.get(a, b),
                };
                out[a * k + b] = self.p1[a] * p2;
            }
        }
        out
    }

    pub fn sample_pair(&self, rng: &mut SeededRng) -> SamplePair {
        let x1 = sample_categorical(&self.p1, rng);
        let x2 = match &self.fixed_p2 {
            Some(p2) => sample_categorical(p2, rng),
            None => sample_categorical(self.cond.row(x1), rng),
        };
        SamplePair { x1, x2 }
    }

    pub fn sample_batch(&self, b: usize, rng: &mut SeededRng) -> Result<Vec<SamplePair>> {
        if b == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        Ok((0..b).map(|_| self.sample_pair(rng)).collect())
    }

    /// Human-readable snapshot with fixed field order and 17 significant
    /// digits for every probability.
    pub fn to_snapshot(&self) -> String {
        fn vec_text(p: &ProbVector) -> String {
            let items: Vec<String> = p.as_slice().iter().map(|&x| g17(x)).collect();
            format!("[{}]", items.join(", "))
        }
        let state = match self.state() {
            DependencyState::Related => "related",
            DependencyState::IndependentX2 => "independent_x2",
        };
        let seed = self.seed.map_or_else(|| "null".to_string(), |s| s.to_string());
        let cond_rows: Vec<String> = self
            .cond
            .rows()
            .iter()
            .map(|r| format!("    {}", vec_text(r)))
            .collect();
        let fixed = self.fixed_p2.as_ref().map_or_else(|| "null".to_string(), vec_text);
        format!(
            "{{\n  \"k\": {},\n  \"epsilon\": {},\n  \"seed\": {},\n  \"state\": \"{}\",\n  \"p1\": {},\n  \"cond\": [\n{}\n  ],\n  \"fixed_p2\": {}\n}}\n",
            self.k,
            g17(self.epsilon),
            seed,
            state,
            vec_text(&self.p1),
            cond_rows.join(",\n"),
            fixed
        )
    }

    pub fn from_snapshot(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Doc {
            k: usize,
            epsilon: f64,
            seed: Option<u64>,
            state: String,
            p1: ProbVector,
            cond: ConditionalTable,
            fixed_p2: Option<ProbVector>,
        }
        let doc: Doc = serde_json::from_str(text).map_err(|e| Error::Snapshot(e.to_string()))?;
        let expect_fixed = match doc.state.as_str() {
            "related" => false,
            "independent_x2" => true,
            other => return Err(Error::Snapshot(format!("unknown state {other:?}"))),
        };
        if expect_fixed != doc.fixed_p2.is_some() {
            return Err(Error::Snapshot(
                "state and fixed_p2 disagree".to_string(),
            ));
        }
        if doc.k != doc.p1.k() {
            return Err(Error::DimensionMismatch {
                expected: doc.k,
                actual: doc.p1.k(),
            });
        }
        let mut scm = Self::from_parts(doc.epsilon, doc.p1, doc.cond, doc.fixed_p2)?;
        scm.seed = doc.seed;
        Ok(scm)
    }
}
