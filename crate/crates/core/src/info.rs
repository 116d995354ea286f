//! Categorical distributions and the information measures defined on them.
//!
//! All logarithms are natural (nats). `0 log 0` is taken as zero and
//! denominators are floored at [`PROB_FLOOR`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalisation tolerance for [`ProbVector`].
pub const SUM_TOLERANCE: f64 = 1e-12;

/// Floor applied to the reference distribution inside KL terms.
pub const PROB_FLOOR: f64 = 1e-12;

/// A categorical distribution over `K` categories.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidDistribution("empty vector".into()));
        }
        if let Some(x) = p.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::InvalidDistribution(format!(
                "entry {x} outside [0, 1]"
            )));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {sum}"
            )));
        }
        Ok(Self(p))
    }

    /// Normalise a non-negative weight vector.
    pub fn from_weights(w: Vec<f64>) -> Result<Self> {
        let total: f64 = w.iter().sum();
        if !(total.is_finite() && total > 0.0) || w.iter().any(|x| *x < 0.0) {
            return Err(Error::InvalidDistribution(
                "weights must be non-negative with a positive sum".into(),
            ));
        }
        Self::new(w.into_iter().map(|x| x / total).collect())
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn one_hot(k: usize, index: usize) -> Result<Self> {
        if index >= k {
            return Err(Error::IndexOutOfRange { index, k });
        }
        let mut p = vec![0.0; k];
        p[index] = 1.0;
        Ok(Self(p))
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(p: ProbVector) -> Self {
        p.0
    }
}

impl std::ops::Index<usize> for ProbVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// `K` rows, row `a` holding the distribution of the child given parent `a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ProbVector>", into = "Vec<ProbVector>")]
pub struct ConditionalTable {
    rows: Vec<ProbVector>,
}

impl ConditionalTable {
    pub fn new(rows: Vec<ProbVector>) -> Result<Self> {
        let k = rows.len();
        if k == 0 {
            return Err(Error::InvalidDistribution("empty table".into()));
        }
        for row in &rows {
            if row.k() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    actual: row.k(),
                });
            }
        }
        Ok(Self { rows })
    }

    /// Every row equal to `row`.
    pub fn constant(row: &ProbVector) -> Self {
        Self {
            rows: vec![row.clone(); row.k()],
        }
    }

    pub fn identity(k: usize) -> Self {
        Self {
            rows: (0..k)
                .map(|i| ProbVector::one_hot(k, i).expect("index in range"))
                .collect(),
        }
    }

    pub fn k(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, parent: usize) -> &ProbVector {
        &self.rows[parent]
    }

    pub fn rows(&self) -> &[ProbVector] {
        &self.rows
    }

    pub fn get(&self, parent: usize, child: usize) -> f64 {
        self.rows[parent][child]
    }
}

impl TryFrom<Vec<ProbVector>> for ConditionalTable {
    type Error = Error;

    fn try_from(rows: Vec<ProbVector>) -> Result<Self> {
        Self::new(rows)
    }
}

impl From<ConditionalTable> for Vec<ProbVector> {
    fn from(t: ConditionalTable) -> Self {
        t.rows
    }
}

fn check_dims(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// `-p ln p` with `0 ln 0 = 0`.
fn neg_plogp(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.ln()
    } else {
        0.0
    }
}

/// `p ln(p / q)` with the floor on `q`. Identical entries contribute exactly
/// zero so that unchanged distributions have exactly zero divergence.
fn kl_term(p: f64, q: f64) -> f64 {
    if p <= 0.0 || p == q {
        0.0
    } else {
        p * (p / q.max(PROB_FLOOR)).ln()
    }
}

/// Shannon entropy in nats.
pub fn entropy(p: &ProbVector) -> f64 {
    p.as_slice().iter().map(|&x| neg_plogp(x)).sum()
}

/// `H(child | parent) = -sum_a w(a) sum_b T[a][b] ln T[a][b]`.
pub fn conditional_entropy(parent: &ProbVector, cond: &ConditionalTable) -> Result<f64> {
    check_dims(parent.k(), cond.k())?;
    Ok(parent
        .as_slice()
        .iter()
        .zip(cond.rows())
        .map(|(w, row)| w * entropy(row))
        .sum())
}

/// `D_KL(p_new || p_old)`.
///
/// Entries of `p_old` are floored at [`PROB_FLOOR`]; a support violation is
/// therefore reported as a large finite divergence rather than an error.
pub fn kl(p_new: &ProbVector, p_old: &ProbVector) -> Result<f64> {
    check_dims(p_old.k(), p_new.k())?;
    Ok(p_new
        .as_slice()
        .iter()
        .zip(p_old.as_slice())
        .map(|(&p, &q)| kl_term(p, q))
        .sum())
}

/// Conditional KL weighted by the new joint:
/// `sum_a w_new(a) sum_b T_new[a][b] ln(T_new[a][b] / T_old[a][b])`.
pub fn conditional_kl(
    parent_new: &ProbVector,
    table_new: &ConditionalTable,
    table_old: &ConditionalTable,
) -> Result<f64> {
    check_dims(parent_new.k(), table_new.k())?;
    check_dims(table_new.k(), table_old.k())?;
    let mut total = 0.0;
    for (a, &w) in parent_new.as_slice().iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        total += w * kl(table_new.row(a), table_old.row(a))?;
    }
    Ok(total)
}

/// Child marginal `P(child)[b] = sum_a cond[a][b] p(a)`.
pub fn marginalize(parent: &ProbVector, cond: &ConditionalTable) -> Result<ProbVector> {
    check_dims(parent.k(), cond.k())?;
    let k = cond.k();
    let mut out = vec![0.0; k];
    for (row, &w) in cond.rows().iter().zip(parent.as_slice()) {
        for (o, &c) in out.iter_mut().zip(row.as_slice()) {
            *o += w * c;
        }
    }
    // clean up rounding so the result validates
    let total: f64 = out.iter().sum();
    for o in &mut out {
        *o = (*o / total).clamp(0.0, 1.0);
    }
    ProbVector::new(out)
}

/// Per-variable cross-entropy shift term, `H(p_new) + D_KL(p_new || p_old)`.
pub fn ce_shift(p_new: &ProbVector, p_old: &ProbVector) -> Result<f64> {
    Ok(entropy(p_new) + kl(p_new, p_old)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn validation() {
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbVector::new(vec![]).is_err());
        assert!(ProbVector::one_hot(3, 3).is_err());
        assert!(ConditionalTable::new(vec![pv(&[0.5, 0.5]), pv(&[1.0, 0.0, 0.0])]).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert!((entropy(&ProbVector::uniform(5)) - 5f64.ln()).abs() < 1e-12);
        assert_eq!(entropy(&ProbVector::one_hot(4, 2).unwrap()), 0.0);
        assert!((entropy(&pv(&[0.2, 0.3, 0.5])) - 1.029_653_014_064_573_5).abs() < 1e-12);
    }

    #[test]
    fn conditional_entropy_examples() {
        let w = ProbVector::uniform(4);
        assert_eq!(conditional_entropy(&w, &ConditionalTable::identity(4)).unwrap(), 0.0);
        let uni = ConditionalTable::constant(&ProbVector::uniform(4));
        assert!((conditional_entropy(&w, &uni).unwrap() - 4f64.ln()).abs() < 1e-12);
        let t = ConditionalTable::new(vec![pv(&[0.8, 0.2]), pv(&[0.2, 0.8])]).unwrap();
        let h = conditional_entropy(&pv(&[0.5, 0.5]), &t).unwrap();
        assert!((h - 0.500_402_423_538_187_9).abs() < 1e-12);
        assert!(conditional_entropy(&ProbVector::uniform(3), &t).is_err());
    }

    #[test]
    fn kl_examples() {
        let p = pv(&[0.1, 0.2, 0.7]);
        assert_eq!(kl(&p, &p).unwrap(), 0.0);
        let v = kl(&ProbVector::one_hot(5, 1).unwrap(), &ProbVector::uniform(5)).unwrap();
        assert!((v - 5f64.ln()).abs() < 1e-12);
        let v = kl(&pv(&[0.5, 0.5]), &pv(&[0.9, 0.1])).unwrap();
        assert!((v - 0.510_825_623_765_990_7).abs() < 1e-12);
    }

    #[test]
    fn kl_support_violation_is_finite() {
        let v = kl(&pv(&[0.5, 0.5]), &pv(&[1.0, 0.0])).unwrap();
        assert!(v.is_finite() && v > 10.0);
    }

    #[test]
    fn conditional_kl_examples() {
        let t = ConditionalTable::new(vec![pv(&[0.8, 0.2]), pv(&[0.3, 0.7])]).unwrap();
        assert_eq!(conditional_kl(&pv(&[0.4, 0.6]), &t, &t).unwrap(), 0.0);
        let uni = ConditionalTable::constant(&ProbVector::uniform(2));
        let v = conditional_kl(&ProbVector::uniform(2), &ConditionalTable::identity(2), &uni).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn marginalize_examples() {
        let t = ConditionalTable::new(vec![pv(&[0.8, 0.2]), pv(&[0.2, 0.8])]).unwrap();
        assert_eq!(marginalize(&ProbVector::one_hot(2, 1).unwrap(), &t).unwrap(), *t.row(1));
        let m = marginalize(&pv(&[0.5, 0.5]), &t).unwrap();
        assert!((m[0] - 0.5).abs() < 1e-15 && (m[1] - 0.5).abs() < 1e-15);
        let q = pv(&[0.1, 0.9]);
        let m = marginalize(&pv(&[0.3, 0.7]), &ConditionalTable::constant(&q)).unwrap();
        assert!((m[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn ce_shift_examples() {
        let p = pv(&[0.25, 0.75]);
        assert_eq!(ce_shift(&p, &p).unwrap(), entropy(&p));
        let v = ce_shift(&ProbVector::one_hot(3, 0).unwrap(), &ProbVector::uniform(3)).unwrap();
        assert!((v - 3f64.ln()).abs() < 1e-12);
        let v = ce_shift(&pv(&[0.5, 0.5]), &pv(&[0.9, 0.1])).unwrap();
        assert!((v - 1.203_972_804_325_936).abs() < 1e-12);
    }

    #[test]
    fn serde_round_trip_validates() {
        let p = pv(&[0.25, 0.75]);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<ProbVector>(&s).unwrap(), p);
        assert!(serde_json::from_str::<ProbVector>("[0.5, 0.6]").is_err());
    }
}
