//! Bias-corrected Adam with fixed hyperparameters.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                expected: self.m.len(),
                actual: if params.len() != self.m.len() { params.len() } else { grads.len() },
            });
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut adam = AdamState::new(1, 0.1);
        let mut p = [2.0];
        adam.step(&mut p, &[1.0]).unwrap();
        // m_hat = v_hat = 1  =>  step = 0.1 / (1 + 1e-8)
        assert!((p[0] - (2.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-15);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut adam = AdamState::new(3, 0.1);
        let mut p = [1.0, -2.0, 0.5];
        adam.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, [1.0, -2.0, 0.5]);
    }

    #[test]
    fn pure_function_of_inputs() {
        let mut a = AdamState::new(2, 0.1);
        let mut pa = [0.3, 0.4];
        a.step(&mut pa, &[0.2, -0.7]).unwrap();
        let mut b = a.clone();
        let mut pb = pa;
        a.step(&mut pa, &[1.5, 0.1]).unwrap();
        b.step(&mut pb, &[1.5, 0.1]).unwrap();
        assert_eq!(a, b);
        assert_eq!(pa, pb);
    }

    #[test]
    fn shape_mismatch() {
        let mut a = AdamState::new(2, 0.1);
        assert!(a.step(&mut [0.0], &[0.0]).is_err());
    }
}
