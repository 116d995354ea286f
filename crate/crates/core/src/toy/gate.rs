//! Gumbel-Softmax structural gate over two logits.

use crate::error::{Error, Result};
use crate::sampling::{sample_gumbel, SeededRng};

pub const DEFAULT_TAU: f64 = 2.0;

/// Structural logits `z1, z2` and the gate temperature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateParams {
    pub z: [f64; 2],
    pub tau: f64,
}

impl GateParams {
    pub fn new(z1: f64, z2: f64, tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::invalid(format!("tau must be positive, got {tau}")));
        }
        Ok(Self { z: [z1, z2], tau })
    }

    /// Soft gate `softmax((z + g) / tau)` for a fixed noise pair.
    pub fn gate(&self, noise: [f64; 2]) -> [f64; 2] {
        softmax2(
            (self.z[0] + noise[0]) / self.tau,
            (self.z[1] + noise[1]) / self.tau,
        )
    }

    /// The gate with the variable roles exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            z: [self.z[1], self.z[0]],
            tau: self.tau,
        }
    }
}

/// Two-way softmax with max subtraction. Symmetric under swapping the
/// arguments, bit for bit.
pub fn softmax2(a: f64, b: f64) -> [f64; 2] {
    let m = a.max(b);
    let ea = (a - m).exp();
    let eb = (b - m).exp();
    let total = ea + eb;
    [ea / total, eb / total]
}

pub fn sample_gate_noise(rng: &mut SeededRng) -> [f64; 2] {
    let g1 = sample_gumbel(rng);
    let g2 = sample_gumbel(rng);
    [g1, g2]
}

/// Draw fresh Gumbel noise and return `(c1, c2)`.
pub fn gumbel_softmax_gate(params: &GateParams, rng: &mut SeededRng) -> [f64; 2] {
    params.gate(sample_gate_noise(rng))
}
