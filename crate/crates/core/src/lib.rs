//! Simulator, learners and probes for studying how two distributional
//! biases steer gradient-based causal direction learning on bivariate
//! categorical data.
//!
//! * [`sampling`]: seeded Gamma / Dirichlet / categorical / Gumbel draws.
//! * [`info`]: entropy, KL and friends over categorical distributions.
//! * [`scm`]: the `X1 -> X2` generator with soft interventions.
//! * [`probes`]: marginal entropy asymmetry and shift asymmetry measurements.
//! * [`toy`]: the marginal and conditional illustrator models and their trainer.
//! * [`meta`]: bivariate meta-transfer baseline.
//! * [`enco`]: bivariate ENCO baseline.
//! * [`sweep`]: configuration, seeded sweeps and CSV output.
//! * [`verify`]: the self-check suite run by the command-line verifier.

pub mod enco;
pub mod error;
pub mod fmt;
pub mod info;
pub mod meta;
pub mod probes;
pub mod sampling;
pub mod scm;
pub mod sweep;
pub mod toy;
pub mod verify;

pub use error::{Error, Result};
