//! Illustrator models with a Gumbel-Softmax structural gate.

pub mod adam;
pub mod gate;
pub mod model;
pub mod train;

pub use adam::AdamState;
pub use gate::{gumbel_softmax_gate, GateParams};
pub use model::{batch_loss, Gradients, ModelKind, ToyModel};
pub use train::{train_run, Mode, RunRecord, TrainConfig, Trainer};
