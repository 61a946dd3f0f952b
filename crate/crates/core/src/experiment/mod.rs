//! Training and sweep drivers.

pub mod mlp;
pub mod sweep;
pub mod train;
pub mod verify;

pub use mlp::{Activation, Mlp};
pub use sweep::{run_compile_sweep, CompileSweep, SweepConfig, SweepTarget};
pub use train::{run_training_experiment, train_mlp, ExperimentConfig, ExperimentResult, TrainConfig};
pub use verify::{verify_gadgets, GadgetCheck};
