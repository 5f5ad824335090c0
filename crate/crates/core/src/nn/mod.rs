//! Minimal fully-connected network engine.

pub mod checkpoint;
pub mod network;
pub mod optim;
pub mod schedule;
pub mod spec;

pub use network::{weighted_cross_entropy, ForwardOutput, LayerParams, MlpParams, Mode, Network};
pub use optim::{Adam, Optimizer, OptimizerKind, Sgd};
pub use schedule::{early_stop_check, PlateauScheduler};
pub use spec::{LayerSpec, MlpSpec};
