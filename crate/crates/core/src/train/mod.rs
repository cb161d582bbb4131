//! Objective, optimizers, the mini-batch training loop and evaluation.

mod fit;
mod loss;
mod metrics;
mod optim;

pub use fit::{evaluate, predict, train, EpochStats, TrainConfig, TrainReport};
pub use loss::{cross_entropy_loss, softmax_cross_entropy};
pub use metrics::{argmax, compare, compare_fdrs, CompareRow, Comparison, EvalReport, Winner};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
