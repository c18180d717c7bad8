//! Mapping network, its training loop, and the normal penalty.

mod mlp;
mod penalty;
mod scalar;
mod train;

pub use mlp::{from_flat, to_flat, Activation, ForwardCache, Mlp, DEFAULT_LAYERS};
pub use penalty::{normal_penalty, sampled_normal_penalty, PenaltyReport};
pub use scalar::Scalar;
pub use train::{loss_and_output_grad, mlp_train, Batch, LossKind, Optimizer, PairSet, TrainConfig, TrainReport, Trainer};
