//! Losses, exact backpropagation through time, RMSprop, finite-difference
//! gradient verification, and the training/evaluation protocols.

pub mod bptt;
pub mod gradcheck;
pub mod grads;
pub mod loss;
pub mod rmsprop;
pub mod trainer;

pub use bptt::bptt_gradients;
pub use gradcheck::{grad_check, grad_check_against, ArrayCheck, GradCheckReport};
pub use grads::{param_count, GradientSet, LayerGrads, MtrnnGrads};
pub use loss::{loss, CE_PROB_FLOOR};
pub use rmsprop::{clip_global_norm, rmsprop_update, RmspropState};
pub use trainer::{
    batch_gradients, cross_validate, train_model, CrossValidation, EpochStats, StopReason,
    TrainConfig, TrainHistory,
};
