//! Adaptive multiple-timescale recurrent networks for crossmodal grounding.
//!
//! The crate implements continuous-time recurrent networks whose units leak
//! towards their input at per-unit timescales, stacked into slow/fast
//! hierarchies, and wires several such encoders (one per sensory modality)
//! to a language-production decoder through a shared cell-assembly context.
//! Training is plain backpropagation through time with RMSprop, including
//! gradients through the timescales themselves when they are adaptive.
//!
//! Module map:
//! - [`numeric`]: matrices, RNG, softmax, PCA
//! - [`rnn`]: timescale parametrisation and the core recurrent step
//! - [`grounding`]: encoder/decoder networks and the coupled model
//! - [`data`]: dataset loading, labels, augmentation, synthetic generators
//! - [`training`]: loss, BPTT, RMSprop, gradient checking, the train loop
//! - [`analysis`]: accuracy, timescale statistics, latent projections

pub mod analysis;
pub mod data;
pub mod error;
pub mod grounding;
pub mod numeric;
pub mod rnn;
pub mod training;

pub use error::{Error, Result};
