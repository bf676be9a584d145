//! The crossmodal grounding architecture: per-modality sensory encoders
//! whose slow cell assemblies are fused and handed to a language-production
//! decoder as its initial state.

pub mod build;
pub mod checkpoint;
pub mod model;
pub mod net;

pub use build::{build_model, ModelConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use model::{
    assemble, forward_grounded, fuse_contexts, Coupling, GroundedTrace, GroundingModel, Variant,
    COUPLING_INIT_RANGE,
};
pub use net::{decode, encode, ContextVector, DecodeTrace, DecoderNet, EncoderNet, Feedback};
