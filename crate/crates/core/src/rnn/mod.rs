//! Continuous-time recurrent layers with per-unit timescales, stacked into
//! a fast-to-slow hierarchy with nearest-neighbour wiring.

pub mod mtrnn;
pub mod timescale;

pub use mtrnn::{
    ctrnn_step, integrate, mtrnn_forward, mtrnn_step, LayerParams, LayerState, MtrnnParams,
    MtrnnTrace, StepConfig,
};
pub use timescale::{
    effective_timescale, init_timescales, LayerRole, LayerSpec, TimescaleMode, TimescaleParams,
};
