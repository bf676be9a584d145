//! Accuracy metrics, token decoding, timescale and activation reports,
//! latent context projections, and run comparison statistics.

pub mod latent;
pub mod metrics;
pub mod stats;
pub mod timescales;
pub mod traces;

pub use latent::{latent_projection, svg_scatter, LatentPoint, LatentProjection, LatentSource};
pub use metrics::{accuracy, decode_tokens, AccuracyReport, RecordOutcome};
pub use stats::compare_runs;
pub use timescales::{
    snapshot_timescales, timescale_report, LayerTimescales, Stats, TimescaleReport,
    TimescaleSnapshot,
};
pub use traces::{export_traces, read_trace_csv, unit_order};
