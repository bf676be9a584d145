//! Timescale reports: how far training bent each unit's effective τ away
//! from its initialization.
//!
//! The workflow is snapshot → train → report: capture the freshly built
//! model's timescale parameters with [`snapshot_timescales`], train, then
//! let [`timescale_report`] line the current effective values up against
//! the snapshot, layer by layer, with summary statistics and the full
//! per-unit lists for histogramming.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grounding::GroundingModel;
use crate::rnn::{MtrnnParams, TimescaleParams};

/// The timescale parameters of every layer of one network, captured at a
/// point in time (normally initialization).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimescaleSnapshot {
    /// Modality name for an encoder, `"dec"` for the decoder.
    pub network: String,
    /// Fast-to-slow, same order as the network's layer stack.
    pub layers: Vec<TimescaleParams>,
}

/// Capture every network's current timescale parameters.
pub fn snapshot_timescales(model: &GroundingModel) -> Vec<TimescaleSnapshot> {
    let grab = |name: &str, mtrnn: &MtrnnParams| TimescaleSnapshot {
        network: name.to_string(),
        layers: mtrnn.layers.iter().map(|l| l.timescales.clone()).collect(),
    };
    let mut out: Vec<TimescaleSnapshot> = model
        .encoders
        .iter()
        .map(|e| grab(&e.name, &e.mtrnn))
        .collect();
    out.push(grab("dec", &model.decoder.mtrnn));
    out
}

/// Summary statistics of a per-unit value list. `std` is the population
/// standard deviation — the list is a census of the layer's units, not a
/// sample from a larger pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub std: f64,
}

impl Stats {
    pub fn from_values(values: &[f64]) -> Result<Stats> {
        if values.is_empty() {
            return Err(Error::invalid("statistics of an empty list"));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        Ok(Stats {
            median,
            min: sorted[0],
            max: sorted[n - 1],
            std: var.sqrt(),
        })
    }
}

/// One layer's initial-versus-learned effective timescales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTimescales {
    pub network: String,
    /// Layer role name: "io", "cf", or "cs".
    pub role: String,
    /// Effective τ per unit at snapshot time.
    pub initial: Vec<f64>,
    /// Effective τ per unit now.
    pub learned: Vec<f64>,
    pub initial_stats: Stats,
    pub learned_stats: Stats,
}

/// Per-layer timescale comparison across all networks of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimescaleReport {
    pub layers: Vec<LayerTimescales>,
}

impl TimescaleReport {
    /// Per-unit CSV: one row per unit with its initial and learned τ, in
    /// shortest-exact decimals so a reload is bit-faithful.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("network,layer,unit,initial_tau,learned_tau\n");
        for layer in &self.layers {
            for (i, (t0, t1)) in layer.initial.iter().zip(&layer.learned).enumerate() {
                out.push_str(&format!("{},{},{i},{t0},{t1}\n", layer.network, layer.role));
            }
        }
        out
    }
}

/// Line the model's current effective timescales up against a snapshot.
///
/// The snapshot must come from the same architecture: same networks in the
/// same order, same layer sizes. Frozen-timescale layers report learned
/// values identical to the initial ones; adaptive layers show wherever
/// training moved the per-unit adaptation.
pub fn timescale_report(
    model: &GroundingModel,
    initial: &[TimescaleSnapshot],
) -> Result<TimescaleReport> {
    let current = snapshot_timescales(model);
    if current.len() != initial.len() {
        return Err(Error::shape(format!(
            "snapshot covers {} networks, model has {}",
            initial.len(),
            current.len()
        )));
    }
    let mut layers = Vec::new();
    let nets: Vec<&MtrnnParams> = model
        .encoders
        .iter()
        .map(|e| &e.mtrnn)
        .chain(std::iter::once(&model.decoder.mtrnn))
        .collect();
    for ((now, was), net) in current.iter().zip(initial).zip(nets) {
        if was.network != now.network {
            return Err(Error::invalid(format!(
                "snapshot network '{}' does not match model network '{}'",
                was.network, now.network
            )));
        }
        if was.layers.len() != now.layers.len() {
            return Err(Error::shape(format!(
                "network '{}': snapshot has {} layers, model has {}",
                now.network,
                was.layers.len(),
                now.layers.len()
            )));
        }
        for ((ts_now, ts_was), lp) in now.layers.iter().zip(&was.layers).zip(&net.layers) {
            if ts_was.len() != ts_now.len() {
                return Err(Error::shape(format!(
                    "network '{}' {} layer: snapshot has {} units, model has {}",
                    now.network,
                    lp.spec.role.name(),
                    ts_was.len(),
                    ts_now.len()
                )));
            }
            let initial = ts_was.effective_all();
            let learned = ts_now.effective_all();
            layers.push(LayerTimescales {
                network: now.network.clone(),
                role: lp.spec.role.name().to_string(),
                initial_stats: Stats::from_values(&initial)?,
                learned_stats: Stats::from_values(&learned)?,
                initial,
                learned,
            });
        }
    }
    Ok(TimescaleReport { layers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grounding::{build_model, ModelConfig, Variant};
    use crate::numeric::Rng;

    fn grounded_config(variant: Variant) -> ModelConfig {
        let mut cfg = ModelConfig::default();
        cfg.variant = variant;
        cfg.modalities = vec![("touch".into(), 3), ("vision".into(), 4)];
        cfg.alphabet = vec!["A".into(), "B".into(), "_".into()];
        cfg.enc_io = 5;
        cfg.enc_cf = 4;
        cfg.enc_cs = 3;
        cfg.enc_csc = 2;
        cfg.dec_io = 4;
        cfg.dec_cf = 3;
        cfg.dec_cs = 3;
        cfg.dec_csc = 2;
        if variant == Variant::Ctrnn {
            cfg.tau_io = 1.0;
            cfg.tau_cf = 1.0;
            cfg.tau_cs = 1.0;
        }
        cfg
    }

    #[test]
    fn snapshots_cover_every_network_in_slot_order() {
        let model = build_model(&grounded_config(Variant::Mtrnn), &mut Rng::new(1)).unwrap();
        let snaps = snapshot_timescales(&model);
        let names: Vec<&str> = snaps.iter().map(|s| s.network.as_str()).collect();
        assert_eq!(names, ["touch", "vision", "dec"]);
        assert_eq!(snaps[0].layers.len(), 3);

        let mut cfg = grounded_config(Variant::Mtrnn);
        cfg.modalities.clear();
        cfg.bias_records = vec!["r0".into()];
        let solo = build_model(&cfg, &mut Rng::new(2)).unwrap();
        let names: Vec<String> = snapshot_timescales(&solo)
            .into_iter()
            .map(|s| s.network)
            .collect();
        assert_eq!(names, ["dec"]);
    }

    #[test]
    fn frozen_timescales_report_identical_columns() {
        for variant in [Variant::Ctrnn, Variant::Mtrnn] {
            let model = build_model(&grounded_config(variant), &mut Rng::new(3)).unwrap();
            let snaps = snapshot_timescales(&model);
            let report = timescale_report(&model, &snaps).unwrap();
            assert_eq!(report.layers.len(), 9); // 3 layers × (2 encoders + decoder)
            for layer in &report.layers {
                assert_eq!(layer.initial, layer.learned);
            }
        }
    }

    #[test]
    fn adaptive_updates_move_the_learned_column_only() {
        let mut model = build_model(&grounded_config(Variant::Amtrnn), &mut Rng::new(5)).unwrap();
        let snaps = snapshot_timescales(&model);
        // pretend training nudged one decoder cs unit's adaptation
        model.decoder.mtrnn.layers[2].timescales.u[0] += 0.25;
        let report = timescale_report(&model, &snaps).unwrap();
        let dec_cs = report
            .layers
            .iter()
            .find(|l| l.network == "dec" && l.role == "cs")
            .unwrap();
        assert!(dec_cs.learned[0] > dec_cs.initial[0]);
        assert_eq!(dec_cs.learned[1..], dec_cs.initial[1..]);
        // every other layer is untouched
        for layer in report.layers.iter().filter(|l| l.network != "dec" || l.role != "cs") {
            assert_eq!(layer.initial, layer.learned);
        }
    }

    #[test]
    fn every_reported_timescale_respects_the_lower_bound() {
        for variant in [Variant::Ctrnn, Variant::Mtrnn, Variant::Amtrnn] {
            let model = build_model(&grounded_config(variant), &mut Rng::new(7)).unwrap();
            let report = timescale_report(&model, &snapshot_timescales(&model)).unwrap();
            for layer in &report.layers {
                assert!(layer.learned.iter().all(|&t| t >= 1.0));
                if variant == Variant::Ctrnn {
                    assert!(layer.learned.iter().all(|&t| t == 1.0));
                }
            }
        }
    }

    #[test]
    fn stats_match_a_hand_computed_list() {
        // mean 5, squared deviations sum to 32, population variance 4
        let s = Stats::from_values(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert_eq!(s.median, 4.5);
        assert_eq!(s.min, 2.0);
        assert_eq!(s.max, 9.0);
        assert_eq!(s.std, 2.0);
        // odd-length median is the middle element itself
        assert_eq!(Stats::from_values(&[3.0, 1.0, 2.0]).unwrap().median, 2.0);
        assert!(Stats::from_values(&[]).is_err());
    }

    #[test]
    fn mismatched_snapshots_are_rejected() {
        let model = build_model(&grounded_config(Variant::Mtrnn), &mut Rng::new(9)).unwrap();
        let mut snaps = snapshot_timescales(&model);
        snaps.pop();
        assert!(timescale_report(&model, &snaps).is_err());

        let mut snaps = snapshot_timescales(&model);
        snaps[0].network = "audio".into();
        assert!(timescale_report(&model, &snaps).is_err());

        let mut snaps = snapshot_timescales(&model);
        snaps[1].layers[0].u.pop();
        snaps[1].layers[0].tau0.pop();
        assert!(timescale_report(&model, &snaps).is_err());
    }

    #[test]
    fn csv_lists_every_unit_once_with_exact_values() {
        let model = build_model(&grounded_config(Variant::Amtrnn), &mut Rng::new(11)).unwrap();
        let report = timescale_report(&model, &snapshot_timescales(&model)).unwrap();
        let csv = report.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "network,layer,unit,initial_tau,learned_tau");
        let total_units: usize = report.layers.iter().map(|l| l.learned.len()).sum();
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), total_units);
        // first row belongs to the first layer's first unit, bit-exact
        let cells: Vec<&str> = rows[0].split(',').collect();
        assert_eq!(cells[0], "touch");
        assert_eq!(cells[1], "io");
        assert_eq!(cells[2], "0");
        let parsed: f64 = cells[4].parse().unwrap();
        assert_eq!(parsed.to_bits(), report.layers[0].learned[0].to_bits());
    }
}
