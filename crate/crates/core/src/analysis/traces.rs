//! Activation-trace export: everything a timescale-ordered raster plot of
//! one record's forward pass needs, as plain CSV.

use std::fs;
use std::path::{Path, PathBuf};

use crate::data::SequenceRecord;
use crate::error::{Error, Result};
use crate::grounding::{forward_grounded, Feedback, GroundingModel};
use crate::numeric::Matrix;
use crate::rnn::{MtrnnParams, MtrnnTrace};

/// All units of a network as (effective τ, layer, unit), sorted by τ
/// ascending with ties resolved fast-to-slow by layer, then unit index.
/// This is the canonical raster column order.
pub fn unit_order(net: &MtrnnParams) -> Vec<(f64, usize, usize)> {
    let mut units = Vec::new();
    for (l, layer) in net.layers.iter().enumerate() {
        for u in 0..layer.spec.units {
            units.push((layer.timescales.effective(u), l, u));
        }
    }
    units.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    units
}

fn write_network(
    dir: &Path,
    name: &str,
    net: &MtrnnParams,
    trace: &MtrnnTrace,
) -> Result<[PathBuf; 2]> {
    let order = unit_order(net);
    let label = |l: usize, u: usize| format!("{}{u}", net.layers[l].spec.role.name());

    let mut rows = String::new();
    for (i, &(_, l, u)) in order.iter().enumerate() {
        if i > 0 {
            rows.push(',');
        }
        rows.push_str(&label(l, u));
    }
    rows.push('\n');
    // states[0] is the initial condition; the trace proper starts at 1
    for state in &trace.states[1..] {
        for (i, &(_, l, u)) in order.iter().enumerate() {
            if i > 0 {
                rows.push(',');
            }
            rows.push_str(&format!("{}", state[l].y[u]));
        }
        rows.push('\n');
    }
    let trace_path = dir.join(format!("{name}.trace.csv"));
    fs::write(&trace_path, rows).map_err(|e| Error::io(&trace_path, e))?;

    let mut ordering = String::from("column,layer,unit,tau\n");
    for (c, &(tau, l, u)) in order.iter().enumerate() {
        ordering.push_str(&format!("{c},{},{u},{tau}\n", net.layers[l].spec.role.name()));
    }
    let order_path = dir.join(format!("{name}.order.csv"));
    fs::write(&order_path, ordering).map_err(|e| Error::io(&order_path, e))?;
    Ok([trace_path, order_path])
}

/// Export one record's activation traces, one CSV pair per network.
///
/// For every encoder and for the decoder (`dec`), `dir` receives
/// `<network>.trace.csv` — a header of unit names, then one row per
/// timestep with activations `y`, columns in [`unit_order`] — and
/// `<network>.order.csv` mapping each column to its layer, unit, and
/// effective timescale. Rows therefore count the stream steps for an
/// encoder and the decode steps for the decoder.
///
/// The decoder runs in self-feedback mode: free generation is the regime
/// whose dynamics raster plots are meant to show. Values print as
/// shortest-exact decimals, so a reload reproduces them bit for bit.
/// Returns the written paths.
pub fn export_traces(
    model: &GroundingModel,
    record: &SequenceRecord,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let trace = forward_grounded(model, record, Feedback::SelfFeedback, None)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for (enc, t) in model.encoders.iter().zip(&trace.enc_traces) {
        written.extend(write_network(dir, &enc.name, &enc.mtrnn, t)?);
    }
    written.extend(write_network(dir, "dec", &model.decoder.mtrnn, &trace.dec.trace)?);
    Ok(written)
}

/// Parse a trace CSV back into (header labels, value matrix). Only used by
/// tests and round-trip checks; the files are meant for plotting tools.
pub fn read_trace_csv(path: &Path) -> Result<(Vec<String>, Matrix)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::format(format!("{}: empty trace", path.display())))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|cell| {
                cell.parse::<f64>().map_err(|_| {
                    Error::format(format!(
                        "{}:{}: '{cell}' is not a number",
                        path.display(),
                        lineno + 2
                    ))
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != header.len() {
            return Err(Error::format(format!(
                "{}:{}: {} columns under a {}-column header",
                path.display(),
                lineno + 2,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok((header, Matrix::from_rows(&rows)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grounding::{build_model, ModelConfig, Variant};
    use crate::numeric::Rng;
    use std::collections::BTreeMap;

    fn temp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("tau-ground-traces-{tag}"));
        let _ = fs::remove_dir_all(&dir);
        dir
    }

    fn grounded_setup() -> (GroundingModel, SequenceRecord) {
        let mut cfg = ModelConfig::default();
        cfg.variant = Variant::Mtrnn;
        cfg.modalities = vec![("touch".into(), 2), ("vision".into(), 3)];
        cfg.alphabet = vec!["A".into(), "B".into(), "_".into()];
        cfg.enc_io = 4;
        cfg.enc_cf = 3;
        cfg.enc_cs = 3;
        cfg.enc_csc = 2;
        cfg.dec_io = 4;
        cfg.dec_cf = 3;
        cfg.dec_cs = 3;
        cfg.dec_csc = 2;
        let model = build_model(&cfg, &mut Rng::new(51)).unwrap();
        let mut rng = Rng::new(52);
        let mut streams = BTreeMap::new();
        streams.insert("touch".to_string(), Matrix::from_fn(7, 2, |_, _| rng.uniform_in(-1.0, 1.0)));
        streams.insert("vision".to_string(), Matrix::from_fn(5, 3, |_, _| rng.uniform_in(-1.0, 1.0)));
        let record = SequenceRecord {
            id: "r0".to_string(),
            label_text: vec!["take".to_string()],
            label_phonemes: vec!["_".into(), "A".into(), "B".into()],
            streams,
        };
        (model, record)
    }

    #[test]
    fn every_network_gets_a_trace_whose_rows_count_its_steps() {
        let (model, record) = grounded_setup();
        let dir = temp_dir("shape");
        let written = export_traces(&model, &record, &dir).unwrap();
        assert_eq!(written.len(), 6); // (trace + order) × (2 encoders + decoder)
        let (_, touch) = read_trace_csv(&dir.join("touch.trace.csv")).unwrap();
        assert_eq!(touch.rows(), 7);
        assert_eq!(touch.cols(), 4 + 3 + 3);
        let (_, vision) = read_trace_csv(&dir.join("vision.trace.csv")).unwrap();
        assert_eq!(vision.rows(), 5);
        let (_, dec) = read_trace_csv(&dir.join("dec.trace.csv")).unwrap();
        assert_eq!(dec.rows(), record.label_phonemes.len());
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn columns_sort_by_effective_timescale_and_match_the_order_file() {
        let (model, record) = grounded_setup();
        let dir = temp_dir("order");
        export_traces(&model, &record, &dir).unwrap();
        let order_text = fs::read_to_string(dir.join("dec.order.csv")).unwrap();
        let mut lines = order_text.lines();
        assert_eq!(lines.next().unwrap(), "column,layer,unit,tau");
        let (header, _) = read_trace_csv(&dir.join("dec.trace.csv")).unwrap();
        let mut last_tau = f64::NEG_INFINITY;
        let mut count = 0;
        for (c, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            assert_eq!(cells[0], c.to_string());
            let tau: f64 = cells[3].parse().unwrap();
            assert!(tau >= last_tau, "τ order violated at column {c}");
            last_tau = tau;
            // header label is role+unit from the same row
            assert_eq!(header[c], format!("{}{}", cells[1], cells[2]));
            count += 1;
        }
        assert_eq!(count, model.decoder.mtrnn.total_units());
        // the expected order recomputed independently
        let expect = unit_order(&model.decoder.mtrnn);
        let roles: Vec<String> = expect
            .iter()
            .map(|&(_, l, u)| format!("{}{u}", model.decoder.mtrnn.layers[l].spec.role.name()))
            .collect();
        assert_eq!(header, roles);
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn reloading_a_trace_reproduces_the_forward_pass_bitwise() {
        let (model, record) = grounded_setup();
        let dir = temp_dir("reload");
        export_traces(&model, &record, &dir).unwrap();
        let trace = forward_grounded(&model, &record, Feedback::SelfFeedback, None).unwrap();
        let order = unit_order(&model.encoders[0].mtrnn);
        let (_, values) = read_trace_csv(&dir.join("touch.trace.csv")).unwrap();
        for t in 0..values.rows() {
            for (c, &(_, l, u)) in order.iter().enumerate() {
                let expect = trace.enc_traces[0].states[t + 1][l].y[u];
                assert_eq!(values.get(t, c).to_bits(), expect.to_bits());
            }
        }
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn standalone_decoders_export_only_their_own_trace() {
        let mut cfg = ModelConfig::default();
        cfg.variant = Variant::Amtrnn;
        cfg.alphabet = vec!["A".into(), "_".into()];
        cfg.bias_records = vec!["r0".into()];
        cfg.dec_io = 3;
        cfg.dec_cf = 3;
        cfg.dec_cs = 2;
        cfg.dec_csc = 1;
        let model = build_model(&cfg, &mut Rng::new(53)).unwrap();
        let record = SequenceRecord {
            id: "r0".to_string(),
            label_text: vec!["w".to_string()],
            label_phonemes: vec!["_".into(), "A".into()],
            streams: BTreeMap::new(),
        };
        let dir = temp_dir("solo");
        let written = export_traces(&model, &record, &dir).unwrap();
        assert_eq!(written.len(), 2);
        assert!(dir.join("dec.trace.csv").exists());
        assert!(!dir.join("touch.trace.csv").exists());
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn unwritable_destination_is_an_io_error() {
        let (model, record) = grounded_setup();
        let dir = temp_dir("blocked");
        fs::create_dir_all(&dir).unwrap();
        let file = dir.join("occupied");
        fs::write(&file, "not a directory").unwrap();
        let err = export_traces(&model, &record, &file.join("sub")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }), "{err:?}");
        fs::remove_dir_all(&dir).ok();
    }
}
