//! Two-dimensional projections of the latent cell-assembly space.
//!
//! Each record's sensory context is a point in assembly space; projecting
//! the whole split onto its two leading principal axes turns the latent
//! structure into a scatter plot. Points carry a label component (the
//! action word, the object word, …) so clusters can be eyeballed — and
//! measured — against the semantics.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SequenceRecord};
use crate::error::{Error, Result};
use crate::grounding::{encode, fuse_contexts, ContextVector, GroundingModel};
use crate::numeric::{pca_fit, pca_project, Matrix, PcaModel};

/// Which latent vector family to project.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LatentSource {
    /// The concatenation of all encoder cell assemblies — the full sensory
    /// context as the coupling sees it.
    Context,
    /// A single modality's cell-assembly vector, by encoder slot.
    Encoder(usize),
    /// The decoder's initial cell-assembly potentials: the coupling output,
    /// or the record's trainable bias entry on a standalone decoder.
    Assembled,
}

impl LatentSource {
    pub fn name(self) -> String {
        match self {
            LatentSource::Context => "context".to_string(),
            LatentSource::Encoder(i) => format!("encoder{i}"),
            LatentSource::Assembled => "assembled".to_string(),
        }
    }
}

/// One record's projected latent vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentPoint {
    pub id: String,
    /// The selected label component, used for coloring.
    pub label: String,
    pub coords: [f64; 2],
}

/// A split's latent vectors projected onto two principal axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentProjection {
    pub source: LatentSource,
    pub points: Vec<LatentPoint>,
    /// Variance captured per kept axis (the fitted model's eigenvalues).
    pub explained_variance: Vec<f64>,
    /// Fraction of the total variance per kept axis, each in [0, 1].
    pub explained_ratio: Vec<f64>,
    /// The fitted basis, kept so held-out vectors can be projected into
    /// the same plane.
    pub pca: PcaModel,
}

/// Compute the chosen latent vector for one record.
fn latent_vector(
    model: &GroundingModel,
    record: &SequenceRecord,
    source: LatentSource,
) -> Result<Vec<f64>> {
    if model.encoders.is_empty() {
        return match source {
            LatentSource::Assembled => model
                .decoder
                .context_bias_table
                .get(&record.id)
                .cloned()
                .ok_or_else(|| Error::token(format!("no context bias for record '{}'", record.id))),
            _ => Err(Error::invalid(format!(
                "source '{}' needs encoders, but this is a standalone decoder",
                source.name()
            ))),
        };
    }
    let encode_slot = |i: usize| -> Result<ContextVector> {
        let name = &model.modalities[i];
        let stream = record
            .streams
            .get(name)
            .ok_or_else(|| Error::invalid(format!("record '{}' has no '{name}' stream", record.id)))?;
        let (ctx, _) = encode(&model.encoders[i], stream, &model.step)?;
        Ok(ctx)
    };
    if let LatentSource::Encoder(i) = source {
        if i >= model.encoders.len() {
            return Err(Error::invalid(format!(
                "encoder slot {i} out of range; model has {}",
                model.encoders.len()
            )));
        }
        return Ok(encode_slot(i)?.values);
    }
    let contexts: Vec<ContextVector> =
        (0..model.encoders.len()).map(encode_slot).collect::<Result<_>>()?;
    match source {
        LatentSource::Context => {
            let mut concat = Vec::new();
            for c in &contexts {
                concat.extend_from_slice(&c.values);
            }
            Ok(concat)
        }
        _ => fuse_contexts(&model.coupling, &contexts),
    }
}

/// Project a split's latent vectors onto their two leading principal axes.
///
/// `indices` selects records (`None` = the whole dataset); at least three
/// are required — two points always fit a line perfectly and say nothing.
/// `label_component` indexes into each record's word-level label to pick
/// the coloring component (0 = first word, typically the action).
pub fn latent_projection(
    model: &GroundingModel,
    ds: &Dataset,
    indices: Option<&[usize]>,
    source: LatentSource,
    label_component: usize,
) -> Result<LatentProjection> {
    let records: Vec<&SequenceRecord> = match indices {
        None => ds.records.iter().collect(),
        Some(ix) => ix
            .iter()
            .map(|&i| {
                ds.records
                    .get(i)
                    .ok_or_else(|| Error::invalid(format!("record index {i} out of range")))
            })
            .collect::<Result<_>>()?,
    };
    if records.len() < 3 {
        return Err(Error::invalid(format!(
            "latent projection needs at least 3 records, got {}",
            records.len()
        )));
    }
    let mut rows = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    for rec in &records {
        rows.push(latent_vector(model, rec, source)?);
        let label = rec.label_text.get(label_component).ok_or_else(|| {
            Error::invalid(format!(
                "record '{}' has no label component {label_component} (label has {} words)",
                rec.id,
                rec.label_text.len()
            ))
        })?;
        labels.push(label.clone());
    }
    let data = Matrix::from_rows(&rows)?;
    let pca = pca_fit(&data, 2)?;
    let coords = pca_project(&pca, &data)?;
    let points = records
        .iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (rec, label))| LatentPoint {
            id: rec.id.clone(),
            label,
            coords: [coords.get(i, 0), coords.get(i, 1)],
        })
        .collect();
    Ok(LatentProjection {
        source,
        points,
        explained_variance: pca.explained_variance.clone(),
        explained_ratio: pca.explained_ratio.clone(),
        pca,
    })
}

/// Colors for up to ten distinct labels; reused cyclically beyond that.
const PALETTE: [&str; 10] = [
    "#e41a1c", "#377eb8", "#4daf4a", "#984ea3", "#ff7f00", "#a65628", "#f781bf", "#17becf",
    "#999999", "#bcbd22",
];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Render the projection as a self-contained SVG scatter plot, points
/// colored by label with a legend and the explained-variance fractions in
/// the title line.
pub fn svg_scatter(proj: &LatentProjection, title: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const MARGIN: f64 = 48.0;

    let mut distinct: Vec<&str> = proj.points.iter().map(|p| p.label.as_str()).collect();
    distinct.sort_unstable();
    distinct.dedup();
    let color_of = |label: &str| {
        let idx = distinct.iter().position(|l| *l == label).unwrap_or(0);
        PALETTE[idx % PALETTE.len()]
    };

    // data ranges, padded so degenerate (all-equal) axes still render
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in &proj.points {
        for a in 0..2 {
            lo[a] = lo[a].min(p.coords[a]);
            hi[a] = hi[a].max(p.coords[a]);
        }
    }
    for a in 0..2 {
        if !(hi[a] - lo[a]).is_normal() {
            lo[a] -= 0.5;
            hi[a] += 0.5;
        }
    }
    let sx = |x: f64| MARGIN + (x - lo[0]) / (hi[0] - lo[0]) * (W - 2.0 * MARGIN);
    // SVG y grows downward; flip so the second axis points up
    let sy = |y: f64| H - MARGIN - (y - lo[1]) / (hi[1] - lo[1]) * (H - 2.0 * MARGIN);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    let pct: Vec<String> = proj
        .explained_ratio
        .iter()
        .map(|r| format!("{:.1}%", 100.0 * r))
        .collect();
    svg.push_str(&format!(
        "<text x=\"{MARGIN}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{} \
         (explained: {})</text>\n",
        xml_escape(title),
        pct.join(", ")
    ));
    for p in &proj.points {
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{}\" fill-opacity=\"0.8\">\
             <title>{}</title></circle>\n",
            sx(p.coords[0]),
            sy(p.coords[1]),
            color_of(&p.label),
            xml_escape(&p.id)
        ));
    }
    for (i, label) in distinct.iter().enumerate() {
        let y = 40.0 + 18.0 * i as f64;
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{y}\" r=\"4\" fill=\"{}\"/>\n",
            W - MARGIN - 80.0,
            color_of(label)
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            W - MARGIN - 70.0,
            y + 4.0,
            xml_escape(label)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grounding::{build_model, ModelConfig, Variant};
    use crate::numeric::Rng;
    use std::collections::BTreeMap;

    fn grounded_setup() -> (GroundingModel, Dataset) {
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
        let model = build_model(&cfg, &mut Rng::new(41)).unwrap();

        let mut ds = Dataset::new(
            vec![("touch".into(), 2), ("vision".into(), 3)],
            cfg.alphabet.clone(),
        );
        let mut rng = Rng::new(42);
        let actions = ["push", "pull", "shake"];
        let objects = ["ball", "cube"];
        for (i, action) in actions.iter().enumerate() {
            for (j, object) in objects.iter().enumerate() {
                let mut streams = BTreeMap::new();
                streams.insert(
                    "touch".to_string(),
                    Matrix::from_fn(7, 2, |_, _| rng.uniform_in(-1.0, 1.0)),
                );
                streams.insert(
                    "vision".to_string(),
                    Matrix::from_fn(7, 3, |_, _| rng.uniform_in(-1.0, 1.0)),
                );
                ds.records.push(SequenceRecord {
                    id: format!("r{i}{j}"),
                    label_text: vec![action.to_string(), object.to_string()],
                    label_phonemes: vec!["_".into(), "A".into(), "_".into()],
                    streams,
                });
            }
        }
        (model, ds)
    }

    fn standalone_setup(table: &[(&str, Vec<f64>)]) -> (GroundingModel, Dataset) {
        let mut cfg = ModelConfig::default();
        cfg.variant = Variant::Mtrnn;
        cfg.alphabet = vec!["A".into(), "_".into()];
        cfg.bias_records = table.iter().map(|(id, _)| id.to_string()).collect();
        cfg.dec_io = 3;
        cfg.dec_cf = 3;
        cfg.dec_cs = 3;
        cfg.dec_csc = 3;
        let mut model = build_model(&cfg, &mut Rng::new(43)).unwrap();
        for (id, v) in table {
            model
                .decoder
                .context_bias_table
                .insert(id.to_string(), v.clone());
        }
        let mut ds = Dataset::new(Vec::new(), cfg.alphabet.clone());
        for (k, (id, _)) in table.iter().enumerate() {
            ds.records.push(SequenceRecord {
                id: id.to_string(),
                label_text: vec![format!("w{k}")],
                label_phonemes: vec!["_".into(), "A".into()],
                streams: BTreeMap::new(),
            });
        }
        (model, ds)
    }

    #[test]
    fn identical_latent_vectors_collapse_to_the_origin() {
        let shared = vec![0.3, -0.2, 0.7];
        let (model, ds) = standalone_setup(&[
            ("r0", shared.clone()),
            ("r1", shared.clone()),
            ("r2", shared.clone()),
            ("r3", shared),
        ]);
        let proj =
            latent_projection(&model, &ds, None, LatentSource::Assembled, 0).unwrap();
        for p in &proj.points {
            assert_eq!(p.coords, [0.0, 0.0]);
        }
        assert_eq!(proj.explained_ratio, vec![0.0, 0.0]);
    }

    #[test]
    fn projection_is_exactly_pca_on_the_raw_latent_vectors() {
        let (model, ds) = grounded_setup();
        for source in [LatentSource::Context, LatentSource::Encoder(1), LatentSource::Assembled] {
            let proj = latent_projection(&model, &ds, None, source, 0).unwrap();
            let rows: Vec<Vec<f64>> = ds
                .records
                .iter()
                .map(|rec| latent_vector(&model, rec, source).unwrap())
                .collect();
            let data = Matrix::from_rows(&rows).unwrap();
            let pca = pca_fit(&data, 2).unwrap();
            let coords = pca_project(&pca, &data).unwrap();
            for (i, p) in proj.points.iter().enumerate() {
                assert_eq!(p.coords, [coords.get(i, 0), coords.get(i, 1)]);
            }
            assert_eq!(proj.explained_variance, pca.explained_variance);
            assert_eq!(proj.explained_ratio, pca.explained_ratio);
            assert!(proj.explained_ratio.iter().all(|r| (0.0..=1.0).contains(r)));
        }
    }

    #[test]
    fn encoder_source_matches_that_encoders_context() {
        let (model, ds) = grounded_setup();
        let rec = &ds.records[0];
        let v = latent_vector(&model, rec, LatentSource::Encoder(0)).unwrap();
        let stream = &rec.streams["touch"];
        let (ctx, _) = encode(&model.encoders[0], stream, &model.step).unwrap();
        assert_eq!(v, ctx.values);
        // the concatenated context starts with encoder 0's slice
        let full = latent_vector(&model, rec, LatentSource::Context).unwrap();
        assert_eq!(full[..ctx.values.len()], ctx.values[..]);
    }

    #[test]
    fn label_component_picks_the_word_for_coloring() {
        let (model, ds) = grounded_setup();
        let by_action =
            latent_projection(&model, &ds, None, LatentSource::Context, 0).unwrap();
        assert!(by_action.points.iter().all(|p| ["push", "pull", "shake"].contains(&p.label.as_str())));
        let by_object =
            latent_projection(&model, &ds, None, LatentSource::Context, 1).unwrap();
        assert!(by_object.points.iter().all(|p| ["ball", "cube"].contains(&p.label.as_str())));
        let err = latent_projection(&model, &ds, None, LatentSource::Context, 2).unwrap_err();
        assert!(err.to_string().contains("component 2"), "{err}");
    }

    #[test]
    fn too_few_records_and_bad_sources_are_rejected() {
        let (model, ds) = grounded_setup();
        assert!(latent_projection(&model, &ds, Some(&[0, 1]), LatentSource::Context, 0).is_err());
        assert!(latent_projection(&model, &ds, Some(&[0, 1, 99]), LatentSource::Context, 0).is_err());
        assert!(latent_projection(&model, &ds, None, LatentSource::Encoder(5), 0).is_err());

        let (solo, solo_ds) = standalone_setup(&[
            ("r0", vec![0.1, 0.2, 0.3]),
            ("r1", vec![0.2, 0.1, 0.0]),
            ("r2", vec![-0.1, 0.4, 0.2]),
        ]);
        assert!(latent_projection(&solo, &solo_ds, None, LatentSource::Context, 0).is_err());
        assert!(latent_projection(&solo, &solo_ds, None, LatentSource::Assembled, 0).is_ok());
    }

    #[test]
    fn record_reordering_changes_the_projection_only_by_axis_signs() {
        let (model, mut ds) = grounded_setup();
        let forward =
            latent_projection(&model, &ds, None, LatentSource::Context, 0).unwrap();
        ds.records.reverse();
        let reversed =
            latent_projection(&model, &ds, None, LatentSource::Context, 0).unwrap();
        // match points by id, align axis signs via the first spread-out axis value
        for a in 0..2 {
            let anchor = forward
                .points
                .iter()
                .find(|p| p.coords[a].abs() > 1e-9)
                .expect("an informative point");
            let twin = reversed.points.iter().find(|p| p.id == anchor.id).unwrap();
            let sign = if (anchor.coords[a] - twin.coords[a]).abs()
                < (anchor.coords[a] + twin.coords[a]).abs()
            {
                1.0
            } else {
                -1.0
            };
            for p in &forward.points {
                let q = reversed.points.iter().find(|q| q.id == p.id).unwrap();
                assert!(
                    (p.coords[a] - sign * q.coords[a]).abs() < 1e-9,
                    "axis {a}: {} vs {}",
                    p.coords[a],
                    q.coords[a]
                );
            }
        }
        for (r_f, r_r) in forward.explained_ratio.iter().zip(&reversed.explained_ratio) {
            assert!((r_f - r_r).abs() < 1e-12);
        }
    }

    #[test]
    fn svg_renders_one_circle_per_point_plus_a_legend() {
        let (model, ds) = grounded_setup();
        let proj = latent_projection(&model, &ds, None, LatentSource::Context, 0).unwrap();
        let svg = svg_scatter(&proj, "context by action");
        assert!(svg.starts_with("<svg "));
        assert!(svg.trim_end().ends_with("</svg>"));
        let circles = svg.matches("<circle").count();
        // one per point plus one legend swatch per distinct label
        assert_eq!(circles, proj.points.len() + 3);
        assert!(svg.contains("context by action"));
        assert!(svg.contains("push") && svg.contains("pull") && svg.contains("shake"));
        // degenerate projections still render finite geometry
        let flat = LatentProjection {
            source: LatentSource::Assembled,
            points: vec![
                LatentPoint { id: "a".into(), label: "x".into(), coords: [0.0, 0.0] },
                LatentPoint { id: "b".into(), label: "y".into(), coords: [0.0, 0.0] },
            ],
            explained_variance: vec![0.0, 0.0],
            explained_ratio: vec![0.0, 0.0],
            pca: proj.pca.clone(),
        };
        let svg = svg_scatter(&flat, "flat");
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}
