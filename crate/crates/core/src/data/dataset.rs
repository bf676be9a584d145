use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{Matrix, Rng};

/// The silence token; separates words in phonetic labels and must be part
/// of every alphabet.
pub const SIL: &str = "SIL";

/// One sensation–description pair: per-modality feature streams plus the
/// label as words and as phonemes. Stream lengths may differ per modality;
/// each encoder runs its own clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub id: String,
    pub label_text: Vec<String>,
    pub label_phonemes: Vec<String>,
    pub streams: BTreeMap<String, Matrix>,
}

/// Per-modality, per-dimension (min, max) pairs captured by normalization.
pub type Norms = BTreeMap<String, Vec<(f64, f64)>>;

/// A corpus: records, the modality inventory (ordered), the phonetic
/// alphabet, and optional side tables (word embeddings, pronunciations)
/// plus normalization constants once normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// (name, dimension), in fixed slot order.
    pub modalities: Vec<(String, usize)>,
    pub alphabet: Vec<String>,
    pub records: Vec<SequenceRecord>,
    /// token → vector, for embedding-mode labels.
    pub embedding_table: Option<BTreeMap<String, Vec<f64>>>,
    /// word → phoneme list, for rebuilding phonetic labels after synonym
    /// substitution.
    pub lexicon: Option<BTreeMap<String, Vec<String>>>,
    /// Present after `normalize_streams`; reusable on held-out data.
    pub norms: Option<Norms>,
}

impl Dataset {
    pub fn new(modalities: Vec<(String, usize)>, alphabet: Vec<String>) -> Self {
        Dataset {
            modalities,
            alphabet,
            records: Vec::new(),
            embedding_table: None,
            lexicon: None,
            norms: None,
        }
    }

    pub fn modality_dim(&self, name: &str) -> Option<usize> {
        self.modalities
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, d)| *d)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Restriction to the given record indices, in the given order. Side
    /// tables and normalization constants carry over unchanged.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let mut out = self.clone();
        out.records = indices
            .iter()
            .map(|&i| {
                self.records.get(i).cloned().ok_or_else(|| {
                    Error::invalid(format!(
                        "subset index {i} out of range for {} records",
                        self.records.len()
                    ))
                })
            })
            .collect::<Result<_>>()?;
        Ok(out)
    }

    /// Full consistency check: modality agreement, finite non-empty
    /// streams, known phonemes, sane alphabet. Errors name the offending
    /// record.
    pub fn validate(&self) -> Result<()> {
        if self.modalities.is_empty() {
            return Err(Error::invalid("dataset declares no modalities"));
        }
        let mut names: Vec<&str> = self.modalities.iter().map(|(n, _)| n.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.modalities.len() {
            return Err(Error::invalid("duplicate modality names"));
        }
        let mut sorted = self.alphabet.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.alphabet.len() {
            return Err(Error::invalid("alphabet contains duplicate tokens"));
        }
        if !self.alphabet.iter().any(|t| t == SIL) {
            return Err(Error::invalid(format!("alphabet lacks the {SIL} token")));
        }
        let mut ids: Vec<&str> = self.records.iter().map(|r| r.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.records.len() {
            return Err(Error::invalid("duplicate record ids"));
        }
        for rec in &self.records {
            if rec.streams.len() != self.modalities.len() {
                return Err(Error::invalid(format!(
                    "record '{}' has {} streams, dataset declares {} modalities",
                    rec.id,
                    rec.streams.len(),
                    self.modalities.len()
                )));
            }
            for (name, dim) in &self.modalities {
                let stream = rec.streams.get(name).ok_or_else(|| {
                    Error::invalid(format!("record '{}' misses modality '{name}'", rec.id))
                })?;
                if stream.cols() != *dim {
                    return Err(Error::shape(format!(
                        "record '{}' stream '{name}' has {} columns, manifest says {dim}",
                        rec.id,
                        stream.cols()
                    )));
                }
                if stream.rows() == 0 {
                    return Err(Error::invalid(format!(
                        "record '{}' stream '{name}' is empty",
                        rec.id
                    )));
                }
                if !stream.all_finite() {
                    return Err(Error::invalid(format!(
                        "record '{}' stream '{name}' contains non-finite values",
                        rec.id
                    )));
                }
            }
            if rec.label_phonemes.is_empty() && self.embedding_table.is_none() {
                return Err(Error::invalid(format!(
                    "record '{}' has no phonemes and the dataset has no embedding table",
                    rec.id
                )));
            }
            for p in &rec.label_phonemes {
                if !self.alphabet.iter().any(|t| t == p) {
                    return Err(Error::token(format!(
                        "record '{}' uses phoneme '{p}' outside the alphabet",
                        rec.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Disjoint index partition of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// Partition [0, n): seeded shuffle, then contiguous cut into train /
/// valid / test. Valid and test sizes are round(n·fraction); the remainder
/// goes to train.
pub fn split_indices(n: usize, fractions: (f64, f64, f64), seed: u64) -> Result<SplitIndices> {
    let (ft, fv, fs) = fractions;
    if !(ft >= 0.0 && fv >= 0.0 && fs >= 0.0) || (ft + fv + fs - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split fractions ({ft}, {fv}, {fs}) must be non-negative and sum to 1"
        )));
    }
    if n < 8 {
        return Err(Error::invalid(format!("cannot split {n} records (need at least 8)")));
    }
    let n_valid = (n as f64 * fv).round() as usize;
    let n_test = (n as f64 * fs).round() as usize;
    if n_valid == 0 || n_test == 0 || n_valid + n_test >= n {
        return Err(Error::invalid(format!(
            "split of {n} leaves train/valid/test = {}/{n_valid}/{n_test}",
            n as i64 - n_valid as i64 - n_test as i64
        )));
    }
    let n_train = n - n_valid - n_test;
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut order);
    Ok(SplitIndices {
        train: order[..n_train].to_vec(),
        valid: order[n_train..n_train + n_valid].to_vec(),
        test: order[n_train + n_valid..].to_vec(),
    })
}

pub fn split_dataset(ds: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<SplitIndices> {
    split_indices(ds.len(), fractions, seed)
}

/// Min-max scale every stream dimension to [0, 1] using dataset-wide
/// extremes; a constant dimension maps to 0.5 everywhere. The constants are
/// recorded in the result's `norms` for reuse on held-out data.
pub fn normalize_streams(ds: &Dataset) -> Result<Dataset> {
    if ds.is_empty() {
        return Err(Error::invalid("cannot normalize an empty dataset"));
    }
    let mut norms: Norms = BTreeMap::new();
    for (name, dim) in &ds.modalities {
        let mut lo = vec![f64::INFINITY; *dim];
        let mut hi = vec![f64::NEG_INFINITY; *dim];
        for rec in &ds.records {
            let stream = &rec.streams[name];
            for row in stream.iter_rows() {
                for (d, &v) in row.iter().enumerate() {
                    lo[d] = lo[d].min(v);
                    hi[d] = hi[d].max(v);
                }
            }
        }
        norms.insert(name.clone(), lo.into_iter().zip(hi).collect());
    }
    let mut out = apply_normalization(ds, &norms)?;
    out.norms = Some(norms);
    Ok(out)
}

/// Apply previously recorded min-max constants: x ↦ (x − min)/(max − min),
/// 0.5 for dimensions whose recorded range is empty. Values outside the
/// recorded range land outside [0, 1]; held-out data is not clamped.
pub fn apply_normalization(ds: &Dataset, norms: &Norms) -> Result<Dataset> {
    let mut out = ds.clone();
    for (name, dim) in &ds.modalities {
        let ranges = norms
            .get(name)
            .ok_or_else(|| Error::invalid(format!("no recorded range for modality '{name}'")))?;
        if ranges.len() != *dim {
            return Err(Error::shape(format!(
                "modality '{name}' ranges cover {} of {dim} dimensions",
                ranges.len()
            )));
        }
        for rec in &mut out.records {
            let stream = rec.streams.get_mut(name).ok_or_else(|| {
                Error::invalid(format!("record '{}' misses modality '{name}'", rec.id))
            })?;
            for r in 0..stream.rows() {
                let row = stream.row_mut(r);
                for (d, &(lo, hi)) in ranges.iter().enumerate() {
                    row[d] = if hi > lo { (row[d] - lo) / (hi - lo) } else { 0.5 };
                }
            }
        }
    }
    out.norms = Some(norms.clone());
    Ok(out)
}
