use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::dataset::{Dataset, Norms, SequenceRecord};
use crate::error::{Error, Result};
use crate::numeric::Matrix;

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    modalities: Vec<ManifestModality>,
    alphabet: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embeddings: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lexicon: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    norms: Option<Norms>,
    records: Vec<ManifestRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestModality {
    name: String,
    dim: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRecord {
    id: String,
    label_text: Vec<String>,
    label_phonemes: Vec<String>,
    /// modality name → stream file, relative to the dataset directory.
    streams: BTreeMap<String, String>,
}

/// Parse one headerless CSV stream: one timestep per row, full-precision
/// decimal values.
fn read_stream_csv(path: &Path, dim: usize) -> Result<Matrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|_| {
                    Error::format(format!(
                        "{}:{}: '{}' is not a number",
                        path.display(),
                        lineno + 1,
                        cell.trim()
                    ))
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != dim {
            return Err(Error::format(format!(
                "{}:{}: {} columns, expected {dim}",
                path.display(),
                lineno + 1,
                row.len()
            )));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::format(format!("{}: empty stream", path.display())));
    }
    Matrix::from_rows(&rows)
}

/// Render a stream as CSV with shortest-exact decimals, so a reload
/// reproduces every value bit for bit.
fn write_stream_csv(path: &Path, stream: &Matrix) -> Result<()> {
    let mut out = String::new();
    for row in stream.iter_rows() {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn check_file_name(kind: &str, name: &str) -> Result<()> {
    if name.is_empty() || name.contains('/') || name.contains('\\') || name.contains("..") {
        return Err(Error::invalid(format!("{kind} '{name}' is not a plain file name")));
    }
    Ok(())
}

/// Load a dataset directory: `manifest.json` plus the stream files (and
/// optional embedding/lexicon side files) it references. The result is
/// fully validated; failures name the offending record.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::format(format!("{}: {e}", manifest_path.display())))?;
    if manifest.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::format(format!(
            "{}: dataset format {} unsupported (this build reads {})",
            manifest_path.display(),
            manifest.format_version,
            DATASET_FORMAT_VERSION
        )));
    }
    let modalities: Vec<(String, usize)> = manifest
        .modalities
        .iter()
        .map(|m| (m.name.clone(), m.dim))
        .collect();
    let mut ds = Dataset::new(modalities, manifest.alphabet);
    ds.norms = manifest.norms;
    if let Some(name) = &manifest.embeddings {
        check_file_name("embedding file", name)?;
        ds.embedding_table = Some(load_embeddings(&dir.join(name))?);
    }
    if let Some(name) = &manifest.lexicon {
        check_file_name("lexicon file", name)?;
        ds.lexicon = Some(load_lexicon(&dir.join(name))?);
    }
    for mrec in &manifest.records {
        let mut streams = BTreeMap::new();
        for (modality, file) in &mrec.streams {
            check_file_name("stream file", file)?;
            let dim = ds.modality_dim(modality).ok_or_else(|| {
                Error::invalid(format!(
                    "record '{}' references undeclared modality '{modality}'",
                    mrec.id
                ))
            })?;
            let stream = read_stream_csv(&dir.join(file), dim).map_err(|e| {
                Error::format(format!("record '{}': {e}", mrec.id))
            })?;
            streams.insert(modality.clone(), stream);
        }
        ds.records.push(SequenceRecord {
            id: mrec.id.clone(),
            label_text: mrec.label_text.clone(),
            label_phonemes: mrec.label_phonemes.clone(),
            streams,
        });
    }
    ds.validate()?;
    Ok(ds)
}

/// Write a dataset directory in the manifest + CSV layout that
/// `load_dataset` reads. Stream files are named by record index and
/// modality, so ids are free to contain any characters.
pub fn save_dataset(dir: &Path, ds: &Dataset) -> Result<()> {
    ds.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut records = Vec::with_capacity(ds.records.len());
    for (idx, rec) in ds.records.iter().enumerate() {
        let mut streams = BTreeMap::new();
        for (modality, stream) in &rec.streams {
            let file = format!("r{idx:05}.{modality}.csv");
            write_stream_csv(&dir.join(&file), stream)?;
            streams.insert(modality.clone(), file);
        }
        records.push(ManifestRecord {
            id: rec.id.clone(),
            label_text: rec.label_text.clone(),
            label_phonemes: rec.label_phonemes.clone(),
            streams,
        });
    }
    let embeddings = match &ds.embedding_table {
        Some(table) => {
            let file = "embeddings.txt".to_string();
            save_embeddings(&dir.join(&file), table)?;
            Some(file)
        }
        None => None,
    };
    let lexicon = match &ds.lexicon {
        Some(table) => {
            let file = "lexicon.json".to_string();
            let json = serde_json::to_string_pretty(table)
                .map_err(|e| Error::format(format!("lexicon serialisation failed: {e}")))?;
            fs::write(dir.join(&file), json).map_err(|e| Error::io(dir.join(&file), e))?;
            Some(file)
        }
        None => None,
    };
    let manifest = Manifest {
        format_version: DATASET_FORMAT_VERSION,
        modalities: ds
            .modalities
            .iter()
            .map(|(name, dim)| ManifestModality {
                name: name.clone(),
                dim: *dim,
            })
            .collect(),
        alphabet: ds.alphabet.clone(),
        embeddings,
        lexicon,
        norms: ds.norms.clone(),
        records,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::format(format!("manifest serialisation failed: {e}")))?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

/// Load a text word-vector table: one token followed by its
/// space-separated components per line.
pub fn load_embeddings(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut table = BTreeMap::new();
    let mut dim: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().unwrap().to_string();
        let values: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>().map_err(|_| {
                    Error::format(format!(
                        "{}:{}: '{p}' is not a number",
                        path.display(),
                        lineno + 1
                    ))
                })
            })
            .collect::<Result<_>>()?;
        if values.is_empty() {
            return Err(Error::format(format!(
                "{}:{}: token '{token}' has no vector",
                path.display(),
                lineno + 1
            )));
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::format(format!(
                    "{}:{}: vector length {} differs from {d}",
                    path.display(),
                    lineno + 1,
                    values.len()
                )))
            }
            _ => {}
        }
        if table.insert(token.clone(), values).is_some() {
            return Err(Error::format(format!(
                "{}:{}: duplicate token '{token}'",
                path.display(),
                lineno + 1
            )));
        }
    }
    if table.is_empty() {
        return Err(Error::format(format!("{}: empty embedding table", path.display())));
    }
    Ok(table)
}

fn save_embeddings(path: &Path, table: &BTreeMap<String, Vec<f64>>) -> Result<()> {
    let mut out = String::new();
    for (token, values) in table {
        out.push_str(token);
        for v in values {
            out.push(' ');
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Load a pronunciation lexicon: JSON map word → phoneme list.
pub fn load_lexicon(path: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let table: BTreeMap<String, Vec<String>> = serde_json::from_str(&text)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
    for (word, phonemes) in &table {
        if phonemes.is_empty() {
            return Err(Error::format(format!(
                "{}: word '{word}' has no phonemes",
                path.display()
            )));
        }
    }
    Ok(table)
}
