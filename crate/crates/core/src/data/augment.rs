use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::dataset::{Dataset, SequenceRecord, SIL};
use crate::error::{Error, Result};
use crate::numeric::Rng;

/// Part of speech eligible for synonym substitution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartOfSpeech {
    Noun,
    Verb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynonymEntry {
    pub pos: PartOfSpeech,
    pub synonyms: Vec<String>,
}

/// Word → interchangeable replacements. Only words with an entry are
/// substituted; everything else passes through augmentation untouched.
pub type SynonymTable = BTreeMap<String, SynonymEntry>;

/// Load a synonym table: JSON map token → {pos, synonyms}. Every entry
/// must offer at least one replacement, and no replacement may equal its
/// key.
pub fn load_synonyms(path: &Path) -> Result<SynonymTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let table: SynonymTable = serde_json::from_str(&text)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
    validate_synonyms(&table)?;
    Ok(table)
}

pub fn validate_synonyms(table: &SynonymTable) -> Result<()> {
    for (word, entry) in table {
        if entry.synonyms.is_empty() {
            return Err(Error::invalid(format!("'{word}' has no synonyms")));
        }
        if entry.synonyms.iter().any(|s| s == word) {
            return Err(Error::invalid(format!("'{word}' lists itself as a synonym")));
        }
    }
    Ok(())
}

/// Spell a multi-word label as phonemes: a leading silence token, then
/// each word's pronunciation from the lexicon, words separated by (and the
/// whole label terminated with) the silence token.
///
/// Utterances open with silence for the same reason recorded speech does —
/// and the silent first step also gives a decoder's context one step to
/// propagate down the layer hierarchy before the first phoneme is due.
pub fn spell_label(words: &[String], lexicon: &BTreeMap<String, Vec<String>>) -> Result<Vec<String>> {
    let mut out = vec![SIL.to_string()];
    for word in words {
        let phonemes = lexicon
            .get(word)
            .ok_or_else(|| Error::token(format!("no pronunciation for '{word}'")))?;
        out.extend(phonemes.iter().cloned());
        out.push(SIL.to_string());
    }
    Ok(out)
}

/// Expand a dataset: each record keeps its original and gains
/// `variants_per_record` copies with table-covered label words swapped for
/// random synonyms and i.i.d. Gaussian noise (std `sigma`) added to every
/// stream value. Variant ids derive from the source id, and phonetic
/// labels are re-spelled through the dataset's lexicon whenever a word
/// changed.
pub fn augment(
    ds: &Dataset,
    syn: &SynonymTable,
    sigma: f64,
    variants_per_record: usize,
    rng: &mut Rng,
) -> Result<Dataset> {
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("noise std {sigma} must be ≥ 0")));
    }
    validate_synonyms(syn)?;
    let mut out = ds.clone();
    out.records.clear();
    for rec in &ds.records {
        out.records.push(rec.clone());
        for variant in 1..=variants_per_record {
            let mut label_text = rec.label_text.clone();
            let mut replaced = false;
            for word in label_text.iter_mut() {
                if let Some(entry) = syn.get(word) {
                    *word = entry.synonyms[rng.below(entry.synonyms.len())].clone();
                    replaced = true;
                }
            }
            let label_phonemes = if replaced && !rec.label_phonemes.is_empty() {
                let lexicon = ds.lexicon.as_ref().ok_or_else(|| {
                    Error::invalid(format!(
                        "record '{}' needs its phonemes re-spelled but the dataset has no lexicon",
                        rec.id
                    ))
                })?;
                spell_label(&label_text, lexicon)?
            } else {
                rec.label_phonemes.clone()
            };
            let mut streams = rec.streams.clone();
            if sigma > 0.0 {
                for stream in streams.values_mut() {
                    for v in stream.as_mut_slice() {
                        *v += rng.normal_scaled(0.0, sigma);
                    }
                }
            }
            out.records.push(SequenceRecord {
                id: format!("{}~v{variant}", rec.id),
                label_text,
                label_phonemes,
                streams,
            });
        }
    }
    out.validate()?;
    Ok(out)
}
