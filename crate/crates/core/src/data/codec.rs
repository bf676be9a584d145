use serde::{Deserialize, Serialize};

use crate::data::dataset::{Dataset, SequenceRecord, SIL};
use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// How labels are presented to (and read from) the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Representation {
    /// One phoneme per decoder step, one-hot over the alphabet; softmax
    /// readout.
    Phonetic,
    /// One word per decoder step as its embedding vector; linear readout.
    Embedding,
}

impl Representation {
    pub fn name(self) -> &'static str {
        match self {
            Representation::Phonetic => "phonetic",
            Representation::Embedding => "embedding",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "phonetic" => Ok(Representation::Phonetic),
            "embedding" => Ok(Representation::Embedding),
            other => Err(Error::invalid(format!(
                "unknown representation '{other}' (expected phonetic or embedding)"
            ))),
        }
    }
}

/// The 39 ARPAbet phonemes, silence, and four punctuation marks: the
/// default 44-token output inventory. Datasets may override it.
pub fn default_phonetic_alphabet() -> Vec<String> {
    let mut tokens: Vec<String> = [
        "AA", "AE", "AH", "AO", "AW", "AY", "B", "CH", "D", "DH", "EH", "ER", "EY", "F", "G",
        "HH", "IH", "IY", "JH", "K", "L", "M", "N", "NG", "OW", "OY", "P", "R", "S", "SH", "T",
        "TH", "UH", "UW", "V", "W", "Y", "Z", "ZH",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    tokens.push(SIL.to_string());
    for p in [".", ",", "?", "!"] {
        tokens.push(p.to_string());
    }
    tokens
}

/// Target matrix for one record: phonetic mode yields one one-hot row per
/// phoneme; embedding mode yields one table row per word of the text label.
pub fn encode_label(record: &SequenceRecord, codec: Representation, ds: &Dataset) -> Result<Matrix> {
    match codec {
        Representation::Phonetic => {
            if record.label_phonemes.is_empty() {
                return Err(Error::invalid(format!(
                    "record '{}' has an empty phoneme label",
                    record.id
                )));
            }
            let vocab = ds.alphabet.len();
            let mut out = Matrix::zeros(record.label_phonemes.len(), vocab);
            for (t, phoneme) in record.label_phonemes.iter().enumerate() {
                let idx = ds
                    .alphabet
                    .iter()
                    .position(|a| a == phoneme)
                    .ok_or_else(|| Error::token(format!("phoneme '{phoneme}' not in alphabet")))?;
                out.set(t, idx, 1.0);
            }
            Ok(out)
        }
        Representation::Embedding => {
            if record.label_text.is_empty() {
                return Err(Error::invalid(format!(
                    "record '{}' has an empty text label",
                    record.id
                )));
            }
            let table = ds
                .embedding_table
                .as_ref()
                .ok_or_else(|| Error::invalid("dataset has no embedding table"))?;
            let rows: Vec<Vec<f64>> = record
                .label_text
                .iter()
                .map(|word| {
                    table
                        .get(word)
                        .cloned()
                        .ok_or_else(|| Error::token(format!("word '{word}' not in embedding table")))
                })
                .collect::<Result<_>>()?;
            Matrix::from_rows(&rows)
        }
    }
}
