use serde::{Deserialize, Serialize};

use crate::data::{encode_label, Dataset, Representation};
use crate::error::{Error, Result};
use crate::grounding::{forward_grounded, Feedback, GroundingModel};
use crate::numeric::{argmax, dot, norm2, Matrix};

/// Turn decoder output rows back into tokens: per-row argmax over the
/// alphabet in phonetic mode (ties to the lowest index), nearest embedding
/// table entry by cosine similarity otherwise (ties to the first token in
/// table order; a zero-norm row or table entry never wins).
pub fn decode_tokens(
    pred: &Matrix,
    representation: Representation,
    ds: &Dataset,
) -> Result<Vec<String>> {
    if pred.rows() == 0 {
        return Ok(Vec::new());
    }
    match representation {
        Representation::Phonetic => {
            if pred.cols() != ds.alphabet.len() {
                return Err(Error::shape(format!(
                    "predictions are {}-wide, the alphabet has {} tokens",
                    pred.cols(),
                    ds.alphabet.len()
                )));
            }
            Ok(pred
                .iter_rows()
                .map(|row| ds.alphabet[argmax(row)].clone())
                .collect())
        }
        Representation::Embedding => {
            let table = ds
                .embedding_table
                .as_ref()
                .ok_or_else(|| Error::invalid("dataset has no embedding table to decode with"))?;
            if table.is_empty() {
                return Err(Error::invalid("embedding table is empty"));
            }
            let mut out = Vec::with_capacity(pred.rows());
            for row in pred.iter_rows() {
                let row_norm = norm2(row);
                let mut best: Option<(&String, f64)> = None;
                for (token, vector) in table {
                    if vector.len() != row.len() {
                        return Err(Error::shape(format!(
                            "embedding for '{token}' has {} dims, predictions have {}",
                            vector.len(),
                            row.len()
                        )));
                    }
                    let denom = row_norm * norm2(vector);
                    let sim = if denom > 0.0 { dot(row, vector) / denom } else { -1.0 };
                    match best {
                        Some((_, s)) if sim <= s => {}
                        _ => best = Some((token, sim)),
                    }
                }
                out.push(best.expect("non-empty table").0.clone());
            }
            Ok(out)
        }
    }
}

/// One record's predicted and target token sequences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordOutcome {
    pub id: String,
    pub predicted: Vec<String>,
    pub target: Vec<String>,
}

impl RecordOutcome {
    pub fn correct_steps(&self) -> usize {
        self.predicted
            .iter()
            .zip(&self.target)
            .filter(|(p, t)| p == t)
            .count()
    }

    pub fn exact(&self) -> bool {
        self.predicted == self.target
    }
}

/// Token-level and utterance-level accuracy over a set of records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccuracyReport {
    /// Correct token positions over all positions, pooled across records.
    pub per_step_accuracy: f64,
    /// Fraction of records whose every position is correct.
    pub utterance_exact_match: f64,
    pub records: usize,
    pub steps: usize,
    pub details: Vec<RecordOutcome>,
}

/// Pool per-record outcomes into a report. Predicted and target lengths
/// must agree per record (the decoder runs exactly target-length steps).
fn summarize(details: Vec<RecordOutcome>) -> Result<AccuracyReport> {
    if details.is_empty() {
        return Err(Error::invalid("accuracy over zero records is undefined"));
    }
    let mut steps = 0;
    let mut correct = 0;
    let mut exact = 0;
    for d in &details {
        if d.predicted.len() != d.target.len() {
            return Err(Error::shape(format!(
                "record '{}' predicted {} tokens against {} targets",
                d.id,
                d.predicted.len(),
                d.target.len()
            )));
        }
        steps += d.target.len();
        correct += d.correct_steps();
        exact += usize::from(d.exact());
    }
    if steps == 0 {
        return Err(Error::invalid("accuracy over zero token positions is undefined"));
    }
    Ok(AccuracyReport {
        per_step_accuracy: correct as f64 / steps as f64,
        utterance_exact_match: exact as f64 / details.len() as f64,
        records: details.len(),
        steps,
        details,
    })
}

/// Run the model over the given records (all of them when `indices` is
/// None) and score the decoded tokens against the labels.
pub fn accuracy(
    model: &GroundingModel,
    ds: &Dataset,
    indices: Option<&[usize]>,
    feedback: Feedback,
) -> Result<AccuracyReport> {
    let all: Vec<usize>;
    let chosen = match indices {
        Some(list) => list,
        None => {
            all = (0..ds.records.len()).collect();
            &all
        }
    };
    let mut details = Vec::with_capacity(chosen.len());
    for &i in chosen {
        let record = ds.records.get(i).ok_or_else(|| {
            Error::invalid(format!("record index {i} out of range for {} records", ds.len()))
        })?;
        let teacher;
        let teacher_ref = if feedback == Feedback::TeacherForced {
            teacher = encode_label(record, model.representation(), ds)?;
            Some(&teacher)
        } else {
            None
        };
        let trace = forward_grounded(model, record, feedback, teacher_ref)?;
        let predicted = decode_tokens(trace.outputs(), model.representation(), ds)?;
        let target = match model.representation() {
            Representation::Phonetic => record.label_phonemes.clone(),
            Representation::Embedding => record.label_text.clone(),
        };
        details.push(RecordOutcome {
            id: record.id.clone(),
            predicted,
            target,
        });
    }
    summarize(details)
}
