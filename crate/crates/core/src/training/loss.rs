use crate::data::Representation;
use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// Probabilities are clamped here before the log so that a fully confident
/// wrong prediction costs −ln(10⁻¹²) ≈ 27.6 instead of infinity.
pub const CE_PROB_FLOOR: f64 = 1e-12;

/// Sequence loss between predicted rows and target rows of equal shape.
///
/// Phonetic: cross-entropy −Σ t·ln(max(p, 10⁻¹²)) per step, averaged over
/// steps. Embedding: squared error averaged over dimensions per step,
/// averaged over steps. Zero steps cost zero.
pub fn loss(pred: &Matrix, target: &Matrix, representation: Representation) -> Result<f64> {
    if pred.rows() != target.rows() || pred.cols() != target.cols() {
        return Err(Error::shape(format!(
            "prediction is {}x{}, target is {}x{}",
            pred.rows(),
            pred.cols(),
            target.rows(),
            target.cols()
        )));
    }
    if pred.rows() == 0 {
        return Ok(0.0);
    }
    if pred.cols() == 0 {
        return Err(Error::shape("zero-width rows have no loss"));
    }
    let steps = pred.rows() as f64;
    let mut total = 0.0;
    match representation {
        Representation::Phonetic => {
            for (p, t) in pred.iter_rows().zip(target.iter_rows()) {
                for (&pi, &ti) in p.iter().zip(t) {
                    if ti != 0.0 {
                        total -= ti * pi.max(CE_PROB_FLOOR).ln();
                    }
                }
            }
        }
        Representation::Embedding => {
            let dims = pred.cols() as f64;
            for (p, t) in pred.iter_rows().zip(target.iter_rows()) {
                let mut row = 0.0;
                for (&pi, &ti) in p.iter().zip(t) {
                    let d = pi - ti;
                    row += d * d;
                }
                total += row / dims;
            }
        }
    }
    Ok(total / steps)
}
