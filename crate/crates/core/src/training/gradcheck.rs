use std::fmt;

use crate::data::SequenceRecord;
use crate::error::{Error, Result};
use crate::grounding::{Feedback, GroundingModel};
use crate::numeric::Matrix;
use crate::training::bptt::{bptt_gradients, forward_loss};
use crate::training::grads::{model_arrays_mut, GradientSet};

/// Denominator floor for relative errors: where both gradients are smaller
/// than this, absolute error is compared against it instead, so near-zero
/// partials don't divide rounding noise by rounding noise.
const REL_DENOM_FLOOR: f64 = 1e-3;

/// Finite-difference verdict for one parameter array.
#[derive(Debug, Clone)]
pub struct ArrayCheck {
    pub name: String,
    pub max_rel: f64,
    pub mean_rel: f64,
    /// Number of scalars compared.
    pub checked: usize,
}

/// Outcome of a full gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub arrays: Vec<ArrayCheck>,
    /// Worst relative error over every scalar.
    pub max_rel: f64,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel < self.tol
    }

    pub fn param_count(&self) -> usize {
        self.arrays.iter().map(|a| a.checked).sum()
    }

    /// The array with the worst error, if any scalars were checked.
    pub fn worst(&self) -> Option<&ArrayCheck> {
        self.arrays
            .iter()
            .filter(|a| a.checked > 0)
            .max_by(|a, b| a.max_rel.total_cmp(&b.max_rel))
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<24} {:>12} {:>12} {:>8}", "array", "max rel", "mean rel", "params")?;
        for a in &self.arrays {
            writeln!(
                f,
                "{:<24} {:>12.3e} {:>12.3e} {:>8}",
                a.name, a.max_rel, a.mean_rel, a.checked
            )?;
        }
        write!(
            f,
            "worst {:.3e} against tolerance {:.3e}: {}",
            self.max_rel,
            self.tol,
            if self.passed() { "pass" } else { "FAIL" }
        )
    }
}

/// Verify the analytic gradients of every parameter against central finite
/// differences of the loss: (L(θ+h) − L(θ−h)) / 2h, one parameter at a
/// time. Intended for small models — the cost is two forward passes per
/// parameter.
pub fn grad_check(
    model: &GroundingModel,
    record: &SequenceRecord,
    targets: &Matrix,
    feedback: Feedback,
    h: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    let (_, analytic) = bptt_gradients(model, record, targets, feedback)?;
    grad_check_against(model, record, targets, feedback, h, tol, &analytic)
}

/// The comparison itself, factored out so a caller-supplied gradient — for
/// example a deliberately corrupted one, to prove the detector detects —
/// can be fed through the same path.
pub fn grad_check_against(
    model: &GroundingModel,
    record: &SequenceRecord,
    targets: &Matrix,
    feedback: Feedback,
    h: f64,
    tol: f64,
    analytic: &GradientSet,
) -> Result<GradCheckReport> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("step size {h} must be positive")));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance {tol} must be positive")));
    }
    let mut work = model.clone();
    let layout: Vec<(String, usize)> = model_arrays_mut(&mut work)
        .iter()
        .map(|(n, a)| (n.clone(), a.len()))
        .collect();
    let a_arrays = analytic.arrays();
    if a_arrays.len() != layout.len()
        || a_arrays
            .iter()
            .zip(&layout)
            .any(|((an, a), (mn, len))| an != mn || a.len() != *len)
    {
        return Err(Error::shape(
            "analytic gradient layout does not match the model's parameter arrays",
        ));
    }

    let mut arrays = Vec::with_capacity(layout.len());
    let mut overall = 0.0_f64;
    for (ai, (name, len)) in layout.iter().enumerate() {
        let mut max_rel = 0.0_f64;
        let mut sum_rel = 0.0_f64;
        for k in 0..*len {
            let orig = model_arrays_mut(&mut work)[ai].1[k];
            model_arrays_mut(&mut work)[ai].1[k] = orig + h;
            let up = forward_loss(&work, record, targets, feedback)?;
            model_arrays_mut(&mut work)[ai].1[k] = orig - h;
            let down = forward_loss(&work, record, targets, feedback)?;
            model_arrays_mut(&mut work)[ai].1[k] = orig;
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::invalid(format!(
                    "non-finite loss while perturbing {name}[{k}]"
                )));
            }
            let numeric = (up - down) / (2.0 * h);
            let a = a_arrays[ai].1[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_DENOM_FLOOR);
            max_rel = max_rel.max(rel);
            sum_rel += rel;
        }
        overall = overall.max(max_rel);
        arrays.push(ArrayCheck {
            name: name.clone(),
            max_rel,
            mean_rel: if *len > 0 { sum_rel / *len as f64 } else { 0.0 },
            checked: *len,
        });
    }
    Ok(GradCheckReport {
        arrays,
        max_rel: overall,
        tol,
    })
}
