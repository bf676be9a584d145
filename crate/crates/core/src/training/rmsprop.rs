use crate::error::{Error, Result};
use crate::grounding::GroundingModel;
use crate::training::grads::{model_arrays_mut, param_count, GradientSet};

/// Per-parameter mean-square gradient accumulators, flat in the canonical
/// array order shared by [`GradientSet::arrays`] and the model.
#[derive(Debug, Clone)]
pub struct RmspropState {
    r: Vec<f64>,
}

impl RmspropState {
    pub fn new(model: &GroundingModel) -> Self {
        RmspropState {
            r: vec![0.0; param_count(model)],
        }
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    /// The raw accumulators, for inspection.
    pub fn accumulators(&self) -> &[f64] {
        &self.r
    }
}

/// One RMSprop step, elementwise over every trainable array:
///
///   r ← ρ·r + (1−ρ)·g²,   θ ← θ − lr·g / √(r + ε)
///
/// The gradient set must mirror the model (same arrays, names, lengths) and
/// the state must have been created for a model of the same layout; every
/// mismatch is reported before anything is modified, so a failed call
/// leaves the model untouched.
pub fn rmsprop_update(
    model: &mut GroundingModel,
    grads: &GradientSet,
    state: &mut RmspropState,
    learning_rate: f64,
    decay: f64,
    epsilon: f64,
) -> Result<()> {
    if !(learning_rate > 0.0 && learning_rate.is_finite()) {
        return Err(Error::invalid(format!("learning rate {learning_rate} must be positive")));
    }
    if !(0.0..1.0).contains(&decay) {
        return Err(Error::invalid(format!("decay {decay} must lie in [0, 1)")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!("epsilon {epsilon} must be positive")));
    }
    let g_arrays = grads.arrays();
    let mut p_arrays = model_arrays_mut(model);
    if g_arrays.len() != p_arrays.len() {
        return Err(Error::shape(format!(
            "gradient set has {} arrays, model has {}",
            g_arrays.len(),
            p_arrays.len()
        )));
    }
    let mut total = 0;
    for ((gn, g), (pn, p)) in g_arrays.iter().zip(&p_arrays) {
        if gn != pn || g.len() != p.len() {
            return Err(Error::shape(format!(
                "gradient array {gn}[{}] does not match model array {pn}[{}]",
                g.len(),
                p.len()
            )));
        }
        if !g.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid(format!("non-finite gradient in {gn}")));
        }
        total += g.len();
    }
    if total != state.r.len() {
        return Err(Error::shape(format!(
            "optimiser state tracks {} parameters, model has {total}",
            state.r.len()
        )));
    }

    let mut k = 0;
    for ((_, g), (_, p)) in g_arrays.iter().zip(p_arrays.iter_mut()) {
        for (theta, &gv) in p.iter_mut().zip(g.iter()) {
            let r = &mut state.r[k];
            *r = decay * *r + (1.0 - decay) * gv * gv;
            *theta -= learning_rate * gv / (*r + epsilon).sqrt();
            k += 1;
        }
    }
    Ok(())
}

/// Scale the whole gradient set down so its global (Euclidean) norm does
/// not exceed `max_norm`; gradients within the bound pass through
/// untouched. Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut GradientSet, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}
