use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::grounding::{Coupling, GroundingModel};
use crate::numeric::Matrix;
use crate::rnn::MtrnnParams;

/// Gradients of one layer's parameters, shaped exactly like the layer.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub w_rec: Matrix,
    pub w_lower: Option<Matrix>,
    pub w_upper: Option<Matrix>,
    pub bias: Vec<f64>,
    /// Gradient of the per-unit timescale parameter u. Always allocated at
    /// layer width for the backward pass's convenience, but it only counts
    /// as a parameter array when the layer's timescales are adaptive.
    pub u: Vec<f64>,
    pub u_trainable: bool,
}

/// Gradients of one stack.
#[derive(Debug, Clone)]
pub struct MtrnnGrads {
    pub w_in: Matrix,
    pub layers: Vec<LayerGrads>,
}

impl MtrnnGrads {
    pub fn zeros_like(params: &MtrnnParams) -> Self {
        let w_in = Matrix::zeros(params.w_in.rows(), params.w_in.cols());
        let layers = params
            .layers
            .iter()
            .map(|lp| LayerGrads {
                w_rec: Matrix::zeros(lp.w_rec.rows(), lp.w_rec.cols()),
                w_lower: lp.w_lower.as_ref().map(|w| Matrix::zeros(w.rows(), w.cols())),
                w_upper: lp.w_upper.as_ref().map(|w| Matrix::zeros(w.rows(), w.cols())),
                bias: vec![0.0; lp.bias.len()],
                u: vec![0.0; lp.spec.units],
                u_trainable: lp.timescales.trainable(),
            })
            .collect();
        MtrnnGrads { w_in, layers }
    }
}

/// Gradient of every trainable array of a grounding model, in the model's
/// own shapes. Produced by backpropagation through time, consumed by the
/// optimiser; addition and scaling make batch averaging trivial.
#[derive(Debug, Clone)]
pub struct GradientSet {
    pub encoders: Vec<MtrnnGrads>,
    /// Present exactly when the model's coupling is affine.
    pub coupling_w: Option<Matrix>,
    pub coupling_b: Option<Vec<f64>>,
    pub decoder: MtrnnGrads,
    pub w_out: Matrix,
    pub b_out: Vec<f64>,
    /// One entry per table entry of the model (zeros for records a pass did
    /// not touch), so two sets over the same model always align.
    pub context_bias: BTreeMap<String, Vec<f64>>,
}

impl GradientSet {
    pub fn zeros_like(model: &GroundingModel) -> Self {
        let (coupling_w, coupling_b) = match &model.coupling {
            Coupling::Identity => (None, None),
            Coupling::Affine { w, b } => {
                (Some(Matrix::zeros(w.rows(), w.cols())), Some(vec![0.0; b.len()]))
            }
        };
        GradientSet {
            encoders: model
                .encoders
                .iter()
                .map(|e| MtrnnGrads::zeros_like(&e.mtrnn))
                .collect(),
            coupling_w,
            coupling_b,
            decoder: MtrnnGrads::zeros_like(&model.decoder.mtrnn),
            w_out: Matrix::zeros(model.decoder.w_out.rows(), model.decoder.w_out.cols()),
            b_out: vec![0.0; model.decoder.b_out.len()],
            context_bias: model
                .decoder
                .context_bias_table
                .iter()
                .map(|(id, z)| (id.clone(), vec![0.0; z.len()]))
                .collect(),
        }
    }

    /// The gradient arrays in canonical order: encoders (slot order; per
    /// stack w_in, then per layer w_rec, w_lower, w_upper, bias, u),
    /// coupling, decoder stack, readout, context table (id order). This is
    /// the one ordering shared with [`model_arrays_mut`]; the optimiser's
    /// accumulators index into it.
    pub fn arrays(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (i, enc) in self.encoders.iter().enumerate() {
            mtrnn_grad_arrays(&format!("enc{i}"), enc, &mut out);
        }
        if let Some(w) = &self.coupling_w {
            out.push(("coupling.w".to_string(), w.as_slice()));
        }
        if let Some(b) = &self.coupling_b {
            out.push(("coupling.b".to_string(), b.as_slice()));
        }
        mtrnn_grad_arrays("dec", &self.decoder, &mut out);
        out.push(("readout.w".to_string(), self.w_out.as_slice()));
        out.push(("readout.b".to_string(), self.b_out.as_slice()));
        for (id, z) in &self.context_bias {
            out.push((format!("context[{id}]"), z.as_slice()));
        }
        out
    }

    pub(crate) fn arrays_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::new();
        for (i, enc) in self.encoders.iter_mut().enumerate() {
            mtrnn_grad_arrays_mut(&format!("enc{i}"), enc, &mut out);
        }
        if let Some(w) = &mut self.coupling_w {
            out.push(("coupling.w".to_string(), w.as_mut_slice()));
        }
        if let Some(b) = &mut self.coupling_b {
            out.push(("coupling.b".to_string(), b.as_mut_slice()));
        }
        mtrnn_grad_arrays_mut("dec", &mut self.decoder, &mut out);
        out.push(("readout.w".to_string(), self.w_out.as_mut_slice()));
        out.push(("readout.b".to_string(), self.b_out.as_mut_slice()));
        for (id, z) in self.context_bias.iter_mut() {
            out.push((format!("context[{id}]"), z.as_mut_slice()));
        }
        out
    }

    /// Every gradient value in canonical order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (_, s) in self.arrays() {
            out.extend_from_slice(s);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.arrays().iter().map(|(_, s)| s.len()).sum()
    }

    /// `self += other`. Both sets must mirror the same model.
    pub fn add(&mut self, other: &GradientSet) -> Result<()> {
        let theirs = other.arrays();
        let mut ours = self.arrays_mut();
        if ours.len() != theirs.len() {
            return Err(Error::shape(format!(
                "gradient sets have {} and {} arrays",
                ours.len(),
                theirs.len()
            )));
        }
        for ((an, a), (bn, b)) in ours.iter_mut().zip(&theirs) {
            if an != bn || a.len() != b.len() {
                return Err(Error::shape(format!(
                    "gradient arrays disagree: {an}[{}] vs {bn}[{}]",
                    a.len(),
                    b.len()
                )));
            }
            for (x, y) in a.iter_mut().zip(*b) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for (_, a) in self.arrays_mut() {
            for v in a {
                *v *= s;
            }
        }
    }

    /// Euclidean norm over every gradient value.
    pub fn global_norm(&self) -> f64 {
        let mut acc = 0.0;
        for (_, a) in self.arrays() {
            for v in a {
                acc += v * v;
            }
        }
        acc.sqrt()
    }
}

fn mtrnn_grad_arrays<'a>(prefix: &str, g: &'a MtrnnGrads, out: &mut Vec<(String, &'a [f64])>) {
    out.push((format!("{prefix}.w_in"), g.w_in.as_slice()));
    for (l, lg) in g.layers.iter().enumerate() {
        let role = role_label(l);
        out.push((format!("{prefix}.{role}.w_rec"), lg.w_rec.as_slice()));
        if let Some(w) = &lg.w_lower {
            out.push((format!("{prefix}.{role}.w_lower"), w.as_slice()));
        }
        if let Some(w) = &lg.w_upper {
            out.push((format!("{prefix}.{role}.w_upper"), w.as_slice()));
        }
        out.push((format!("{prefix}.{role}.bias"), lg.bias.as_slice()));
        if lg.u_trainable {
            out.push((format!("{prefix}.{role}.u"), lg.u.as_slice()));
        }
    }
}

fn mtrnn_grad_arrays_mut<'a>(
    prefix: &str,
    g: &'a mut MtrnnGrads,
    out: &mut Vec<(String, &'a mut [f64])>,
) {
    out.push((format!("{prefix}.w_in"), g.w_in.as_mut_slice()));
    for (l, lg) in g.layers.iter_mut().enumerate() {
        let role = role_label(l);
        out.push((format!("{prefix}.{role}.w_rec"), lg.w_rec.as_mut_slice()));
        if let Some(w) = &mut lg.w_lower {
            out.push((format!("{prefix}.{role}.w_lower"), w.as_mut_slice()));
        }
        if let Some(w) = &mut lg.w_upper {
            out.push((format!("{prefix}.{role}.w_upper"), w.as_mut_slice()));
        }
        out.push((format!("{prefix}.{role}.bias"), lg.bias.as_mut_slice()));
        if lg.u_trainable {
            out.push((format!("{prefix}.{role}.u"), lg.u.as_mut_slice()));
        }
    }
}

/// Layer position → role label; stacks are validated io/cf/cs prefixes, so
/// position determines the role.
fn role_label(l: usize) -> &'static str {
    ["io", "cf", "cs"][l]
}

/// The model's trainable arrays, mutable, in the same canonical order and
/// under the same names as [`GradientSet::arrays`]. The optimiser and the
/// gradient checker walk the model through this.
pub(crate) fn model_arrays_mut(model: &mut GroundingModel) -> Vec<(String, &mut [f64])> {
    let mut out = Vec::new();
    for (i, enc) in model.encoders.iter_mut().enumerate() {
        mtrnn_param_arrays_mut(&format!("enc{i}"), &mut enc.mtrnn, &mut out);
    }
    match &mut model.coupling {
        Coupling::Identity => {}
        Coupling::Affine { w, b } => {
            out.push(("coupling.w".to_string(), w.as_mut_slice()));
            out.push(("coupling.b".to_string(), b.as_mut_slice()));
        }
    }
    mtrnn_param_arrays_mut("dec", &mut model.decoder.mtrnn, &mut out);
    out.push(("readout.w".to_string(), model.decoder.w_out.as_mut_slice()));
    out.push(("readout.b".to_string(), model.decoder.b_out.as_mut_slice()));
    for (id, z) in model.decoder.context_bias_table.iter_mut() {
        out.push((format!("context[{id}]"), z.as_mut_slice()));
    }
    out
}

fn mtrnn_param_arrays_mut<'a>(
    prefix: &str,
    m: &'a mut MtrnnParams,
    out: &mut Vec<(String, &'a mut [f64])>,
) {
    out.push((format!("{prefix}.w_in"), m.w_in.as_mut_slice()));
    for lp in m.layers.iter_mut() {
        let role = lp.spec.role.name();
        out.push((format!("{prefix}.{role}.w_rec"), lp.w_rec.as_mut_slice()));
        if let Some(w) = &mut lp.w_lower {
            out.push((format!("{prefix}.{role}.w_lower"), w.as_mut_slice()));
        }
        if let Some(w) = &mut lp.w_upper {
            out.push((format!("{prefix}.{role}.w_upper"), w.as_mut_slice()));
        }
        out.push((format!("{prefix}.{role}.bias"), lp.bias.as_mut_slice()));
        if lp.timescales.trainable() {
            out.push((format!("{prefix}.{role}.u"), lp.timescales.u.as_mut_slice()));
        }
    }
}

/// Number of trainable scalars in the model.
pub fn param_count(model: &GroundingModel) -> usize {
    GradientSet::zeros_like(model).param_count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grounding::{build_model, ModelConfig, Variant};
    use crate::numeric::Rng;

    fn grounded_config(variant: Variant) -> ModelConfig {
        let mut cfg = ModelConfig::default();
        cfg.variant = variant;
        cfg.modalities = vec![("touch".into(), 3), ("vision".into(), 2)];
        cfg.enc_io = 4;
        cfg.enc_cf = 3;
        cfg.enc_cs = 3;
        cfg.enc_csc = 2;
        cfg.dec_io = 4;
        cfg.dec_cf = 3;
        cfg.dec_cs = 3;
        cfg.dec_csc = 2;
        cfg.alphabet = (0..5).map(|i| format!("t{i}")).collect();
        cfg
    }

    fn standalone_config() -> ModelConfig {
        let mut cfg = grounded_config(Variant::Mtrnn);
        cfg.modalities.clear();
        cfg.bias_records = vec!["b".into(), "a".into(), "c".into()];
        cfg
    }

    #[test]
    fn zeros_mirror_model_layout() {
        for cfg in [grounded_config(Variant::Amtrnn), standalone_config()] {
            let mut model = build_model(&cfg, &mut Rng::new(3)).unwrap();
            let set = GradientSet::zeros_like(&model);
            let grad_layout: Vec<(String, usize)> = set
                .arrays()
                .iter()
                .map(|(n, s)| (n.clone(), s.len()))
                .collect();
            let model_layout: Vec<(String, usize)> = model_arrays_mut(&mut model)
                .iter()
                .map(|(n, s)| (n.clone(), s.len()))
                .collect();
            assert_eq!(grad_layout, model_layout);
            assert!(set.flatten().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn context_table_enumerates_in_id_order() {
        let model = build_model(&standalone_config(), &mut Rng::new(1)).unwrap();
        let set = GradientSet::zeros_like(&model);
        let names: Vec<String> = set
            .arrays()
            .iter()
            .map(|(n, _)| n.clone())
            .filter(|n| n.starts_with("context["))
            .collect();
        assert_eq!(names, vec!["context[a]", "context[b]", "context[c]"]);
    }

    #[test]
    fn adaptive_timescales_add_one_parameter_per_unit() {
        let fixed = build_model(&grounded_config(Variant::Mtrnn), &mut Rng::new(2)).unwrap();
        let adaptive = build_model(&grounded_config(Variant::Amtrnn), &mut Rng::new(2)).unwrap();
        let units_per_stack = 4 + 3 + 3;
        let stacks = 3; // two encoders and the decoder
        assert_eq!(
            param_count(&adaptive),
            param_count(&fixed) + units_per_stack * stacks
        );
    }

    #[test]
    fn add_and_scale_are_elementwise() {
        let model = build_model(&grounded_config(Variant::Mtrnn), &mut Rng::new(4)).unwrap();
        let mut a = GradientSet::zeros_like(&model);
        let mut b = GradientSet::zeros_like(&model);
        for (_, s) in a.arrays_mut() {
            for v in s {
                *v = 2.0;
            }
        }
        for (_, s) in b.arrays_mut() {
            for v in s {
                *v = 0.5;
            }
        }
        a.add(&b).unwrap();
        a.scale(2.0);
        assert!(a.flatten().iter().all(|&v| v == 5.0));
    }

    #[test]
    fn add_rejects_mismatched_sets() {
        let grounded = build_model(&grounded_config(Variant::Mtrnn), &mut Rng::new(5)).unwrap();
        let standalone = build_model(&standalone_config(), &mut Rng::new(5)).unwrap();
        let mut a = GradientSet::zeros_like(&grounded);
        let b = GradientSet::zeros_like(&standalone);
        assert!(a.add(&b).is_err());
    }

    #[test]
    fn global_norm_matches_flat_norm() {
        let model = build_model(&grounded_config(Variant::Amtrnn), &mut Rng::new(6)).unwrap();
        let mut g = GradientSet::zeros_like(&model);
        let mut k: f64 = 0.0;
        for (_, s) in g.arrays_mut() {
            for v in s {
                k += 1.0;
                *v = (k * 0.01).sin();
            }
        }
        let flat = g.flatten();
        let expect = flat.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((g.global_norm() - expect).abs() < 1e-12);
    }
}
