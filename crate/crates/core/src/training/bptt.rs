use crate::data::{Representation, SequenceRecord};
use crate::error::{Error, Result};
use crate::grounding::{
    forward_grounded, Coupling, DecodeTrace, DecoderNet, Feedback, GroundingModel,
};
use crate::numeric::{axpy, dot, Matrix};
use crate::rnn::{LayerRole, MtrnnParams, MtrnnTrace};
use crate::training::grads::{GradientSet, MtrnnGrads};
use crate::training::loss::{loss, CE_PROB_FLOOR};

/// Forward pass plus loss, shared by training and gradient checking. In
/// teacher-forced mode the targets double as the teacher inputs.
pub(crate) fn forward_loss(
    model: &GroundingModel,
    record: &SequenceRecord,
    targets: &Matrix,
    feedback: Feedback,
) -> Result<f64> {
    let teacher = (feedback == Feedback::TeacherForced).then_some(targets);
    let trace = forward_grounded(model, record, feedback, teacher)?;
    loss(trace.outputs(), targets, model.representation())
}

/// Loss and exact gradients for one record by backpropagation through time.
///
/// The gradient covers every trainable array: connection weights, biases,
/// readout, the affine coupling, adaptive timescale parameters, and (for
/// standalone decoders) the record's context bias. In self-feedback mode
/// the path through the fed-back output distribution is included, so the
/// gradient is exact for the loss actually computed. Hard self-feedback is
/// rejected: its argmax is not differentiable.
pub fn bptt_gradients(
    model: &GroundingModel,
    record: &SequenceRecord,
    targets: &Matrix,
    feedback: Feedback,
) -> Result<(f64, GradientSet)> {
    if feedback == Feedback::HardSelfFeedback {
        return Err(Error::invalid(
            "hard self-feedback is not differentiable; train teacher-forced or with soft self-feedback",
        ));
    }
    if targets.cols() != model.vocab() {
        return Err(Error::shape(format!(
            "targets are {}-wide, the decoder outputs {}",
            targets.cols(),
            model.vocab()
        )));
    }
    let teacher = (feedback == Feedback::TeacherForced).then_some(targets);
    let trace = forward_grounded(model, record, feedback, teacher)?;
    if trace.dec.outputs.rows() != targets.rows() {
        return Err(Error::shape(format!(
            "record '{}' decodes {} steps, targets have {} rows",
            record.id,
            trace.dec.outputs.rows(),
            targets.rows()
        )));
    }
    let loss_value = loss(trace.outputs(), targets, model.representation())?;
    if !loss_value.is_finite() {
        return Err(Error::invalid(format!(
            "non-finite loss on record '{}'",
            record.id
        )));
    }

    let mut grads = GradientSet::zeros_like(model);
    let steps = targets.rows();
    let dt = model.step.dt;

    // Gradient of the loss with respect to the raw readout rows. The
    // feedback path adds to this during the decoder sweep.
    let g_read = readout_loss_grads(&model.decoder, &trace.dec, targets, steps);

    let mut hooks = DecoderHooks {
        net: &model.decoder,
        dec: &trace.dec,
        feedback,
        g_read,
        g_w_out: Matrix::zeros(model.decoder.w_out.rows(), model.decoder.w_out.cols()),
        g_b_out: vec![0.0; model.decoder.b_out.len()],
    };
    let g_z0 = backward_stack(
        &model.decoder.mtrnn,
        &trace.dec.trace,
        &trace.dec.inputs,
        dt,
        &mut grads.decoder,
        &mut hooks,
    );
    grads.w_out = hooks.g_w_out;
    grads.b_out = hooks.g_b_out;

    // The decoder's initial slow-layer potentials carry the context; their
    // cell-assembly slice is the gradient of whatever provided it.
    let cs = model
        .decoder
        .mtrnn
        .layer_index(LayerRole::Cs)
        .expect("decoder validated");
    let csc = model.decoder.csc_units();
    let g_assembled = &g_z0[cs][..csc];

    if model.encoders.is_empty() {
        grads
            .context_bias
            .get_mut(&record.id)
            .expect("forward found the record's table entry")
            .copy_from_slice(g_assembled);
    } else {
        let mut concat = Vec::with_capacity(model.enc_context_dim());
        for c in &trace.contexts {
            concat.extend_from_slice(&c.values);
        }
        let g_concat: Vec<f64> = match &model.coupling {
            Coupling::Identity => g_assembled.to_vec(),
            Coupling::Affine { w, .. } => {
                grads
                    .coupling_w
                    .as_mut()
                    .expect("affine coupling mirrored")
                    .add_outer(g_assembled, &concat);
                axpy(1.0, g_assembled, grads.coupling_b.as_mut().expect("affine coupling mirrored"));
                w.tr_matvec(g_assembled)
            }
        };
        let mut offset = 0;
        for (e, enc) in model.encoders.iter().enumerate() {
            let width = enc.csc_units();
            let g_ctx = &g_concat[offset..offset + width];
            offset += width;
            let enc_trace = &trace.enc_traces[e];
            let cs_e = enc
                .mtrnn
                .layer_index(LayerRole::Cs)
                .expect("encoder validated");
            let mut hooks = EncoderHooks {
                g_ctx,
                cs: cs_e,
                t_final: enc_trace.steps(),
            };
            backward_stack(
                &enc.mtrnn,
                enc_trace,
                &record.streams[&model.modalities[e]],
                dt,
                &mut grads.encoders[e],
                &mut hooks,
            );
        }
    }
    Ok((loss_value, grads))
}

/// ∂loss/∂readout row by row, before any feedback contributions.
fn readout_loss_grads(
    net: &DecoderNet,
    dec: &DecodeTrace,
    targets: &Matrix,
    steps: usize,
) -> Matrix {
    let width = net.out_dim();
    let mut g_read = Matrix::zeros(steps, width);
    match net.representation {
        Representation::Phonetic => {
            // Cross-entropy through the temperature softmax. Where the
            // floor clamps a probability the loss is locally constant and
            // the term contributes nothing.
            let scale = 1.0 / (net.temperature * steps as f64);
            for s in 0..steps {
                let p = dec.outputs.row(s);
                let t_row = targets.row(s);
                let mut g_p = vec![0.0; width];
                let mut dotv = 0.0;
                for k in 0..width {
                    if t_row[k] != 0.0 && p[k] >= CE_PROB_FLOOR {
                        g_p[k] = -t_row[k] / p[k];
                        dotv += p[k] * g_p[k];
                    }
                }
                let row = g_read.row_mut(s);
                for k in 0..width {
                    row[k] = p[k] * (g_p[k] - dotv) * scale;
                }
            }
        }
        Representation::Embedding => {
            let scale = 2.0 / (steps as f64 * width as f64);
            for s in 0..steps {
                let p = dec.outputs.row(s);
                let t_row = targets.row(s);
                let row = g_read.row_mut(s);
                for k in 0..width {
                    row[k] = (p[k] - t_row[k]) * scale;
                }
            }
        }
    }
    g_read
}

/// Extension points of the shared stack sweep. The decoder injects readout
/// gradients at every step and turns input gradients into feedback-path
/// contributions; an encoder injects the context gradient at its final
/// step only.
trait StackHooks {
    /// Add external gradient w.r.t. the layer activations at trace step t
    /// (t ≥ 1). Called once per step, before the step is propagated.
    fn inject_y(&mut self, t: usize, g_y: &mut [Vec<f64>]);
    /// Whether the sweep should compute input gradients at all.
    fn wants_input_grads(&self) -> bool {
        false
    }
    /// Receive ∂loss/∂inputs[row]; only called when wanted.
    fn consume_g_x(&mut self, _input_row: usize, _g_x: &[f64]) {}
}

/// Reverse sweep over one stack's trace. Accumulates parameter gradients
/// into `grads` and returns the gradient with respect to the initial
/// potentials of every layer (the context path for decoders).
///
/// Per step t (from the last to the first):
///   g_z[t] = g_y[t]·(1 − y²) + (1 − Δt/τ)·g_z[t+1]
///   g_d[t] = (Δt/τ)·g_z[t]
///   g_u    += g_z[t]·(d[t] − z[t−1])·(−Δt(τ−1)/τ²)   (adaptive only)
/// and g_d[t] fans out to the bias, the weights (outer products with the
/// previous step's activations), and the previous step's g_y.
fn backward_stack(
    params: &MtrnnParams,
    trace: &MtrnnTrace,
    inputs: &Matrix,
    dt: f64,
    grads: &mut MtrnnGrads,
    hooks: &mut dyn StackHooks,
) -> Vec<Vec<f64>> {
    let n_layers = params.layers.len();
    let steps = trace.steps();
    debug_assert_eq!(inputs.rows(), steps);
    let mut g_y: Vec<Vec<f64>> = params
        .layers
        .iter()
        .map(|l| vec![0.0; l.spec.units])
        .collect();
    let mut g_z_next: Vec<Vec<f64>> = g_y.clone();
    let mut g_z: Vec<Vec<f64>> = g_y.clone();
    let want_x = hooks.wants_input_grads();
    for t in (1..=steps).rev() {
        hooks.inject_y(t, &mut g_y);
        for l in 0..n_layers {
            let lp = &params.layers[l];
            let st = &trace.states[t][l];
            for i in 0..lp.spec.units {
                let a = dt / lp.timescales.effective(i);
                g_z[l][i] = g_y[l][i] * (1.0 - st.y[i] * st.y[i]) + (1.0 - a) * g_z_next[l][i];
            }
        }
        for gy in &mut g_y {
            for v in gy.iter_mut() {
                *v = 0.0;
            }
        }
        for l in 0..n_layers {
            let lp = &params.layers[l];
            let lg = &mut grads.layers[l];
            let prev = &trace.states[t - 1];
            let drive = &trace.drives[t - 1][l];
            let mut gd = vec![0.0; lp.spec.units];
            for i in 0..lp.spec.units {
                let tau = lp.timescales.effective(i);
                gd[i] = (dt / tau) * g_z[l][i];
            }
            if lp.timescales.trainable() {
                for i in 0..lp.spec.units {
                    let tau = lp.timescales.effective(i);
                    lg.u[i] +=
                        g_z[l][i] * (drive[i] - prev[l].z[i]) * (-dt * (tau - 1.0) / (tau * tau));
                }
            }
            axpy(1.0, &gd, &mut lg.bias);
            lg.w_rec.add_outer(&gd, &prev[l].y);
            lp.w_rec.tr_matvec_add(&gd, &mut g_y[l]);
            if let Some(w) = &lp.w_lower {
                lg.w_lower
                    .as_mut()
                    .expect("gradients mirror the stack")
                    .add_outer(&gd, &prev[l - 1].y);
                w.tr_matvec_add(&gd, &mut g_y[l - 1]);
            }
            if let Some(w) = &lp.w_upper {
                lg.w_upper
                    .as_mut()
                    .expect("gradients mirror the stack")
                    .add_outer(&gd, &prev[l + 1].y);
                w.tr_matvec_add(&gd, &mut g_y[l + 1]);
            }
            if l == 0 {
                grads.w_in.add_outer(&gd, inputs.row(t - 1));
                if want_x {
                    let g_x = params.w_in.tr_matvec(&gd);
                    hooks.consume_g_x(t - 1, &g_x);
                }
            }
        }
        std::mem::swap(&mut g_z_next, &mut g_z);
    }
    (0..n_layers)
        .map(|l| {
            let lp = &params.layers[l];
            let st = &trace.states[0][l];
            (0..lp.spec.units)
                .map(|i| {
                    let a = dt / lp.timescales.effective(i);
                    g_y[l][i] * (1.0 - st.y[i] * st.y[i]) + (1.0 - a) * g_z_next[l][i]
                })
                .collect()
        })
        .collect()
}

struct DecoderHooks<'a> {
    net: &'a DecoderNet,
    dec: &'a DecodeTrace,
    feedback: Feedback,
    /// steps × out_dim gradient w.r.t. the raw readout.
    g_read: Matrix,
    g_w_out: Matrix,
    g_b_out: Vec<f64>,
}

impl StackHooks for DecoderHooks<'_> {
    fn inject_y(&mut self, t: usize, g_y: &mut [Vec<f64>]) {
        let g = self.g_read.row(t - 1);
        self.g_w_out.add_outer(g, &self.dec.trace.states[t][0].y);
        axpy(1.0, g, &mut self.g_b_out);
        self.net.w_out.tr_matvec_add(g, &mut g_y[0]);
    }

    fn wants_input_grads(&self) -> bool {
        self.feedback == Feedback::SelfFeedback
    }

    fn consume_g_x(&mut self, input_row: usize, g_x: &[f64]) {
        if input_row == 0 {
            // the first input is a constant zero vector
            return;
        }
        // input row r was built from output row r−1
        let s = input_row - 1;
        match self.net.representation {
            Representation::Phonetic => {
                // back through p = softmax(readout/T)
                let p = self.dec.outputs.row(s);
                let dotv = dot(p, g_x);
                let temp = self.net.temperature;
                let row = self.g_read.row_mut(s);
                for k in 0..row.len() {
                    row[k] += p[k] * (g_x[k] - dotv) / temp;
                }
            }
            Representation::Embedding => {
                axpy(1.0, g_x, self.g_read.row_mut(s));
            }
        }
    }
}

struct EncoderHooks<'a> {
    /// Gradient w.r.t. this encoder's context vector.
    g_ctx: &'a [f64],
    cs: usize,
    t_final: usize,
}

impl StackHooks for EncoderHooks<'_> {
    fn inject_y(&mut self, t: usize, g_y: &mut [Vec<f64>]) {
        if t == self.t_final {
            axpy(1.0, self.g_ctx, &mut g_y[self.cs][..self.g_ctx.len()]);
        }
    }
}
