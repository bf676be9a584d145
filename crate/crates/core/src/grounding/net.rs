use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Representation;
use crate::error::{Error, Result};
use crate::numeric::{argmax, softmax, Matrix};
use crate::rnn::{
    mtrnn_forward, mtrnn_step, LayerRole, LayerState, MtrnnParams, MtrnnTrace, StepConfig,
};

/// A sensory modality's context vector: the activation of the encoder's
/// cell-assembly units after the whole stream has been consumed. Bounded in
/// (−1, 1) per component since it is a tanh activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextVector {
    pub values: Vec<f64>,
}

impl ContextVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Encoder for one sensory modality: a full three-layer stack whose slow
/// layer's leading units summarise the sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderNet {
    /// Modality name, e.g. "vision"; fixes this encoder's slot in the
    /// assembled context.
    pub name: String,
    pub mtrnn: MtrnnParams,
}

impl EncoderNet {
    pub fn validate(&self) -> Result<()> {
        self.mtrnn.validate()?;
        let cs = self
            .mtrnn
            .layer_index(LayerRole::Cs)
            .ok_or_else(|| Error::invalid(format!("encoder '{}' lacks a cs layer", self.name)))?;
        if self.mtrnn.layers[cs].spec.csc_units == 0 {
            return Err(Error::invalid(format!(
                "encoder '{}' exposes no cell-assembly units",
                self.name
            )));
        }
        Ok(())
    }

    pub fn csc_units(&self) -> usize {
        self.mtrnn
            .layer_index(LayerRole::Cs)
            .map(|i| self.mtrnn.layers[i].spec.csc_units)
            .unwrap_or(0)
    }

    pub fn input_dim(&self) -> usize {
        self.mtrnn.input_dim
    }
}

/// Run an encoder over one stream (rows = steps) and abstract it into a
/// context vector: the final-step activations of the cell-assembly slice.
pub fn encode(
    net: &EncoderNet,
    stream: &Matrix,
    cfg: &StepConfig,
) -> Result<(ContextVector, MtrnnTrace)> {
    let trace = mtrnn_forward(&net.mtrnn, stream, net.mtrnn.zero_states(), cfg)?;
    let cs = net
        .mtrnn
        .layer_index(LayerRole::Cs)
        .ok_or_else(|| Error::invalid(format!("encoder '{}' lacks a cs layer", net.name)))?;
    let csc = net.mtrnn.layers[cs].spec.csc_units;
    let values = trace.final_states()[cs].y[..csc].to_vec();
    Ok((ContextVector { values }, trace))
}

/// What the decoder's IO layer receives at each step after the first
/// (which is always the zero vector: no previous token exists).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Feedback {
    /// The ground-truth previous token (requires teacher inputs).
    TeacherForced,
    /// The previous step's own output — the full distribution in phonetic
    /// mode, the predicted embedding otherwise. Differentiable end to end.
    SelfFeedback,
    /// The previous step's argmax as a one-hot vector. Phonetic mode only,
    /// inference only (the argmax is not differentiable).
    HardSelfFeedback,
}

impl Feedback {
    pub fn name(self) -> &'static str {
        match self {
            Feedback::TeacherForced => "teacher-forced",
            Feedback::SelfFeedback => "self-feedback",
            Feedback::HardSelfFeedback => "hard-self-feedback",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "teacher-forced" => Ok(Feedback::TeacherForced),
            "self-feedback" => Ok(Feedback::SelfFeedback),
            "hard-self-feedback" => Ok(Feedback::HardSelfFeedback),
            other => Err(Error::invalid(format!(
                "unknown feedback mode '{other}' (expected teacher-forced, self-feedback, or hard-self-feedback)"
            ))),
        }
    }
}

/// Language-production decoder: a three-layer stack plus a linear readout.
/// In phonetic mode the readout is squashed into a token distribution by a
/// temperature softmax; in embedding mode it is the predicted word vector
/// as-is. Either way the output is what gets fed back in self-feedback
/// mode, so the IO input width must equal the readout width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderNet {
    pub mtrnn: MtrnnParams,
    pub representation: Representation,
    /// out_dim × io_units readout (out_dim = vocabulary or embedding width).
    pub w_out: Matrix,
    pub b_out: Vec<f64>,
    /// Softmax temperature on the readout; 1 in all the experiments.
    /// Ignored in embedding mode.
    pub temperature: f64,
    /// Per-sequence trainable initial cell-assembly potentials, used when
    /// the decoder runs standalone (no encoders); learned by gradient
    /// descent exactly like weights.
    pub context_bias_table: BTreeMap<String, Vec<f64>>,
}

impl DecoderNet {
    pub fn validate(&self) -> Result<()> {
        self.mtrnn.validate()?;
        if self.mtrnn.layer_index(LayerRole::Cs).is_none() {
            return Err(Error::invalid("decoder lacks a cs layer"));
        }
        let io_units = self.mtrnn.layers[0].spec.units;
        if self.w_out.cols() != io_units {
            return Err(Error::shape(format!(
                "readout reads {} units, io layer has {}",
                self.w_out.cols(),
                io_units
            )));
        }
        if self.b_out.len() != self.out_dim() {
            return Err(Error::shape("readout rows and bias length disagree"));
        }
        if self.mtrnn.input_dim != self.out_dim() {
            return Err(Error::shape(format!(
                "decoder feedback dim {} must equal readout dim {}",
                self.mtrnn.input_dim,
                self.out_dim()
            )));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::invalid(format!(
                "temperature {} must be positive",
                self.temperature
            )));
        }
        for (id, z) in &self.context_bias_table {
            if z.len() != self.csc_units() {
                return Err(Error::shape(format!(
                    "context bias '{id}' has {} values, decoder assembly expects {}",
                    z.len(),
                    self.csc_units()
                )));
            }
        }
        Ok(())
    }

    /// Width of one output row: vocabulary size in phonetic mode, embedding
    /// dimension in embedding mode.
    pub fn out_dim(&self) -> usize {
        self.w_out.rows()
    }

    pub fn csc_units(&self) -> usize {
        self.mtrnn
            .layer_index(LayerRole::Cs)
            .map(|i| self.mtrnn.layers[i].spec.csc_units)
            .unwrap_or(0)
    }

    /// Initial layer states for a given cell-assembly potential: zeros
    /// everywhere except the leading slow units, whose z is the context.
    pub fn initial_states(&self, context_z: &[f64]) -> Result<Vec<LayerState>> {
        let csc = self.csc_units();
        if context_z.len() != csc {
            return Err(Error::shape(format!(
                "context has {} values, decoder assembly expects {csc}",
                context_z.len()
            )));
        }
        let cs = self.mtrnn.layer_index(LayerRole::Cs).unwrap();
        let mut states = self.mtrnn.zero_states();
        let mut z = vec![0.0; self.mtrnn.layers[cs].spec.units];
        z[..csc].copy_from_slice(context_z);
        states[cs] = LayerState::from_potentials(z);
        Ok(states)
    }
}

/// Full record of one decoding run.
#[derive(Debug, Clone)]
pub struct DecodeTrace {
    pub trace: MtrnnTrace,
    /// steps × out_dim; row t is what the IO layer received at step t
    /// (row 0 is zeros).
    pub inputs: Matrix,
    /// Raw readout W_out·y + b per step, before any temperature.
    pub readout: Matrix,
    /// steps × out_dim: softmax(readout/T) rows in phonetic mode, the
    /// readout itself in embedding mode.
    pub outputs: Matrix,
}

impl DecodeTrace {
    pub fn steps(&self) -> usize {
        self.outputs.rows()
    }
}

/// Generate `steps` outputs from an initial cell-assembly potential.
///
/// The first input is always the zero vector; afterwards the IO layer
/// receives the previous ground-truth row (teacher-forced), the previous
/// output (self-feedback), or the previous argmax token one-hot
/// (hard self-feedback, phonetic only).
pub fn decode(
    net: &DecoderNet,
    context_z: &[f64],
    steps: usize,
    feedback: Feedback,
    teacher_inputs: Option<&Matrix>,
    cfg: &StepConfig,
) -> Result<DecodeTrace> {
    net.validate()?;
    let out_dim = net.out_dim();
    match (feedback, teacher_inputs) {
        (Feedback::TeacherForced, None) => {
            return Err(Error::invalid("teacher-forced decoding needs teacher inputs"))
        }
        (Feedback::TeacherForced, Some(t)) => {
            if t.cols() != out_dim {
                return Err(Error::shape(format!(
                    "teacher rows are {}-wide, decoder expects {out_dim}",
                    t.cols()
                )));
            }
            if steps > 0 && t.rows() + 1 < steps {
                return Err(Error::shape(format!(
                    "{} teacher rows cannot drive {steps} steps",
                    t.rows()
                )));
            }
        }
        (_, Some(_)) => {
            return Err(Error::invalid(format!(
                "{} decoding must not receive teacher inputs",
                feedback.name()
            )))
        }
        (_, None) => {}
    }
    if feedback == Feedback::HardSelfFeedback && net.representation == Representation::Embedding {
        return Err(Error::invalid(
            "hard self-feedback needs a token inventory; embedding mode has none",
        ));
    }
    let mut states = vec![net.initial_states(context_z)?];
    let mut drives = Vec::with_capacity(steps);
    let mut inputs = Matrix::zeros(steps, out_dim);
    let mut readout = Matrix::zeros(steps, out_dim);
    let mut outputs = Matrix::zeros(steps, out_dim);
    for t in 0..steps {
        if t > 0 {
            match feedback {
                Feedback::TeacherForced => {
                    inputs
                        .row_mut(t)
                        .copy_from_slice(teacher_inputs.unwrap().row(t - 1));
                }
                Feedback::SelfFeedback => {
                    let prev: Vec<f64> = outputs.row(t - 1).to_vec();
                    inputs.row_mut(t).copy_from_slice(&prev);
                }
                Feedback::HardSelfFeedback => {
                    let winner = argmax(outputs.row(t - 1));
                    inputs.row_mut(t)[winner] = 1.0;
                }
            }
        }
        let (next, drive) = mtrnn_step(&net.mtrnn, states.last().unwrap(), inputs.row(t), cfg);
        let mut logit = net.b_out.to_vec();
        net.w_out.matvec_add(&next[0].y, &mut logit);
        match net.representation {
            Representation::Phonetic => {
                let scaled: Vec<f64> = logit.iter().map(|&v| v / net.temperature).collect();
                outputs.row_mut(t).copy_from_slice(&softmax(&scaled)?);
            }
            Representation::Embedding => {
                outputs.row_mut(t).copy_from_slice(&logit);
            }
        }
        readout.row_mut(t).copy_from_slice(&logit);
        states.push(next);
        drives.push(drive);
    }
    Ok(DecodeTrace {
        trace: MtrnnTrace { states, drives },
        inputs,
        readout,
        outputs,
    })
}
