use serde::{Deserialize, Serialize};

use crate::data::{Representation, SequenceRecord};
use crate::error::{Error, Result};
use crate::grounding::net::{
    decode, encode, ContextVector, DecodeTrace, DecoderNet, EncoderNet, Feedback,
};
use crate::numeric::{Matrix, Rng};
use crate::rnn::{MtrnnTrace, StepConfig, TimescaleMode};

/// Which timescale regime the networks run under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Uniform unit timescales: no slow/fast hierarchy at all.
    Ctrnn,
    /// Fixed hierarchy of timescales.
    Mtrnn,
    /// Hierarchy with per-unit trainable timescales.
    Amtrnn,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Ctrnn => "ctrnn",
            Variant::Mtrnn => "mtrnn",
            Variant::Amtrnn => "amtrnn",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ctrnn" => Ok(Variant::Ctrnn),
            "mtrnn" => Ok(Variant::Mtrnn),
            "amtrnn" => Ok(Variant::Amtrnn),
            other => Err(Error::invalid(format!(
                "unknown variant '{other}' (expected ctrnn, mtrnn, or amtrnn)"
            ))),
        }
    }

    pub fn timescale_mode(self) -> TimescaleMode {
        match self {
            Variant::Ctrnn => TimescaleMode::Unit,
            Variant::Mtrnn => TimescaleMode::Fixed,
            Variant::Amtrnn => TimescaleMode::Adaptive,
        }
    }
}

/// How the concatenated encoder contexts become the decoder's initial
/// cell-assembly potentials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Coupling {
    /// Pass the concatenation through unchanged; requires the encoder and
    /// decoder assembly sizes to match exactly.
    Identity,
    /// z = W·context + b, trainable. Lets assemblies of different sizes
    /// couple and gives the model freedom in how modalities mix.
    Affine { w: Matrix, b: Vec<f64> },
}

/// Initial spread of affine coupling weights and offsets.
pub const COUPLING_INIT_RANGE: f64 = 0.08;

/// The complete crossmodal grounding architecture: one encoder per sensory
/// modality, a coupling that fuses their cell assemblies, and a
/// language-production decoder conditioned on the fused assembly.
///
/// A model with no encoders is the standalone-decoder mode: each record's
/// context comes from the decoder's trainable per-sequence bias table
/// instead of sensory streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingModel {
    pub variant: Variant,
    /// Modality names in slot order; `encoders[i]` consumes `modalities[i]`.
    pub modalities: Vec<String>,
    /// Output token inventory, index-aligned with the decoder readout in
    /// phonetic mode. Informational in embedding mode (the embedding table
    /// stays with the dataset).
    pub alphabet: Vec<String>,
    pub encoders: Vec<EncoderNet>,
    pub coupling: Coupling,
    pub decoder: DecoderNet,
    pub step: StepConfig,
}

impl GroundingModel {
    pub fn validate(&self) -> Result<()> {
        if self.encoders.is_empty() {
            if !self.modalities.is_empty() {
                return Err(Error::invalid(
                    "a standalone decoder must not declare modalities",
                ));
            }
        } else {
            if self.encoders.len() != self.modalities.len() {
                return Err(Error::invalid(format!(
                    "{} encoders for {} modalities",
                    self.encoders.len(),
                    self.modalities.len()
                )));
            }
            for (enc, name) in self.encoders.iter().zip(&self.modalities) {
                enc.validate()?;
                if &enc.name != name {
                    return Err(Error::invalid(format!(
                        "encoder '{}' sits in the '{}' slot",
                        enc.name, name
                    )));
                }
            }
            match &self.coupling {
                Coupling::Identity => {
                    if self.enc_context_dim() != self.decoder.csc_units() {
                        return Err(Error::shape(format!(
                            "identity coupling needs matching assemblies: encoders give {}, decoder expects {}",
                            self.enc_context_dim(),
                            self.decoder.csc_units()
                        )));
                    }
                }
                Coupling::Affine { w, b } => {
                    if w.rows() != self.decoder.csc_units()
                        || w.cols() != self.enc_context_dim()
                        || b.len() != self.decoder.csc_units()
                    {
                        return Err(Error::shape(format!(
                            "coupling is {}x{} + {}, expected {}x{} + {}",
                            w.rows(),
                            w.cols(),
                            b.len(),
                            self.decoder.csc_units(),
                            self.enc_context_dim(),
                            self.decoder.csc_units()
                        )));
                    }
                }
            }
        }
        self.decoder.validate()?;
        if self.representation() == Representation::Phonetic
            && self.alphabet.len() != self.decoder.out_dim()
        {
            return Err(Error::invalid(format!(
                "alphabet has {} tokens, decoder vocabulary is {}",
                self.alphabet.len(),
                self.decoder.out_dim()
            )));
        }
        Ok(())
    }

    /// Total width of the concatenated encoder cell assemblies.
    pub fn enc_context_dim(&self) -> usize {
        self.encoders.iter().map(|e| e.csc_units()).sum()
    }

    pub fn representation(&self) -> Representation {
        self.decoder.representation
    }

    pub fn vocab(&self) -> usize {
        self.decoder.out_dim()
    }

    /// Switch to the identity-copy coupling. Only legal when the
    /// concatenated encoder assemblies already have the decoder's width.
    pub fn use_identity_coupling(&mut self) -> Result<()> {
        if self.enc_context_dim() != self.decoder.csc_units() {
            return Err(Error::shape(format!(
                "identity coupling needs matching assemblies: encoders give {}, decoder expects {}",
                self.enc_context_dim(),
                self.decoder.csc_units()
            )));
        }
        self.coupling = Coupling::Identity;
        Ok(())
    }

    /// How many decoder steps a record's label demands: one per phoneme in
    /// phonetic mode, one per word in embedding mode.
    pub fn target_steps(&self, record: &SequenceRecord) -> usize {
        match self.representation() {
            Representation::Phonetic => record.label_phonemes.len(),
            Representation::Embedding => record.label_text.len(),
        }
    }
}

/// Couple pre-built encoders and a decoder into a grounding model. The
/// affine cell-assembly coupling starts small and random; use
/// [`GroundingModel::use_identity_coupling`] afterwards to share
/// assemblies directly when the widths agree.
pub fn assemble(
    variant: Variant,
    encoders: Vec<EncoderNet>,
    decoder: DecoderNet,
    alphabet: Vec<String>,
    step: StepConfig,
    rng: &mut Rng,
) -> Result<GroundingModel> {
    if encoders.is_empty() {
        return Err(Error::invalid("a grounding model needs at least one encoder"));
    }
    if encoders.len() > 3 {
        return Err(Error::invalid(format!(
            "{} encoders; at most 3 modalities are supported",
            encoders.len()
        )));
    }
    let mut names: Vec<&str> = encoders.iter().map(|e| e.name.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    if names.len() != encoders.len() {
        return Err(Error::invalid("duplicate modality names"));
    }
    let context_dim: usize = encoders.iter().map(|e| e.csc_units()).sum();
    let w = Matrix::from_fn(decoder.csc_units(), context_dim, |_, _| {
        rng.uniform_in(-COUPLING_INIT_RANGE, COUPLING_INIT_RANGE)
    });
    let b: Vec<f64> = (0..decoder.csc_units())
        .map(|_| rng.uniform_in(-COUPLING_INIT_RANGE, COUPLING_INIT_RANGE))
        .collect();
    let model = GroundingModel {
        variant,
        modalities: encoders.iter().map(|e| e.name.clone()).collect(),
        alphabet,
        encoders,
        coupling: Coupling::Affine { w, b },
        decoder,
        step,
    };
    model.validate()?;
    Ok(model)
}

/// Fuse per-modality contexts into the decoder's initial cell-assembly
/// potentials. Contexts must arrive in modality slot order.
pub fn fuse_contexts(coupling: &Coupling, contexts: &[ContextVector]) -> Result<Vec<f64>> {
    let mut concat = Vec::new();
    for c in contexts {
        concat.extend_from_slice(&c.values);
    }
    match coupling {
        Coupling::Identity => Ok(concat),
        Coupling::Affine { w, b } => {
            if concat.len() != w.cols() {
                return Err(Error::shape(format!(
                    "assembled context has {} values, coupling expects {}",
                    concat.len(),
                    w.cols()
                )));
            }
            let mut out = b.to_vec();
            w.matvec_add(&concat, &mut out);
            Ok(out)
        }
    }
}

/// Everything produced by one grounded forward pass, kept for analysis and
/// for the backward pass.
#[derive(Debug, Clone)]
pub struct GroundedTrace {
    pub enc_traces: Vec<MtrnnTrace>,
    pub contexts: Vec<ContextVector>,
    /// Decoder initial cell-assembly potentials (coupling output, or the
    /// record's table entry in standalone mode).
    pub assembled: Vec<f64>,
    pub dec: DecodeTrace,
}

impl GroundedTrace {
    /// The per-step outputs (distributions or embeddings).
    pub fn outputs(&self) -> &Matrix {
        &self.dec.outputs
    }
}

/// Run the full architecture on one record: encode every modality the
/// model declares, fuse the contexts, and decode for as many steps as the
/// targets (when given) or the record's label demand. Standalone-decoder
/// models skip the encoders and look the context up in the bias table
/// under the record's id.
pub fn forward_grounded(
    model: &GroundingModel,
    record: &SequenceRecord,
    feedback: Feedback,
    targets: Option<&Matrix>,
) -> Result<GroundedTrace> {
    let mut enc_traces = Vec::with_capacity(model.encoders.len());
    let mut contexts = Vec::with_capacity(model.encoders.len());
    let assembled = if model.encoders.is_empty() {
        model
            .decoder
            .context_bias_table
            .get(&record.id)
            .cloned()
            .ok_or_else(|| Error::token(format!("no context bias for record '{}'", record.id)))?
    } else {
        for (enc, name) in model.encoders.iter().zip(&model.modalities) {
            let stream = record.streams.get(name).ok_or_else(|| {
                Error::invalid(format!("record '{}' has no '{name}' stream", record.id))
            })?;
            let (ctx, trace) = encode(enc, stream, &model.step)?;
            enc_traces.push(trace);
            contexts.push(ctx);
        }
        fuse_contexts(&model.coupling, &contexts)?
    };
    let steps = targets.map_or_else(|| model.target_steps(record), Matrix::rows);
    let dec = decode(&model.decoder, &assembled, steps, feedback, targets, &model.step)?;
    Ok(GroundedTrace {
        enc_traces,
        contexts,
        assembled,
        dec,
    })
}
