use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Representation;
use crate::error::{Error, Result};
use crate::grounding::model::{assemble, Coupling, GroundingModel, Variant};
use crate::grounding::net::{DecoderNet, EncoderNet};
use crate::numeric::{Matrix, Rng};
use crate::rnn::{LayerRole, LayerSpec, MtrnnParams, StepConfig};

/// Initial spread of per-record context biases.
const BIAS_TABLE_INIT_RANGE: f64 = 0.01;

/// Everything needed to build a fresh model. Serialisable so run configs
/// can carry it; all fields have defaults, so configs may be partial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub variant: Variant,
    pub representation: Representation,
    /// (name, stream dimension) per sensory modality, slot order. Leave
    /// empty and set `bias_records` to build a standalone decoder instead.
    pub modalities: Vec<(String, usize)>,
    /// Record ids for a standalone decoder's trainable context table.
    pub bias_records: Vec<String>,
    /// Output token inventory; sets the decoder width in phonetic mode.
    pub alphabet: Vec<String>,
    /// Decoder output width in embedding mode (ignored otherwise).
    pub embed_dim: usize,
    pub enc_io: usize,
    pub enc_cf: usize,
    pub enc_cs: usize,
    pub enc_csc: usize,
    pub dec_io: usize,
    pub dec_cf: usize,
    pub dec_cs: usize,
    pub dec_csc: usize,
    pub tau_io: f64,
    pub tau_cf: f64,
    pub tau_cs: f64,
    /// Concatenate encoder assemblies straight into the decoder instead of
    /// the default trainable affine coupling.
    pub identity_coupling: bool,
    pub temperature: f64,
    pub dt: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::Amtrnn,
            representation: Representation::Phonetic,
            modalities: Vec::new(),
            bias_records: Vec::new(),
            alphabet: Vec::new(),
            embed_dim: 0,
            enc_io: 16,
            enc_cf: 12,
            enc_cs: 10,
            enc_csc: 4,
            dec_io: 16,
            dec_cf: 12,
            dec_cs: 10,
            dec_csc: 8,
            tau_io: 2.0,
            tau_cf: 5.0,
            tau_cs: 70.0,
            identity_coupling: false,
            temperature: 1.0,
            dt: 1.0,
        }
    }
}

impl ModelConfig {
    fn layer_specs(&self, io: usize, cf: usize, cs: usize, csc: usize) -> Vec<LayerSpec> {
        // the hierarchy-free variant runs every layer at τ = 1
        let (t_io, t_cf, t_cs) = if self.variant == Variant::Ctrnn {
            (1.0, 1.0, 1.0)
        } else {
            (self.tau_io, self.tau_cf, self.tau_cs)
        };
        vec![
            LayerSpec::new(LayerRole::Io, io, t_io),
            LayerSpec::new(LayerRole::Cf, cf, t_cf),
            LayerSpec::new(LayerRole::Cs, cs, t_cs).with_csc(csc),
        ]
    }

    /// Width of one decoder output row under this config.
    pub fn out_dim(&self) -> usize {
        match self.representation {
            Representation::Phonetic => self.alphabet.len(),
            Representation::Embedding => self.embed_dim,
        }
    }
}

/// Build a model from its config.
///
/// Every component draws from its own derived random stream (encoders,
/// coupling, decoder, context table), so, for example, adding a modality
/// does not perturb the decoder's initial weights under the same seed.
pub fn build_model(config: &ModelConfig, rng: &mut Rng) -> Result<GroundingModel> {
    match config.representation {
        Representation::Phonetic => {
            if config.alphabet.is_empty() {
                return Err(Error::invalid("phonetic models need a non-empty alphabet"));
            }
        }
        Representation::Embedding => {
            if config.embed_dim == 0 {
                return Err(Error::invalid("embedding models need embed_dim ≥ 1"));
            }
        }
    }
    if config.modalities.is_empty() == config.bias_records.is_empty() {
        return Err(Error::invalid(
            "set exactly one of modalities (grounded) or bias_records (standalone decoder)",
        ));
    }
    let out_dim = config.out_dim();
    let mode = config.variant.timescale_mode();

    let mut encoders = Vec::with_capacity(config.modalities.len());
    for (i, (name, dim)) in config.modalities.iter().enumerate() {
        let mut enc_rng = rng.derive(1000 + i as u64);
        let specs = config.layer_specs(config.enc_io, config.enc_cf, config.enc_cs, config.enc_csc);
        let mtrnn = MtrnnParams::init(mode, &specs, *dim, &mut enc_rng)?;
        encoders.push(EncoderNet {
            name: name.clone(),
            mtrnn,
        });
    }

    let mut dec_rng = rng.derive(3000);
    let dec_specs = config.layer_specs(config.dec_io, config.dec_cf, config.dec_cs, config.dec_csc);
    let dec_mtrnn = MtrnnParams::init(mode, &dec_specs, out_dim, &mut dec_rng)?;
    let s = 1.0 / (config.dec_io as f64).sqrt();
    let w_out = Matrix::from_fn(out_dim, config.dec_io, |_, _| dec_rng.uniform_in(-s, s));
    let mut decoder = DecoderNet {
        mtrnn: dec_mtrnn,
        representation: config.representation,
        w_out,
        b_out: vec![0.0; out_dim],
        temperature: config.temperature,
        context_bias_table: BTreeMap::new(),
    };

    let step = StepConfig { dt: config.dt };
    if config.modalities.is_empty() {
        let mut table_rng = rng.derive(4000);
        let mut ids: Vec<&String> = config.bias_records.iter().collect();
        ids.sort();
        ids.dedup();
        for id in ids {
            let z: Vec<f64> = (0..config.dec_csc)
                .map(|_| table_rng.uniform_in(-BIAS_TABLE_INIT_RANGE, BIAS_TABLE_INIT_RANGE))
                .collect();
            decoder.context_bias_table.insert(id.clone(), z);
        }
        let model = GroundingModel {
            variant: config.variant,
            modalities: Vec::new(),
            alphabet: config.alphabet.clone(),
            encoders: Vec::new(),
            coupling: Coupling::Identity,
            decoder,
            step,
        };
        model.validate()?;
        return Ok(model);
    }

    let mut model = assemble(
        config.variant,
        encoders,
        decoder,
        config.alphabet.clone(),
        step,
        &mut rng.derive(2000),
    )?;
    if config.identity_coupling {
        model.use_identity_coupling()?;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grounding::model::COUPLING_INIT_RANGE;
    use crate::rnn::TimescaleMode;

    fn config() -> ModelConfig {
        let mut cfg = ModelConfig::default();
        cfg.modalities = vec![("audio".into(), 4)];
        cfg.alphabet = vec!["a".into(), "b".into(), "c".into()];
        cfg
    }

    #[test]
    fn variants_map_to_timescale_modes() {
        for (variant, mode, tau) in [
            (Variant::Ctrnn, TimescaleMode::Unit, 1.0),
            (Variant::Mtrnn, TimescaleMode::Fixed, 70.0),
            (Variant::Amtrnn, TimescaleMode::Adaptive, 70.0),
        ] {
            let mut cfg = config();
            cfg.variant = variant;
            let model = build_model(&cfg, &mut Rng::new(5)).unwrap();
            let cs = &model.encoders[0].mtrnn.layers[2];
            assert_eq!(cs.timescales.mode, mode);
            let t = cs.timescales.effective(0);
            assert!(
                (t - tau).abs() < tau * 0.02,
                "{} cs tau {t}, expected about {tau}",
                variant.name()
            );
        }
    }

    #[test]
    fn seed_determines_model_exactly() {
        let a = build_model(&config(), &mut Rng::new(9)).unwrap();
        let b = build_model(&config(), &mut Rng::new(9)).unwrap();
        assert_eq!(a, b);
        let c = build_model(&config(), &mut Rng::new(10)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn adding_a_modality_keeps_decoder_weights() {
        let one = build_model(&config(), &mut Rng::new(3)).unwrap();
        let mut cfg = config();
        cfg.modalities.push(("vision".into(), 6));
        let two = build_model(&cfg, &mut Rng::new(3)).unwrap();
        assert_eq!(one.decoder.mtrnn.w_in, two.decoder.mtrnn.w_in);
        assert_eq!(one.decoder.w_out, two.decoder.w_out);
        assert_eq!(one.encoders[0], two.encoders[0]);
    }

    #[test]
    fn rejects_contradictory_context_sources() {
        let mut cfg = config();
        cfg.bias_records = vec!["r0".into()];
        assert!(build_model(&cfg, &mut Rng::new(0)).is_err());
        cfg.modalities.clear();
        cfg.bias_records.clear();
        assert!(build_model(&cfg, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn rejects_empty_alphabet_or_missing_embed_dim() {
        let mut cfg = config();
        cfg.alphabet.clear();
        assert!(build_model(&cfg, &mut Rng::new(0)).is_err());
        cfg.representation = Representation::Embedding;
        assert!(build_model(&cfg, &mut Rng::new(0)).is_err(), "embed_dim unset");
        cfg.embed_dim = 6;
        let model = build_model(&cfg, &mut Rng::new(0)).unwrap();
        assert_eq!(model.vocab(), 6);
        assert_eq!(model.representation(), Representation::Embedding);
    }

    #[test]
    fn coupling_starts_small_but_nonzero() {
        let model = build_model(&config(), &mut Rng::new(8)).unwrap();
        match &model.coupling {
            Coupling::Affine { w, b } => {
                assert!(w.as_slice().iter().all(|v| v.abs() <= COUPLING_INIT_RANGE));
                assert!(w.as_slice().iter().any(|&v| v != 0.0));
                assert!(b.iter().all(|v| v.abs() <= COUPLING_INIT_RANGE));
                assert!(b.iter().any(|&v| v != 0.0));
            }
            Coupling::Identity => panic!("default coupling must be affine"),
        }
    }

    #[test]
    fn three_encoder_coupling_shape_matches() {
        let mut cfg = config();
        cfg.modalities = vec![("au".into(), 4), ("sm".into(), 5), ("vi".into(), 6)];
        cfg.enc_csc = 4;
        cfg.dec_csc = 6;
        let model = build_model(&cfg, &mut Rng::new(1)).unwrap();
        match &model.coupling {
            Coupling::Affine { w, .. } => {
                assert_eq!((w.rows(), w.cols()), (6, 12));
            }
            Coupling::Identity => panic!(),
        }
    }
}
