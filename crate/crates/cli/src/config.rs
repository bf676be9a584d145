//! Run configuration: one JSON file describes a whole experiment, and
//! command-line flags override individual fields. The file doubles as the
//! run's provenance record — `train` writes the merged result next to its
//! checkpoint so any later `eval` or `analyze` can reconstruct the exact
//! split and scaling.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tau_ground::data::{
    apply_normalization, normalize_streams, split_dataset, Dataset, Representation, SplitIndices,
};
use tau_ground::grounding::ModelConfig;
use tau_ground::training::TrainConfig;
use tau_ground::{Error, Result};

/// Parameters for the `gen` subcommand's synthetic corpora. Unused fields
/// are ignored: the toy block when generating Lissajous curves and vice
/// versa.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    /// Which corpus: "toy" (crossmodal action–object grounding) or
    /// "lissajous" (two-channel curve segments).
    pub kind: String,
    // Toy grounding.
    pub actions: usize,
    pub objects: usize,
    pub modality_dims: Vec<usize>,
    pub seq_len: usize,
    pub noise_sigma: f64,
    pub records_per_pair: usize,
    // Lissajous curves.
    pub patterns: Vec<(f64, f64)>,
    pub delta: f64,
    pub sigma: f64,
    pub steps_per_cycle: usize,
    pub cycles: usize,
    pub transition_prob: f64,
    pub n_records: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            kind: "toy".into(),
            actions: 3,
            objects: 3,
            modality_dims: vec![8, 8],
            seq_len: 60,
            noise_sigma: 0.02,
            records_per_pair: 4,
            patterns: vec![(1.0, 2.0), (3.0, 2.0)],
            delta: 0.0,
            sigma: 0.01,
            steps_per_cycle: 40,
            cycles: 3,
            transition_prob: 0.5,
            n_records: 40,
        }
    }
}

/// Everything one run needs; each subcommand reads the parts it uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub generator: GenConfig,
    /// Dataset directory for commands that read one.
    pub dataset: Option<PathBuf>,
    /// Modality subset the model consumes; omitted means every modality
    /// the dataset offers. Normalized to the dataset's slot order, so the
    /// selection is a set, not a permutation.
    pub modalities: Option<Vec<String>>,
    /// Where artifacts land; `--out` and the TAU_GROUND_OUT environment
    /// variable override it, in that order of increasing precedence.
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            model: ModelConfig::default(),
            generator: GenConfig::default(),
            dataset: None,
            modalities: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Read a config file, or fall back to defaults when none was given.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(format!("{}: {e}", path.display())))
}

/// TAU_GROUND_OUT beats `--out` beats the config's `out_dir`.
pub fn resolve_out_dir(cfg: &RunConfig, flag: Option<&Path>) -> PathBuf {
    if let Ok(dir) = std::env::var("TAU_GROUND_OUT") {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    match flag {
        Some(p) => p.to_path_buf(),
        None => cfg.out_dir.clone(),
    }
}

/// Collect every config complaint at once instead of stopping at the
/// first — a run that dies on the third typo after two separate fixes
/// wastes everyone's time. Architecture shapes are checked by the model
/// builder before anything is written; this covers the rest.
pub fn validate_config(cfg: &RunConfig) -> Result<()> {
    let mut problems = Vec::new();
    if let Err(e) = cfg.train.validate() {
        problems.push(e.to_string());
    }
    let g = &cfg.generator;
    match g.kind.as_str() {
        "toy" => {
            if g.actions > 5 || g.objects > 5 {
                problems.push(format!(
                    "the built-in vocabulary covers at most 5 actions and 5 objects, \
                     got {}x{}",
                    g.actions, g.objects
                ));
            }
            if g.modality_dims.is_empty() {
                problems.push("toy generator needs at least one modality dimension".into());
            }
        }
        "lissajous" => {
            if g.patterns.is_empty() {
                problems.push("lissajous generator needs at least one (a, b) pattern".into());
            }
        }
        other => problems.push(format!(
            "unknown generator '{other}' (expected toy or lissajous)"
        )),
    }
    if let Some(selection) = &cfg.modalities {
        if selection.is_empty() {
            problems.push("modality selection is empty; omit it to use every modality".into());
        }
    }
    if !(cfg.model.temperature > 0.0) {
        problems.push(format!(
            "softmax temperature {} must be positive",
            cfg.model.temperature
        ));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::invalid(problems.join("; ")))
    }
}

/// Fill the architecture's dataset-dependent fields: modality slots
/// (respecting an optional selection) and the output inventory.
pub fn model_config_for(cfg: &RunConfig, ds: &Dataset) -> Result<ModelConfig> {
    let mut mc = cfg.model.clone();
    mc.bias_records.clear();
    mc.modalities = match &cfg.modalities {
        None => ds.modalities.clone(),
        Some(wanted) => {
            if wanted.is_empty() {
                return Err(Error::invalid("modality selection is empty"));
            }
            for name in wanted {
                if ds.modality_dim(name).is_none() {
                    let offered: Vec<&str> =
                        ds.modalities.iter().map(|(n, _)| n.as_str()).collect();
                    return Err(Error::invalid(format!(
                        "dataset has no modality '{name}' (it offers: {})",
                        offered.join(", ")
                    )));
                }
            }
            ds.modalities
                .iter()
                .filter(|(n, _)| wanted.iter().any(|w| w == n))
                .cloned()
                .collect()
        }
    };
    match mc.representation {
        Representation::Phonetic => mc.alphabet = ds.alphabet.clone(),
        Representation::Embedding => {
            let table = ds.embedding_table.as_ref().ok_or_else(|| {
                Error::invalid("embedding representation needs an embedding table in the dataset")
            })?;
            mc.embed_dim = table.values().next().map(|v| v.len()).unwrap_or(0);
        }
    }
    mc.dt = cfg.train.dt;
    Ok(mc)
}

/// Split by the training seed, compute min-max scaling on the train subset
/// only, and return the split plus the whole dataset rescaled by those
/// constants. Deriving the constants from the train records keeps held-out
/// data out of them, and recomputing from the config (rather than saving a
/// side file) means every command arrives at identical values.
pub fn split_and_normalize(cfg: &RunConfig, ds: &Dataset) -> Result<(SplitIndices, Dataset)> {
    let split = split_dataset(ds, cfg.train.split_fractions, cfg.train.seed)?;
    let train = normalize_streams(&ds.subset(&split.train)?)?;
    let norms = train
        .norms
        .clone()
        .expect("normalize_streams records its constants");
    let whole = apply_normalization(ds, &norms)?;
    Ok((split, whole))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tau_ground::data::SIL;
    use tau_ground::grounding::Variant;

    #[test]
    fn partial_config_fills_defaults() {
        let dir = std::env::temp_dir().join("tau-ground-config-partial");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("cfg.json");
        std::fs::write(
            &path,
            r#"{"train": {"seed": 42}, "model": {"variant": "ctrnn"}}"#,
        )
        .unwrap();
        let cfg = load_config(Some(&path)).unwrap();
        assert_eq!(cfg.train.seed, 42);
        assert_eq!(cfg.model.variant, Variant::Ctrnn);
        // Everything unspecified stays at its default.
        assert_eq!(cfg.train.batch_size, TrainConfig::default().batch_size);
        assert_eq!(cfg.out_dir, PathBuf::from("out"));
    }

    #[test]
    fn unknown_top_level_key_is_rejected() {
        let dir = std::env::temp_dir().join("tau-ground-config-unknown");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("cfg.json");
        std::fs::write(&path, r#"{"trian": {"seed": 42}}"#).unwrap();
        let err = load_config(Some(&path)).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "got {err:?}");
    }

    #[test]
    fn validation_reports_every_problem_at_once() {
        let mut cfg = RunConfig::default();
        cfg.train.learning_rate = -1.0;
        cfg.generator.kind = "nope".into();
        cfg.modalities = Some(Vec::new());
        let msg = validate_config(&cfg).unwrap_err().to_string();
        assert!(msg.contains("learning rate"), "{msg}");
        assert!(msg.contains("nope"), "{msg}");
        assert!(msg.contains("selection is empty"), "{msg}");
    }

    #[test]
    fn modality_selection_keeps_dataset_order() {
        let mut ds = Dataset::new(
            vec![("au".into(), 2), ("sm".into(), 3), ("vi".into(), 4)],
            vec!["a".into(), SIL.into()],
        );
        ds.records.push(tau_ground::data::SequenceRecord {
            id: "r0".into(),
            label_text: vec![],
            label_phonemes: vec![SIL.into()],
            streams: Default::default(),
        });
        let mut cfg = RunConfig::default();
        cfg.modalities = Some(vec!["vi".into(), "au".into()]);
        let mc = model_config_for(&cfg, &ds).unwrap();
        // The selection is a set: slots come back in dataset order.
        assert_eq!(
            mc.modalities,
            vec![("au".to_string(), 2), ("vi".to_string(), 4)]
        );
        assert_eq!(mc.alphabet, ds.alphabet);

        cfg.modalities = Some(vec!["tactile".into()]);
        let err = model_config_for(&cfg, &ds).unwrap_err().to_string();
        assert!(err.contains("tactile") && err.contains("au, sm, vi"), "{err}");
    }

    #[test]
    fn out_dir_precedence_is_flag_over_config() {
        // The environment branch is exercised in the integration tests;
        // mutating the process environment here would race other tests.
        let mut cfg = RunConfig::default();
        cfg.out_dir = PathBuf::from("from-config");
        if std::env::var("TAU_GROUND_OUT").is_ok() {
            return; // inherited override would invalidate the assertions
        }
        assert_eq!(resolve_out_dir(&cfg, None), PathBuf::from("from-config"));
        assert_eq!(
            resolve_out_dir(&cfg, Some(Path::new("from-flag"))),
            PathBuf::from("from-flag")
        );
    }
}
