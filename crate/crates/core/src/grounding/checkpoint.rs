use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grounding::model::GroundingModel;

/// Bumped whenever the on-disk layout changes incompatibly.
pub const CHECKPOINT_VERSION: u32 = 1;

/// Versioned container for a trained (or training) model. Carries every
/// parameter — connection weights, timescale offsets and adaptations,
/// coupling, context-bias table, modality order, variant, alphabet — so a
/// load is bit-for-bit the model that was saved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model: GroundingModel,
    /// Epochs completed when this snapshot was taken.
    pub epoch: usize,
    /// Validation loss of the snapshot, if a validation split existed.
    pub valid_loss: Option<f64>,
}

impl Checkpoint {
    pub fn new(model: GroundingModel, epoch: usize, valid_loss: Option<f64>) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            model,
            epoch,
            valid_loss,
        }
    }
}

/// Serialise to JSON. floats survive the round trip exactly: the writer
/// emits the shortest decimal that parses back to the identical bits.
pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let json = serde_json::to_string(checkpoint)
        .map_err(|e| Error::format(format!("checkpoint serialisation failed: {e}")))?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let checkpoint: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| Error::format(format!("{}: not a valid checkpoint: {e}", path.display())))?;
    if checkpoint.format_version != CHECKPOINT_VERSION {
        return Err(Error::format(format!(
            "{}: checkpoint format {} unsupported (this build reads {})",
            path.display(),
            checkpoint.format_version,
            CHECKPOINT_VERSION
        )));
    }
    checkpoint.model.validate()?;
    Ok(checkpoint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grounding::build::{build_model, ModelConfig};
    use crate::grounding::model::Variant;
    use crate::numeric::Rng;

    fn model() -> GroundingModel {
        let mut cfg = ModelConfig::default();
        cfg.variant = Variant::Amtrnn;
        cfg.modalities = vec![("touch".into(), 3), ("sound".into(), 2)];
        cfg.enc_io = 4;
        cfg.enc_cf = 3;
        cfg.enc_cs = 3;
        cfg.enc_csc = 2;
        cfg.dec_io = 4;
        cfg.dec_cf = 3;
        cfg.dec_cs = 3;
        cfg.dec_csc = 2;
        cfg.alphabet = vec!["x".into(), "y".into(), "z".into(), "w".into()];
        build_model(&cfg, &mut Rng::new(123)).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = std::env::temp_dir().join("tau-ground-ckpt-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.json");
        let original = Checkpoint::new(model(), 17, Some(0.123456789012345678));
        save_checkpoint(&path, &original).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, original);
        // saving the loaded copy reproduces the file byte for byte
        let path2 = dir.join("model2.json");
        save_checkpoint(&path2, &loaded).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn rejects_unknown_version() {
        let dir = std::env::temp_dir().join("tau-ground-ckpt-ver");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.json");
        let mut ckpt = Checkpoint::new(model(), 0, None);
        ckpt.format_version = 999;
        let json = serde_json::to_string(&ckpt).unwrap();
        std::fs::write(&path, json).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("format 999"), "{err}");
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn rejects_corrupt_file() {
        let dir = std::env::temp_dir().join("tau-ground-ckpt-bad");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.json");
        std::fs::write(&path, "{\"format_version\": 1, \"mod").unwrap();
        assert!(load_checkpoint(&path).is_err());
        assert!(load_checkpoint(&dir.join("absent.json")).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }
}
