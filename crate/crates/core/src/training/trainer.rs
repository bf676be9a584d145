use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::decode_tokens;
use crate::data::{encode_label, split_dataset, Dataset, Representation};
use crate::error::{Error, Result};
use crate::grounding::{forward_grounded, Feedback, GroundingModel};
use crate::numeric::{Matrix, Rng};
use crate::rnn::StepConfig;
use crate::training::bptt::bptt_gradients;
use crate::training::grads::GradientSet;
use crate::training::loss::loss;
use crate::training::rmsprop::{clip_global_norm, rmsprop_update, RmspropState};

/// Hyperparameters of one training run. All fields have defaults, so JSON
/// configs may be partial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a new best validation loss before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Decoder input mode during training; validation always runs
    /// self-feedback.
    pub feedback: Feedback,
    pub dt: f64,
    pub rmsprop_decay: f64,
    pub rmsprop_epsilon: f64,
    pub split_fractions: (f64, f64, f64),
    /// Global-norm bound applied to each averaged batch gradient.
    pub clip_norm: f64,
    /// Threads for per-record gradient computation within a batch. Results
    /// are reduced in record order, so they do not depend on this.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            batch_size: 30,
            max_epochs: 5000,
            patience: 100,
            seed: 1,
            feedback: Feedback::TeacherForced,
            dt: 1.0,
            rmsprop_decay: 0.9,
            rmsprop_epsilon: 1e-8,
            split_fractions: (0.75, 0.125, 0.125),
            clip_norm: 5.0,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.patience == 0 {
            return Err(Error::invalid("patience must be at least 1 epoch"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid(format!("step size {} must be positive", self.dt)));
        }
        if !(0.0..1.0).contains(&self.rmsprop_decay) {
            return Err(Error::invalid(format!(
                "RMSprop decay {} must lie in [0, 1)",
                self.rmsprop_decay
            )));
        }
        if !(self.rmsprop_epsilon > 0.0) {
            return Err(Error::invalid(format!(
                "RMSprop epsilon {} must be positive",
                self.rmsprop_epsilon
            )));
        }
        let (a, b, c) = self.split_fractions;
        if !(a >= 0.0 && b >= 0.0 && c >= 0.0) || (a + b + c - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "split fractions ({a}, {b}, {c}) must be non-negative and sum to 1"
            )));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::invalid(format!(
                "clip norm {} must be positive",
                self.clip_norm
            )));
        }
        if self.workers == 0 {
            return Err(Error::invalid("worker count must be at least 1"));
        }
        if self.feedback == Feedback::HardSelfFeedback {
            return Err(Error::invalid(
                "hard self-feedback is not differentiable and cannot be trained against",
            ));
        }
        Ok(())
    }
}

/// Everything measured after one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    /// Pooled per-step accuracy on the validation split, self-feedback.
    pub valid_acc: f64,
    /// Wall-clock per epoch. Excluded from the CSV export so exported
    /// histories are reproducible byte for byte.
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MaxEpochs,
    Patience,
}

/// The course of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// Epoch whose parameters were returned; None when no epoch ran.
    pub best_epoch: Option<usize>,
    pub stop_reason: StopReason,
}

impl TrainHistory {
    pub fn best_valid_loss(&self) -> Option<f64> {
        self.best_epoch.map(|e| {
            self.epochs
                .iter()
                .find(|s| s.epoch == e)
                .expect("best epoch is recorded")
                .valid_loss
        })
    }

    /// Deterministic CSV rendering (wall-clock omitted).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,valid_loss,valid_acc\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.epoch, e.train_loss, e.valid_loss, e.valid_acc
            ));
        }
        out
    }
}

/// Mini-batch training with RMSprop, per-epoch shuffling, self-feedback
/// validation, and checkpoint-best early stopping. Returns the parameters
/// from the epoch with the lowest validation loss (the initial model when
/// `max_epochs` is 0) together with the full history.
pub fn train_model(
    model: &GroundingModel,
    train: &Dataset,
    valid: &Dataset,
    cfg: &TrainConfig,
) -> Result<(GroundingModel, TrainHistory)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    if valid.is_empty() {
        return Err(Error::invalid("validation split is empty"));
    }
    if model.representation() == Representation::Phonetic
        && (train.alphabet != model.alphabet || valid.alphabet != model.alphabet)
    {
        return Err(Error::invalid(
            "dataset alphabet does not match the model's alphabet",
        ));
    }
    let mut m = model.clone();
    m.step = StepConfig { dt: cfg.dt };
    let train_targets = encode_all(train, &m)?;
    let valid_targets = encode_all(valid, &m)?;

    let mut state = RmspropState::new(&m);
    let mut rng = Rng::new(cfg.seed);
    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: None,
        stop_reason: StopReason::MaxEpochs,
    };
    let mut best: Option<(f64, GroundingModel, usize)> = None;
    let mut stale = 0usize;
    let n = train.records.len();
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 1..=cfg.max_epochs {
        let tick = Instant::now();
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (batch_loss, mut grads) =
                batch_gradients(&m, train, &train_targets, batch, cfg.feedback, cfg.workers)?;
            loss_sum += batch_loss;
            grads.scale(1.0 / batch.len() as f64);
            clip_global_norm(&mut grads, cfg.clip_norm);
            rmsprop_update(
                &mut m,
                &grads,
                &mut state,
                cfg.learning_rate,
                cfg.rmsprop_decay,
                cfg.rmsprop_epsilon,
            )?;
        }
        let (valid_loss, valid_acc) = evaluate(&m, valid, &valid_targets)?;
        history.epochs.push(EpochStats {
            epoch,
            train_loss: loss_sum / n as f64,
            valid_loss,
            valid_acc,
            wall_ms: tick.elapsed().as_secs_f64() * 1e3,
        });
        // Strict improvement only; NaN never improves.
        if best.as_ref().map_or(true, |(b, _, _)| valid_loss < *b) {
            best = Some((valid_loss, m.clone(), epoch));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                history.stop_reason = StopReason::Patience;
                break;
            }
        }
    }

    match best {
        Some((_, best_model, best_epoch)) => {
            history.best_epoch = Some(best_epoch);
            Ok((best_model, history))
        }
        None => Ok((m, history)),
    }
}

fn encode_all(ds: &Dataset, model: &GroundingModel) -> Result<Vec<Matrix>> {
    ds.records
        .iter()
        .map(|r| encode_label(r, model.representation(), ds))
        .collect()
}

/// Loss and gradient summed over the batch records (in batch order). With
/// several workers the records are chunked, but every per-record gradient
/// is reduced on the calling thread in the same order, so the result is
/// identical for any worker count.
pub fn batch_gradients(
    model: &GroundingModel,
    ds: &Dataset,
    targets: &[Matrix],
    batch: &[usize],
    feedback: Feedback,
    workers: usize,
) -> Result<(f64, GradientSet)> {
    let per_record: Vec<(f64, GradientSet)> = if workers <= 1 || batch.len() <= 1 {
        batch
            .iter()
            .map(|&i| bptt_gradients(model, &ds.records[i], &targets[i], feedback))
            .collect::<Result<_>>()?
    } else {
        let chunk = batch.len().div_ceil(workers);
        std::thread::scope(|scope| {
            let handles: Vec<_> = batch
                .chunks(chunk)
                .map(|ids| {
                    scope.spawn(move || {
                        ids.iter()
                            .map(|&i| bptt_gradients(model, &ds.records[i], &targets[i], feedback))
                            .collect::<Result<Vec<_>>>()
                    })
                })
                .collect();
            let mut all = Vec::with_capacity(batch.len());
            for handle in handles {
                all.extend(handle.join().expect("gradient worker panicked")?);
            }
            Ok::<_, Error>(all)
        })?
    };
    let mut grads = GradientSet::zeros_like(model);
    let mut loss_sum = 0.0;
    for (l, g) in &per_record {
        loss_sum += *l;
        grads.add(g)?;
    }
    Ok((loss_sum, grads))
}

/// Mean self-feedback loss and pooled per-step accuracy over a split.
fn evaluate(model: &GroundingModel, ds: &Dataset, targets: &[Matrix]) -> Result<(f64, f64)> {
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    let mut steps = 0usize;
    for (record, target) in ds.records.iter().zip(targets) {
        let trace = forward_grounded(model, record, Feedback::SelfFeedback, None)?;
        loss_sum += loss(trace.outputs(), target, model.representation())?;
        let predicted = decode_tokens(trace.outputs(), model.representation(), ds)?;
        let expected = match model.representation() {
            Representation::Phonetic => &record.label_phonemes,
            Representation::Embedding => &record.label_text,
        };
        correct += predicted.iter().zip(expected).filter(|(p, t)| p == t).count();
        steps += expected.len();
    }
    Ok((
        loss_sum / ds.records.len() as f64,
        correct as f64 / steps.max(1) as f64,
    ))
}

/// Per-run test accuracies (in percent), their mean, and the standard
/// error of the mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub stderr: f64,
}

impl fmt::Display for CrossValidation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} ± {:.3}", self.mean, self.stderr)
    }
}

/// Repeated random sub-sampling: each run draws its own split and its own
/// freshly initialized model from a seed derived from `cfg.seed`, trains,
/// and scores per-step accuracy on its test subset.
pub fn cross_validate<F>(
    build: F,
    ds: &Dataset,
    cfg: &TrainConfig,
    runs: usize,
) -> Result<CrossValidation>
where
    F: Fn(u64) -> Result<GroundingModel>,
{
    if runs < 2 {
        return Err(Error::invalid(format!(
            "cross-validation needs at least 2 runs, got {runs}"
        )));
    }
    cfg.validate()?;
    let base = Rng::new(cfg.seed);
    let mut accuracies = Vec::with_capacity(runs);
    for r in 0..runs {
        let seed_r = base.derive_seed(r as u64);
        let split = split_dataset(ds, cfg.split_fractions, seed_r)?;
        let train_ds = ds.subset(&split.train)?;
        let valid_ds = ds.subset(&split.valid)?;
        let test_ds = ds.subset(&split.test)?;
        let model = build(seed_r)?;
        let mut run_cfg = cfg.clone();
        run_cfg.seed = seed_r;
        let (trained, _) = train_model(&model, &train_ds, &valid_ds, &run_cfg)?;
        let report = crate::analysis::accuracy(&trained, &test_ds, None, Feedback::SelfFeedback)?;
        accuracies.push(report.per_step_accuracy * 100.0);
    }
    let mean = accuracies.iter().sum::<f64>() / runs as f64;
    let var = accuracies
        .iter()
        .map(|a| (a - mean) * (a - mean))
        .sum::<f64>()
        / (runs as f64 - 1.0);
    let stderr = (var / runs as f64).sqrt();
    Ok(CrossValidation {
        accuracies,
        mean,
        stderr,
    })
}
