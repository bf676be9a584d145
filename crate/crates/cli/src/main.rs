//! tau-ground: generate corpora, train multiple-timescale recurrent
//! networks that ground sensory sequences in language, and probe the
//! results.
//!
//! Every subcommand reads the same JSON run configuration (see
//! `config::RunConfig`); explicit flags override individual fields. Exit
//! codes: 0 success, 1 verification or validation failure, 2 I/O error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tau_ground::grounding::{Feedback, Variant};
use tau_ground::{Error, Result};

#[derive(Parser)]
#[command(
    name = "tau-ground",
    version,
    about = "Multiple-timescale recurrent networks for crossmodal sequence grounding"
)]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (the TAU_GROUND_OUT environment variable
    /// overrides even this).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Base seed; every random choice a command makes flows from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Dataset directory to read (gen writes to --out instead).
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset into the output directory.
    Gen {
        /// Generator kind: toy or lissajous.
        #[arg(long)]
        kind: Option<String>,
        /// Overwrite a non-empty output directory.
        #[arg(long)]
        force: bool,
    },
    /// Train a model; writes checkpoint.json, history.csv, the merged
    /// run_config.json, and the pre-training timescale snapshot. There is
    /// no resume: every invocation starts fresh from the seed.
    Train {
        /// Network variant: ctrnn (all timescales pinned to 1), mtrnn
        /// (fixed hierarchy), or amtrnn (per-unit trainable timescales).
        #[arg(long)]
        variant: Option<String>,
        /// Comma-separated modality subset (default: all in the dataset).
        #[arg(long)]
        modalities: Option<String>,
        /// Decoder input mode while training: teacher-forced or
        /// self-feedback.
        #[arg(long)]
        feedback: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        patience: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        /// Threads for within-batch gradient computation; results are
        /// identical for any worker count.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Score a checkpoint on a deterministic dataset split, or train
    /// several fresh models (--runs) and report the accuracy spread.
    Eval {
        /// Checkpoint to score (ignored with --runs, which trains fresh
        /// models).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Which split to score: train, valid, or test.
        #[arg(long, default_value = "test")]
        split: String,
        /// Repeated random subsampling: train this many runs on
        /// independent splits and print "mean ± stderr".
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        modalities: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Verify analytic gradients against central finite differences on a
    /// small fresh model; exits 1 when any array misses the tolerance.
    Gradcheck {
        /// Finite-difference step size.
        #[arg(long, default_value_t = 1e-5)]
        h: f64,
        /// Maximum acceptable relative error.
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        /// Deliberately corrupt one gradient array first, to demonstrate
        /// the check catches it.
        #[arg(long)]
        corrupt: bool,
        #[arg(long)]
        variant: Option<String>,
    },
    /// Produce analysis artifacts from a checkpoint: learned-vs-initial
    /// timescales, per-unit activation traces, or 2-D latent projections.
    Analyze {
        /// What to produce: timescales, traces, or latent.
        what: String,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Label component coloring the latent scatter: action, object,
        /// or a word index.
        #[arg(long, default_value = "action")]
        by: String,
        /// Record id to trace (default: the dataset's first record).
        #[arg(long)]
        record: Option<String>,
        /// Timescale snapshot captured before training (default: the
        /// initial_timescales.json next to the checkpoint).
        #[arg(long)]
        initial: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Io { .. } | Error::Format(_) => 2,
                _ => 1,
            })
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    let mut cfg = config::load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    if let Some(dataset) = cli.dataset {
        cfg.dataset = Some(dataset);
    }
    let out = config::resolve_out_dir(&cfg, cli.out.as_deref());
    match cli.command {
        Cmd::Gen { kind, force } => {
            if let Some(kind) = kind {
                cfg.generator.kind = kind;
            }
            commands::cmd_gen(&cfg, &out, force)
        }
        Cmd::Train {
            variant,
            modalities,
            feedback,
            epochs,
            patience,
            batch_size,
            learning_rate,
            workers,
        } => {
            apply_model_flags(&mut cfg, variant.as_deref(), modalities.as_deref())?;
            if let Some(f) = feedback {
                cfg.train.feedback = Feedback::parse(&f)?;
            }
            if let Some(v) = epochs {
                cfg.train.max_epochs = v;
            }
            if let Some(v) = patience {
                cfg.train.patience = v;
            }
            if let Some(v) = batch_size {
                cfg.train.batch_size = v;
            }
            if let Some(v) = learning_rate {
                cfg.train.learning_rate = v;
            }
            if let Some(v) = workers {
                cfg.train.workers = v;
            }
            commands::cmd_train(&cfg, &out)
        }
        Cmd::Eval {
            checkpoint,
            split,
            runs,
            variant,
            modalities,
            epochs,
            workers,
        } => {
            apply_model_flags(&mut cfg, variant.as_deref(), modalities.as_deref())?;
            if let Some(v) = epochs {
                cfg.train.max_epochs = v;
            }
            if let Some(v) = workers {
                cfg.train.workers = v;
            }
            if runs.is_none() && checkpoint.is_none() {
                return Err(Error::invalid(
                    "eval needs --checkpoint (or --runs to train fresh models)",
                ));
            }
            let checkpoint = checkpoint.unwrap_or_default();
            commands::cmd_eval(&cfg, &out, &checkpoint, &split, runs)
        }
        Cmd::Gradcheck {
            h,
            tol,
            corrupt,
            variant,
        } => {
            apply_model_flags(&mut cfg, variant.as_deref(), None)?;
            commands::cmd_gradcheck(&cfg, h, tol, corrupt)
        }
        Cmd::Analyze {
            what,
            checkpoint,
            by,
            record,
            initial,
        } => commands::cmd_analyze(
            &cfg,
            &out,
            &what,
            &checkpoint,
            record.as_deref(),
            &by,
            initial.as_deref(),
        ),
    }
}

fn apply_model_flags(
    cfg: &mut config::RunConfig,
    variant: Option<&str>,
    modalities: Option<&str>,
) -> Result<()> {
    if let Some(v) = variant {
        cfg.model.variant = Variant::parse(v)?;
    }
    if let Some(list) = modalities {
        let names: Vec<String> = list
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        cfg.modalities = Some(names);
    }
    Ok(())
}
