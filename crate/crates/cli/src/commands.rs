//! The five subcommands. Each returns the process exit code on success so
//! verification commands can fail the run (exit 1) without manufacturing
//! an error; genuine errors propagate and are mapped in `main`.

use std::fs;
use std::path::Path;

use tau_ground::analysis::{
    accuracy, latent_projection, snapshot_timescales, svg_scatter, timescale_report,
    AccuracyReport, LatentSource, TimescaleSnapshot,
};
use tau_ground::data::{
    encode_label, gen_lissajous_dataset, gen_toy_grounding, load_dataset, save_dataset, toy_vocab,
    Dataset, Representation, SequenceRecord, SIL,
};
use tau_ground::grounding::{
    build_model, load_checkpoint, save_checkpoint, Checkpoint, Feedback, GroundingModel,
    ModelConfig,
};
use tau_ground::numeric::{Matrix, Rng};
use tau_ground::training::{
    bptt_gradients, cross_validate, grad_check, grad_check_against, param_count, train_model,
    StopReason,
};
use tau_ground::{analysis::export_traces, Error, Result};

use crate::config::{
    model_config_for, read_json, split_and_normalize, validate_config, write_json, RunConfig,
};

/// Generate a synthetic corpus into `out` plus a provenance file recording
/// every parameter, so the directory explains itself later. Both
/// generators are deterministic in the seed, making reruns byte-identical.
pub fn cmd_gen(cfg: &RunConfig, out: &Path, force: bool) -> Result<u8> {
    validate_config(cfg)?;
    if out.exists() {
        let occupied = fs::read_dir(out)
            .map_err(|e| Error::io(out, e))?
            .next()
            .is_some();
        if occupied && !force {
            return Err(Error::invalid(format!(
                "output directory {} is not empty; pass --force to overwrite",
                out.display()
            )));
        }
    }
    let ds = generate(cfg)?;
    save_dataset(out, &ds)?;
    #[derive(serde::Serialize)]
    struct Provenance<'a> {
        command: &'static str,
        seed: u64,
        generator: &'a crate::config::GenConfig,
    }
    write_json(
        &out.join("provenance.json"),
        &Provenance {
            command: "gen",
            seed: cfg.train.seed,
            generator: &cfg.generator,
        },
    )?;
    println!(
        "wrote {} records ({} generator, seed {}) to {}",
        ds.len(),
        cfg.generator.kind,
        cfg.train.seed,
        out.display()
    );
    Ok(0)
}

fn generate(cfg: &RunConfig) -> Result<Dataset> {
    let g = &cfg.generator;
    match g.kind.as_str() {
        "toy" => {
            // The built-in vocabulary lists five action words, then five
            // object words; the generator takes actions-then-objects.
            let pool = toy_vocab();
            if g.actions > 5 || g.objects > 5 {
                return Err(Error::invalid(
                    "the built-in vocabulary covers at most 5 actions and 5 objects",
                ));
            }
            let mut vocab = pool[..g.actions].to_vec();
            vocab.extend_from_slice(&pool[5..5 + g.objects]);
            gen_toy_grounding(
                g.actions,
                g.objects,
                &g.modality_dims,
                g.seq_len,
                g.noise_sigma,
                &vocab,
                g.records_per_pair,
                &mut Rng::new(cfg.train.seed),
            )
        }
        "lissajous" => gen_lissajous_dataset(
            &g.patterns,
            g.delta,
            g.sigma,
            g.steps_per_cycle,
            g.cycles,
            g.transition_prob,
            g.n_records,
            cfg.train.seed,
        ),
        other => Err(Error::invalid(format!(
            "unknown generator '{other}' (expected toy or lissajous)"
        ))),
    }
}

/// Split, normalize, train, and write the run's artifacts: the merged
/// config (provenance for later `eval`/`analyze`), the freshly built
/// model's timescales (the baseline `analyze timescales` compares
/// against), the best checkpoint, and the epoch-by-epoch history.
///
/// There is no resume: every invocation starts a fresh model from the
/// seed, and an interrupted run leaves only the files written so far.
pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<u8> {
    validate_config(cfg)?;
    let ds_dir = cfg.dataset.as_ref().ok_or_else(|| {
        Error::invalid("no dataset configured; set \"dataset\" in the config or pass --dataset")
    })?;
    let ds = load_dataset(ds_dir)?;
    let mc = model_config_for(cfg, &ds)?;
    let (split, whole) = split_and_normalize(cfg, &ds)?;
    let train_ds = whole.subset(&split.train)?;
    let valid_ds = whole.subset(&split.valid)?;
    let test_ds = whole.subset(&split.test)?;
    let model = build_model(&mc, &mut Rng::new(cfg.train.seed))?;

    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let merged = RunConfig {
        model: mc,
        ..cfg.clone()
    };
    write_json(&out.join("run_config.json"), &merged)?;
    write_json(
        &out.join("initial_timescales.json"),
        &snapshot_timescales(&model),
    )?;

    let (best, history) = train_model(&model, &train_ds, &valid_ds, &cfg.train)?;
    fs::write(out.join("history.csv"), history.to_csv())
        .map_err(|e| Error::io(out.join("history.csv"), e))?;
    let best_epoch = history.best_epoch.unwrap_or(0);
    save_checkpoint(
        &out.join("checkpoint.json"),
        &Checkpoint::new(best.clone(), best_epoch, history.best_valid_loss()),
    )?;

    let report = accuracy(&best, &test_ds, None, Feedback::SelfFeedback)?;
    let stop = match history.stop_reason {
        StopReason::MaxEpochs => "max epochs",
        StopReason::Patience => "patience",
    };
    println!(
        "trained {} epochs (stopped: {stop}), best epoch {} with valid loss {:.6}",
        history.epochs.len(),
        best_epoch,
        history.best_valid_loss().unwrap_or(f64::NAN),
    );
    println!(
        "test: {} records, per-step accuracy {:.2}%, utterance exact match {:.2}%",
        report.records,
        100.0 * report.per_step_accuracy,
        100.0 * report.utterance_exact_match,
    );
    println!("wrote {}", out.join("checkpoint.json").display());
    Ok(0)
}

/// Score a checkpoint on one deterministic split of the dataset (the same
/// seed and fractions reproduce the same split `train` used), or — with
/// `--runs N` — train N fresh models on independent splits and report the
/// accuracy spread.
pub fn cmd_eval(
    cfg: &RunConfig,
    out: &Path,
    checkpoint: &Path,
    split_name: &str,
    runs: Option<usize>,
) -> Result<u8> {
    validate_config(cfg)?;
    let ds_dir = cfg.dataset.as_ref().ok_or_else(|| {
        Error::invalid("no dataset configured; set \"dataset\" in the config or pass --dataset")
    })?;
    let ds = load_dataset(ds_dir)?;

    if let Some(runs) = runs {
        // Repeated random subsampling: the checkpoint is ignored; each run
        // builds and trains its own model. Scaling constants come from the
        // whole corpus here, since every run re-splits it differently.
        let mc = model_config_for(cfg, &ds)?;
        let whole = tau_ground::data::normalize_streams(&ds)?;
        let cv = cross_validate(
            |seed| build_model(&mc, &mut Rng::new(seed)),
            &whole,
            &cfg.train,
            runs,
        )?;
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        write_json(&out.join("cross_validation.json"), &cv)?;
        println!("test per-step accuracy over {runs} runs: {cv} %");
        return Ok(0);
    }

    let ck = load_checkpoint(checkpoint)?;
    check_compatible(&ck.model, &ds)?;
    let (split, whole) = split_and_normalize(cfg, &ds)?;
    let indices = match split_name {
        "train" => &split.train,
        "valid" => &split.valid,
        "test" => &split.test,
        other => {
            return Err(Error::invalid(format!(
                "unknown split '{other}' (expected train, valid, or test)"
            )))
        }
    };
    let report = accuracy(&ck.model, &whole, Some(indices), Feedback::SelfFeedback)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_json(&out.join("eval_report.json"), &report)?;
    fs::write(out.join("eval_report.csv"), report_csv(&report))
        .map_err(|e| Error::io(out.join("eval_report.csv"), e))?;
    println!(
        "{split_name} split: {} records, per-step accuracy {:.4}%, utterance exact match {:.4}%",
        report.records,
        100.0 * report.per_step_accuracy,
        100.0 * report.utterance_exact_match,
    );
    Ok(0)
}

/// A checkpoint only makes sense against a dataset shaped like the one it
/// was trained on; catch mismatches before any compute.
fn check_compatible(model: &GroundingModel, ds: &Dataset) -> Result<()> {
    for (enc, name) in model.encoders.iter().zip(&model.modalities) {
        match ds.modality_dim(name) {
            None => {
                return Err(Error::invalid(format!(
                    "checkpoint expects modality '{name}', which the dataset lacks"
                )))
            }
            Some(dim) if dim != enc.mtrnn.input_dim => {
                return Err(Error::shape(format!(
                    "modality '{name}' is {dim}-dimensional in the dataset but the checkpoint \
                     encoder reads {}",
                    enc.mtrnn.input_dim
                )))
            }
            Some(_) => {}
        }
    }
    if model.representation() == Representation::Phonetic && model.alphabet != ds.alphabet {
        return Err(Error::invalid(
            "checkpoint and dataset alphabets differ; evaluate on the corpus the model was \
             trained for",
        ));
    }
    Ok(())
}

fn report_csv(report: &AccuracyReport) -> String {
    let mut out = String::from("id,steps,correct_steps,exact,predicted,target\n");
    for d in &report.details {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            d.id,
            d.target.len(),
            d.correct_steps(),
            d.exact(),
            d.predicted.join(" "),
            d.target.join(" "),
        ));
    }
    out
}

/// Build a small fresh model and one synthetic record, then compare the
/// analytic gradients of every parameter array against central finite
/// differences. `--corrupt` deliberately poisons one array first, to show
/// a wrong gradient actually trips the check.
pub fn cmd_gradcheck(cfg: &RunConfig, h: f64, tol: f64, corrupt: bool) -> Result<u8> {
    validate_config(cfg)?;
    let mut mc = cfg.model.clone();
    if mc == ModelConfig::default() {
        // Nothing configured: shrink to a compact two-encoder architecture
        // so the 2-forward-passes-per-parameter sweep stays quick.
        mc.enc_io = 8;
        mc.enc_cf = 6;
        mc.enc_cs = 4;
        mc.enc_csc = 2;
        mc.dec_io = 8;
        mc.dec_cf = 6;
        mc.dec_cs = 4;
        mc.dec_csc = 3;
    }
    if mc.modalities.is_empty() && mc.bias_records.is_empty() {
        mc.modalities = vec![("m0".into(), 3), ("m1".into(), 2)];
    }
    if mc.representation == Representation::Phonetic && mc.alphabet.is_empty() {
        mc.alphabet = vec!["a".into(), "b".into(), "c".into(), SIL.into()];
    }
    if mc.representation == Representation::Embedding && mc.embed_dim == 0 {
        mc.embed_dim = 4;
    }

    let mut rng = Rng::new(cfg.train.seed);
    let model = build_model(&mc, &mut rng)?;
    let params = param_count(&model);
    if params > 5000 {
        eprintln!(
            "warning: {params} parameters; the finite-difference sweep runs two forward passes \
             per parameter and will be slow"
        );
    }
    let (record, stub) = synth_record(&mc, &mut rng);
    let targets = encode_label(&record, mc.representation, &stub)?;
    let feedback = match cfg.train.feedback {
        // The analytic gradient is undefined through an argmax; check the
        // differentiable mode closest to it instead.
        Feedback::HardSelfFeedback => Feedback::SelfFeedback,
        f => f,
    };
    let report = if corrupt {
        let (_, mut grads) = bptt_gradients(&model, &record, &targets, feedback)?;
        for v in &mut grads.b_out {
            *v = *v * 1.1 + 1e-3;
        }
        grad_check_against(&model, &record, &targets, feedback, h, tol, &grads)?
    } else {
        grad_check(&model, &record, &targets, feedback, h, tol)?
    };
    println!("{report}");
    Ok(if report.passed() { 0 } else { 1 })
}

/// One record matching the architecture: seeded noise streams for each
/// modality (or none for a standalone decoder) and a short label.
fn synth_record(mc: &ModelConfig, rng: &mut Rng) -> (SequenceRecord, Dataset) {
    let mut stub = Dataset::new(mc.modalities.clone(), mc.alphabet.clone());
    let mut record = SequenceRecord {
        id: mc
            .bias_records
            .first()
            .cloned()
            .unwrap_or_else(|| "gradcheck".into()),
        label_text: Vec::new(),
        label_phonemes: Vec::new(),
        streams: Default::default(),
    };
    for (name, dim) in &mc.modalities {
        let stream = Matrix::from_fn(10, *dim, |_, _| rng.uniform());
        record.streams.insert(name.clone(), stream);
    }
    match mc.representation {
        Representation::Phonetic => {
            // Leading silence, two tokens, closing silence — the shape
            // every corpus label takes.
            let sil = SIL.to_string();
            let mut tokens: Vec<String> = mc
                .alphabet
                .iter()
                .filter(|t| *t != &sil)
                .take(2)
                .cloned()
                .collect();
            let mut label = vec![if mc.alphabet.contains(&sil) {
                sil.clone()
            } else {
                mc.alphabet[0].clone()
            }];
            label.append(&mut tokens);
            if mc.alphabet.contains(&sil) {
                label.push(sil);
            }
            record.label_phonemes = label;
        }
        Representation::Embedding => {
            let mut table = std::collections::BTreeMap::new();
            for w in ["w0", "w1"] {
                let vector: Vec<f64> = (0..mc.embed_dim).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
                table.insert(w.to_string(), vector);
                record.label_text.push(w.to_string());
            }
            stub.embedding_table = Some(table);
        }
    }
    (record, stub)
}

/// Dispatch to one of the three analysis products. Filenames under `out`
/// are fixed functions of the inputs, so reruns overwrite rather than
/// accumulate.
pub fn cmd_analyze(
    cfg: &RunConfig,
    out: &Path,
    what: &str,
    checkpoint: &Path,
    record_id: Option<&str>,
    by: &str,
    initial: Option<&Path>,
) -> Result<u8> {
    validate_config(cfg)?;
    if !matches!(what, "timescales" | "traces" | "latent") {
        return Err(Error::invalid(format!(
            "unknown analysis '{what}' (expected timescales, traces, or latent)"
        )));
    }
    let ck = load_checkpoint(checkpoint)?;
    match what {
        "timescales" => analyze_timescales(&ck, out, checkpoint, initial),
        "traces" => analyze_traces(cfg, &ck, out, record_id),
        _ => analyze_latent(cfg, &ck, out, by),
    }
}

fn analyze_timescales(
    ck: &Checkpoint,
    out: &Path,
    checkpoint: &Path,
    initial: Option<&Path>,
) -> Result<u8> {
    let snapshot: Vec<TimescaleSnapshot> = match initial {
        Some(path) => read_json(path)?,
        None => {
            // `train` leaves its pre-training snapshot next to the
            // checkpoint; fall back to a self-comparison when it is gone.
            let sibling = checkpoint
                .parent()
                .map(|d| d.join("initial_timescales.json"))
                .filter(|p| p.exists());
            match sibling {
                Some(path) => read_json(&path)?,
                None => {
                    eprintln!(
                        "note: no initial snapshot found; pass --initial to compare against \
                         training-time values (columns will match the current model)"
                    );
                    snapshot_timescales(&ck.model)
                }
            }
        }
    };
    let report = timescale_report(&ck.model, &snapshot)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join("timescales.csv");
    fs::write(&path, report.to_csv()).map_err(|e| Error::io(&path, e))?;
    for layer in &report.layers {
        println!(
            "{}/{}: learned tau median {:.3} std {:.3} (initial median {:.3} std {:.3})",
            layer.network,
            layer.role,
            layer.learned_stats.median,
            layer.learned_stats.std,
            layer.initial_stats.median,
            layer.initial_stats.std,
        );
    }
    println!("wrote {}", path.display());
    Ok(0)
}

fn analyze_traces(
    cfg: &RunConfig,
    ck: &Checkpoint,
    out: &Path,
    record_id: Option<&str>,
) -> Result<u8> {
    let whole = analysis_dataset(cfg, &ck.model)?;
    let record = match record_id {
        Some(id) => whole
            .records
            .iter()
            .find(|r| r.id == id)
            .ok_or_else(|| Error::invalid(format!("dataset has no record '{id}'")))?,
        None => whole
            .records
            .first()
            .ok_or_else(|| Error::invalid("dataset has no records to trace"))?,
    };
    let paths = export_traces(&ck.model, record, out)?;
    println!("traced record '{}':", record.id);
    for p in &paths {
        println!("wrote {}", p.display());
    }
    Ok(0)
}

fn analyze_latent(cfg: &RunConfig, ck: &Checkpoint, out: &Path, by: &str) -> Result<u8> {
    let component = match by {
        "action" => 0,
        "object" => 1,
        other => other.parse::<usize>().map_err(|_| {
            Error::invalid(format!(
                "--by takes action, object, or a word index, not '{other}'"
            ))
        })?,
    };
    let whole = analysis_dataset(cfg, &ck.model)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    // One scatter per network: each encoder's context slot, then the
    // assembled vector the decoder actually starts from.
    let mut sources: Vec<LatentSource> = (0..ck.model.encoders.len())
        .map(LatentSource::Encoder)
        .collect();
    sources.push(LatentSource::Assembled);
    for source in sources {
        let proj = latent_projection(&ck.model, &whole, None, source, component)?;
        let name = source.name();
        let title = format!("{name} context by {by}");
        let svg_path = out.join(format!("latent_{name}_{by}.svg"));
        fs::write(&svg_path, svg_scatter(&proj, &title)).map_err(|e| Error::io(&svg_path, e))?;
        let csv_path = out.join(format!("latent_{name}_{by}.csv"));
        let mut csv = String::from("id,label,x,y\n");
        for p in &proj.points {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                p.id, p.label, p.coords[0], p.coords[1]
            ));
        }
        fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
        println!(
            "{name}: explained variance {:.1}% + {:.1}%; wrote {} and {}",
            100.0 * proj.explained_ratio[0],
            100.0 * proj.explained_ratio[1],
            svg_path.display(),
            csv_path.display(),
        );
    }
    Ok(0)
}

/// Datasets are analyzed in the same scaling the model was trained in;
/// raw streams would put every activation off its learned operating
/// range. Standalone decoders take the records as-is.
fn analysis_dataset(cfg: &RunConfig, model: &GroundingModel) -> Result<Dataset> {
    let ds_dir = cfg.dataset.as_ref().ok_or_else(|| {
        Error::invalid("no dataset configured; set \"dataset\" in the config or pass --dataset")
    })?;
    let ds = load_dataset(ds_dir)?;
    if model.encoders.is_empty() {
        return Ok(ds);
    }
    check_compatible(model, &ds)?;
    let (_, whole) = split_and_normalize(cfg, &ds)?;
    Ok(whole)
}
