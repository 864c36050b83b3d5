use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;
use serde_json::json;
use ssvep_align_core::align::{align_transform, load_model, pretrain_then_finetune, save_model};
use ssvep_align_core::data::{
    read_epochs, save_epochs, split_calibration_test, synth_generate, DatasetManifest, EpochSet,
    SplitOrder,
};
use ssvep_align_core::decode::{accuracy, trca_fit};
use ssvep_align_core::dsp::{preprocess, psd_welch, Spectrum};
use ssvep_align_core::eval::{
    emit_report, run_loso, sweep_sources, write_run_manifest, Cohort, EvaluationReport, ReportFormat,
    RunOptions, SchemeId,
};
use ssvep_align_core::Error;

use crate::config::RunConfig;
use crate::{
    AlignApplyArgs, AlignCommand, AlignTrainArgs, Cli, CliError, Command, DecodeArgs, EvaluateArgs,
    FormatArg, PreprocessArgs, PsdArgs, SynthArgs,
};

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Preprocess(a) => preprocess_cmd(a),
        Command::Align(AlignCommand::Train(a)) => align_train(a),
        Command::Align(AlignCommand::Apply(a)) => align_apply(a),
        Command::Decode(a) => decode(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Psd(a) => psd(a),
    }
}

/// Applies the config's log level unless the environment already set one.
fn apply_verbosity(cfg: &RunConfig) {
    if std::env::var_os(crate::LOG_ENV).is_none() {
        if let Some(level) = cfg.verbosity.as_deref().and_then(|v| v.parse().ok()) {
            log::set_max_level(level);
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::IoFailure {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into())
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = RunConfig::load_or_default(a.config.as_deref())?;
    apply_verbosity(&cfg);
    let mut sc = cfg.synth.unwrap_or_default();
    if let Some(seed) = a.seed {
        sc.mixing_seed = seed;
        sc.noise_seed = seed.wrapping_add(1);
    }
    if let Some(n) = a.subjects {
        sc.n_subjects = n;
    }
    if let Some(snr) = a.snr_db {
        sc.snr_db = snr;
    }
    let out = synth_generate(&sc)?;
    create_dir(&a.out)?;
    let mut ids = Vec::new();
    for s in &out.subjects {
        save_epochs(s, a.out.join(format!("{}.epoc", s.subject_id)))?;
        ids.push(s.subject_id.clone());
    }
    let sidecar = json!({
        "config": sc,
        "subjects": out.subjects.iter().zip(&out.mixing).map(|(s, m)| json!({
            "subject_id": s.subject_id,
            "mixing": m.rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
    });
    let path = a.out.join("mixing.json");
    fs::write(&path, serde_json::to_string_pretty(&sidecar)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;

    // a manifest that loads the generated files as they are
    let manifest = DatasetManifest {
        subject_ids: ids,
        path_template: "{subject}.epoc".into(),
        fs_raw: sc.fs,
        onset_offset_s: 0.0,
        latency_s: 0.0,
        window_s: sc.n_samples() as f64 / sc.fs,
        channel_subset: Vec::new(),
        notch_hz: None,
        notch_q: 35.0,
        decim_factor: 1,
        base_dir: None,
    };
    let path = a.out.join("manifest.toml");
    fs::write(&path, toml::to_string(&manifest)?).with_context(|| format!("writing {}", path.display()))?;
    info!("wrote {} subjects to {}", out.subjects.len(), a.out.display());
    Ok(())
}

fn preprocess_cmd(a: PreprocessArgs) -> Result<()> {
    let manifest = DatasetManifest::from_file(&a.manifest)?;
    let raw = read_epochs(&a.input)?;
    let out = preprocess(&raw, &manifest)?;
    save_epochs(&out, &a.out)?;
    info!(
        "{}: {} trials, {} channels, {} samples at {} Hz",
        a.out.display(),
        out.n_trials(),
        out.n_channels(),
        out.n_samples(),
        out.fs
    );
    Ok(())
}

fn calibration_part(set: &EpochSet, calib: Option<usize>) -> Result<EpochSet> {
    Ok(match calib {
        Some(n) => split_calibration_test(set, n, SplitOrder::FirstN, 0)?.0,
        None => set.clone(),
    })
}

fn align_train(a: AlignTrainArgs) -> Result<()> {
    let cfg = RunConfig::load_or_default(a.config.as_deref())?;
    apply_verbosity(&cfg);
    let mut dan = cfg.dan.clone();
    if let Some(seed) = a.seed {
        dan.seed = seed;
    }
    let target = calibration_part(&read_epochs(&a.target)?, a.calib)?;
    let sources: Vec<EpochSet> = a.sources.iter().map(read_epochs).collect::<Result<_, _>>()?;
    let refs: Vec<&EpochSet> = sources.iter().collect();
    let fit = pretrain_then_finetune(&refs, &target, &dan)?;

    create_dir(&a.out)?;
    save_model(&fit.pretrained, a.out.join("g0.danm"))?;
    let mut entries = Vec::new();
    for (k, (m, path)) in fit.per_source.iter().zip(&a.sources).enumerate() {
        let file = format!("g0_k{k}.danm");
        save_model(m, a.out.join(&file))?;
        entries.push(json!({
            "checkpoint": file,
            "source": path,
            "best_epoch": fit.finetune[k].best_epoch,
            "history": fit.finetune[k].history,
        }));
    }
    let summary = json!({
        "target": a.target,
        "config": dan,
        "single_source_fallback": fit.single_source_fallback,
        "pretrain": { "checkpoint": "g0.danm", "best_epoch": fit.pretrain.best_epoch, "history": fit.pretrain.history },
        "finetune": entries,
    });
    fs::write(a.out.join("training.json"), serde_json::to_string_pretty(&summary)? + "\n")
        .context("writing training.json")?;
    println!(
        "{}",
        json!({ "checkpoints": fit.per_source.len() + 1, "pretrain_val_loss": fit.pretrain.best_val_loss() })
    );
    Ok(())
}

fn align_apply(a: AlignApplyArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    create_dir(&a.out)?;
    for path in &a.input {
        let set = read_epochs(path)?;
        let out = align_transform(&model, &set, &a.target_id)?;
        let dest = a.out.join(format!("{}_aligned.epoc", stem(path)));
        save_epochs(&out, &dest)?;
        info!("{} -> {}", path.display(), dest.display());
    }
    Ok(())
}

fn decode(a: DecodeArgs) -> Result<()> {
    let cfg = RunConfig::load_or_default(a.config.as_deref())?;
    apply_verbosity(&cfg);
    let mut dc = cfg.decode.clone();
    if let Some(b) = a.bands {
        dc.n_bands = b;
    }
    let set = read_epochs(&a.input)?;
    let (calib, test) = split_calibration_test(&set, a.calib, SplitOrder::FirstN, 0)?;
    let extra: Vec<EpochSet> = a.extra.iter().map(read_epochs).collect::<Result<_, _>>()?;
    let pool = calib.concat(&extra.iter().collect::<Vec<_>>())?;
    let bank = dc.bank(set.fs, set.n_samples())?;
    let model = trca_fit(&pool, &bank)?;
    let pred = model.predict(&bank, &test)?;
    let acc = accuracy(&pred, &test.labels)?;
    if let Some(out) = &a.out {
        let mut w = csv::Writer::from_path(out).with_context(|| format!("writing {}", out.display()))?;
        w.write_record(["trial", "label", "predicted"])?;
        for (i, (l, p)) in test.labels.iter().zip(&pred).enumerate() {
            w.write_record([i.to_string(), l.to_string(), p.to_string()])?;
        }
        w.flush()?;
    }
    println!(
        "{}",
        json!({ "accuracy": acc, "n_test": test.n_trials(), "n_calibration_pool": pool.n_trials() })
    );
    Ok(())
}

fn resolve_evaluation(a: &EvaluateArgs) -> Result<(RunConfig, Vec<SchemeId>, PathBuf, RunOptions)> {
    let mut cfg = RunConfig::load_or_default(a.config.as_deref())?;
    apply_verbosity(&cfg);
    if let Some(seed) = a.seed {
        cfg.task.seed = seed;
    }
    if let Some(r) = a.repeats {
        cfg.task.repeats = r;
    }
    if !a.calib.is_empty() {
        cfg.task.n_calib = a.calib.clone();
    }
    cfg.validate()?;
    if a.sources.contains(&0) {
        return Err(Error::config("sources", "counts must be >= 1").into());
    }
    if !a.sources.is_empty() && !a.calib.is_empty() {
        return Err(Error::config("calib", "a source sweep fixes the calibration size; drop --calib").into());
    }
    let schemes = SchemeId::parse_list(&a.schemes)?;
    let out = a.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    let opts = RunOptions {
        jobs: a.jobs,
        record_timing: a.timing,
    };
    Ok((cfg, schemes, out, opts))
}

fn cohorts(cfg: &RunConfig) -> Result<(Cohort, Cohort)> {
    match &cfg.target {
        Some(t) => {
            let target = Cohort::load("target", t)?;
            let source = match &cfg.source {
                Some(s) => Cohort::load("source", s)?,
                None => target.clone(),
            };
            Ok((source, target))
        }
        None => {
            let sc = cfg.synth.clone().unwrap_or_default();
            let c = Cohort::from_sets("synth", synth_generate(&sc)?.subjects);
            Ok((c.clone(), c))
        }
    }
}

fn write_outputs(report: &EvaluationReport, out: &Path, format: Option<FormatArg>) -> Result<()> {
    create_dir(out)?;
    let formats: &[ReportFormat] = match format {
        Some(FormatArg::Csv) => &[ReportFormat::Csv],
        Some(FormatArg::Jsonl) => &[ReportFormat::Jsonl],
        None => &[ReportFormat::Csv, ReportFormat::Jsonl],
    };
    for &f in formats {
        let name = match f {
            ReportFormat::Csv => "cells.csv",
            ReportFormat::Jsonl => "cells.jsonl",
        };
        emit_report(report, out.join(name), f)?;
    }
    write_run_manifest(report, out.join("run.json"))?;
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let (cfg, schemes, out, opts) = resolve_evaluation(&a)?;
    if a.dry_run {
        let plan = json!({
            "dry_run": true,
            "schemes": schemes,
            "task": cfg.task,
            "sources": a.sources,
            "dan": cfg.dan,
            "decode": cfg.decode,
            "out": out,
        });
        println!("{plan}");
        return Ok(());
    }
    let (source, target) = cohorts(&cfg)?;
    let report = if a.sources.is_empty() {
        run_loso(&cfg.task, &source, &target, &schemes, &cfg.dan, &cfg.decode, opts)?
    } else {
        sweep_sources(&cfg.task, &source, &target, &schemes, &cfg.dan, &cfg.decode, &a.sources, opts)?
    };
    write_outputs(&report, &out, a.format)?;
    for agg in &report.aggregates {
        println!(
            "{:<18} n_calib={} n_sources={} mean={:.4} std={:.4} cells={}",
            agg.scheme.as_str(),
            agg.n_calib,
            agg.n_sources,
            agg.mean,
            agg.std,
            agg.n_cells
        );
    }
    for f in &report.failures {
        log::warn!("fold {} failed: {}", f.target_subject, f.message);
    }
    Ok(())
}

fn psd(a: PsdArgs) -> Result<()> {
    let set = read_epochs(&a.input)?;
    let ch = set
        .channel_names
        .iter()
        .position(|c| *c == a.channel)
        .ok_or_else(|| Error::UnknownChannel(a.channel.clone()))?;
    let mut trials: Vec<usize> = match a.stimulus {
        Some(k) if k >= set.n_stimuli() => {
            return Err(CliError::SelectorOutOfRange(format!(
                "stimulus {k} (recording has {})",
                set.n_stimuli()
            ))
            .into())
        }
        Some(k) => set.indices_of(k),
        None => (0..set.n_trials()).collect(),
    };
    if a.trial != "all" {
        let i: usize = a
            .trial
            .parse()
            .map_err(|_| CliError::SelectorOutOfRange(format!("trial `{}`", a.trial)))?;
        if i >= trials.len() {
            return Err(CliError::SelectorOutOfRange(format!("trial {i} of {} selected trials", trials.len())).into());
        }
        trials = vec![trials[i]];
    }
    if trials.is_empty() {
        return Err(CliError::SelectorOutOfRange("no trials selected".into()).into());
    }
    let seg = a.seg_len.unwrap_or(set.n_samples());
    let spectra: Vec<Spectrum> = trials
        .iter()
        .map(|&i| psd_welch(&set.trial(i).row(ch).to_vec(), set.fs, seg, a.overlap))
        .collect::<Result<_, _>>()?;
    let mean = Spectrum::mean(&spectra).expect("at least one trial");
    fs::write(&a.out, mean.to_csv()).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}
