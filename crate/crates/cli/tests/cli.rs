use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ssvep-align"));
    c.env_remove("SSVEP_ALIGN_LOG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = run(args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn error_record(o: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&o.stderr);
    let line = stderr.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|_| panic!("not a JSON record: {stderr}"))
}

const SMALL_SYNTH: &str = r#"
[synth]
n_subjects = 3
freqs = [8.0, 9.0, 10.0, 11.0]
phases = [0.0, 1.5, 3.0, 4.5]
n_trials_per_stim = 4
window_s = 1.0
snr_db = 0.0

[dan]
batch_size = 8
learning_rate = 0.005
pretrain_epochs = 10
finetune_epochs = 4

[decode]
n_bands = 3
"#;

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn help_everywhere() {
    for sub in [
        vec!["--help"],
        vec!["synth", "--help"],
        vec!["preprocess", "--help"],
        vec!["align", "--help"],
        vec!["align", "train", "--help"],
        vec!["align", "apply", "--help"],
        vec!["decode", "--help"],
        vec!["evaluate", "--help"],
        vec!["psd", "--help"],
    ] {
        let out = ok(&sub);
        assert!(out.contains("Usage"), "{sub:?}");
    }
    let out = ok(&["evaluate", "--help"]);
    for flag in ["--config", "--out", "--seed", "--jobs", "--schemes", "--calib", "--sources", "--repeats", "--dry-run", "--format"] {
        assert!(out.contains(flag), "{flag}");
    }
}

#[test]
fn synth_files_are_deterministic_and_decodable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", SMALL_SYNTH);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["synth", "--config", &cfg, "--out", &s(&a)]);
    ok(&["synth", "--config", &cfg, "--out", &s(&b)]);
    let epocs: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "epoc"))
        .collect();
    assert_eq!(epocs.len(), 3);
    assert!(a.join("mixing.json").exists());
    for e in &epocs {
        let name = e.file_name();
        assert_eq!(fs::read(e.path()).unwrap(), fs::read(b.join(&name)).unwrap());
    }
    let sidecar: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("mixing.json")).unwrap()).unwrap();
    assert_eq!(sidecar["subjects"].as_array().unwrap().len(), 3);

    let out = ok(&["decode", "--config", &cfg, "--input", &s(&a.join("synth01.epoc")), "--calib", "2"]);
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert!(v["accuracy"].as_f64().unwrap() >= 0.9, "{out}");
    assert_eq!(v["n_test"], 8);
}

#[test]
fn preprocess_identity_and_idempotence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", SMALL_SYNTH);
    let data = dir.path().join("data");
    ok(&["synth", "--config", &cfg, "--out", &s(&data)]);
    // the generated manifest is an identity pipeline
    let manifest = s(&data.join("manifest.toml"));
    let input = s(&data.join("synth02.epoc"));
    let once = s(&dir.path().join("once.epoc"));
    let twice = s(&dir.path().join("twice.epoc"));
    ok(&["preprocess", "--input", &input, "--manifest", &manifest, "--out", &once]);
    ok(&["preprocess", "--input", &once, "--manifest", &manifest, "--out", &twice]);
    assert_eq!(fs::read(&input).unwrap(), fs::read(&once).unwrap());
    assert_eq!(fs::read(&once).unwrap(), fs::read(&twice).unwrap());
}

#[test]
fn align_train_apply_decode() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", SMALL_SYNTH);
    let data = dir.path().join("data");
    ok(&["synth", "--config", &cfg, "--out", &s(&data)]);
    let models = dir.path().join("models");
    let target = s(&data.join("synth01.epoc"));
    let s2 = s(&data.join("synth02.epoc"));
    let s3 = s(&data.join("synth03.epoc"));
    let out = ok(&[
        "align", "train", "--config", &cfg, "--target", &target, "--calib", "2", "--sources", &s2, &s3,
        "--out", &s(&models),
    ]);
    assert!(out.contains("\"checkpoints\":3"), "{out}");
    let danm: Vec<_> = fs::read_dir(&models)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "danm"))
        .collect();
    assert_eq!(danm.len(), 3);

    let aligned = dir.path().join("aligned");
    ok(&[
        "align", "apply", "--model", &s(&models.join("g0_k0.danm")), "--input", &s2, "--out", &s(&aligned),
        "--target-id", "synth01",
    ]);
    let a2 = s(&aligned.join("synth02_aligned.epoc"));
    let out = ok(&["decode", "--config", &cfg, "--input", &target, "--calib", "2", "--extra", &a2]);
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["n_calibration_pool"], 8 + 16);
    assert!(v["accuracy"].as_f64().unwrap() > 0.5);

    // a corrupted checkpoint is a data error
    let bad = models.join("g0.danm");
    let mut bytes = fs::read(&bad).unwrap();
    let n = bytes.len();
    bytes[n / 2] ^= 0xff;
    fs::write(&bad, bytes).unwrap();
    let o = run(&["align", "apply", "--model", &s(&bad), "--input", &s2, "--out", &s(&aligned)]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_record(&o)["error"], "ChecksumMismatch");
}

#[test]
fn evaluate_writes_reports_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", &format!("{SMALL_SYNTH}\n[task]\nrepeats = 2\n"));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        ok(&["evaluate", "--config", &cfg, "--schemes", "baseline,dan", "--calib", "2", "--seed", "5", "--jobs", "2", "--out", &s(out)]);
    }
    let csv = fs::read_to_string(a.join("cells.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 2 * 2);
    assert!(csv.starts_with("task,scheme,target_subject,n_calib,n_sources,repeat,accuracy,seconds\n"));
    for f in ["cells.csv", "cells.jsonl", "run.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("run.json")).unwrap()).unwrap();
    assert_eq!(manifest["task"]["seed"], 5);
    assert_eq!(manifest["dan"]["pretrain_epochs"], 10);

    let only = dir.path().join("only");
    ok(&["evaluate", "--config", &cfg, "--schemes", "baseline", "--repeats", "1", "--format", "jsonl", "--out", &s(&only)]);
    assert!(only.join("cells.jsonl").exists());
    assert!(!only.join("cells.csv").exists());
}

#[test]
fn evaluate_ablation_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", &format!("{SMALL_SYNTH}\n[task]\nrepeats = 1\n"));
    let out = ok(&["evaluate", "--config", &cfg, "--schemes", "dan,ablations", "--out", &s(&dir.path().join("r"))]);
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows.len(), 5, "{out}");
    for name in ["dan ", "dan_no_stim_indep", "dan_no_pretrain", "dan_no_finetune", "dan_no_tanh"] {
        assert!(rows.iter().any(|r| r.starts_with(name)), "{name}");
    }
}

#[test]
fn dry_run_touches_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "run.toml",
        "[target]\nsubject_ids = [\"1\", \"2\"]\npath_template = \"missing/{subject}.epoc\"\nfs_raw = 1000.0\nlatency_s = 0.14\nwindow_s = 1.5\n",
    );
    let out_dir = dir.path().join("never");
    let out = ok(&["evaluate", "--config", &cfg, "--dry-run", "--out", &s(&out_dir)]);
    assert!(out.contains("\"dry_run\":true"));
    assert!(!out_dir.exists());
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[dan]\nlearning_rate = -1.0\n");
    let o = run(&["evaluate", "--config", &cfg, "--dry-run"]);
    assert_eq!(o.status.code(), Some(2));
    let rec = error_record(&o);
    assert_eq!(rec["error"], "InvalidConfig");
    assert!(rec["message"].as_str().unwrap().contains("dan.learning_rate"));

    let cfg = write(dir.path(), "typo.toml", "[task]\nrepeat = 3\n");
    let o = run(&["evaluate", "--config", &cfg, "--dry-run"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(error_record(&o)["message"].as_str().unwrap().contains("task.repeat"));

    let o = run(&["evaluate", "--schemes", "dan,cca", "--dry-run"]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["evaluate", "--calib", "1", "--dry-run"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&o.stderr).contains("panicked"));

    let o = run(&["decode", "--input", &s(&dir.path().join("nope.epoc"))]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_record(&o)["error"], "MissingFile");
}

#[test]
fn psd_selectors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "run.toml",
        "[synth]\nn_subjects = 1\nfreqs = [12.6]\nphases = [0.0]\nn_trials_per_stim = 3\nwindow_s = 2.0\nsnr_db = 200.0\n",
    );
    let data = dir.path().join("data");
    ok(&["synth", "--config", &cfg, "--out", &s(&data)]);
    let input = s(&data.join("synth01.epoc"));
    let all = dir.path().join("all.csv");
    let one = dir.path().join("one.csv");
    ok(&["psd", "--input", &input, "--channel", "Oz", "--out", &s(&all)]);
    ok(&["psd", "--input", &input, "--channel", "Oz", "--trial", "1", "--out", &s(&one)]);
    let parse = |p: &Path| -> Vec<(f64, f64)> {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| {
                let (f, v) = l.split_once(',').unwrap();
                (f.parse().unwrap(), v.parse().unwrap())
            })
            .collect()
    };
    let spec = parse(&all);
    let peak = spec.iter().cloned().fold((0.0, f64::MIN), |b, x| if x.1 > b.1 { x } else { b });
    let res = spec[1].0 - spec[0].0;
    assert!((peak.0 - 12.6).abs() <= res / 2.0 + 1e-9, "peak at {}", peak.0);
    // noiseless trials are identical, so the average equals one trial
    for (x, y) in spec.iter().zip(parse(&one)) {
        assert!((x.1 - y.1).abs() <= 1e-12 * x.1.abs().max(1.0));
    }

    let o = run(&["psd", "--input", &input, "--channel", "Oz", "--trial", "9", "--out", &s(&one)]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_record(&o)["error"], "SelectorOutOfRange");
    let o = run(&["psd", "--input", &input, "--channel", "Cz", "--out", &s(&one)]);
    assert_eq!(o.status.code(), Some(2));
}
