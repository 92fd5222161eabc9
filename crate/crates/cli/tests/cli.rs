use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn preindex(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_preindex"))
        .args(args)
        .current_dir(cwd)
        .env("PREINDEX_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = preindex(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Small dataset plus a model trained on it.
fn trained(dir: &Path) {
    ok(
        &[
            "synth-data",
            "--samples",
            "120",
            "--seed",
            "1",
            "--out",
            "d",
            "--stem",
            "train",
        ],
        dir,
    );
    ok(
        &[
            "synth-data",
            "--samples",
            "45",
            "--seed",
            "2",
            "--out",
            "d",
            "--stem",
            "test",
        ],
        dir,
    );
    ok(
        &[
            "train",
            "--data",
            "d/train.json",
            "--test",
            "d/test.json",
            "--max-epochs",
            "8",
            "--seed",
            "3",
            "--out",
            "m",
        ],
        dir,
    );
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = preindex(&["preindex", "--no-such-flag"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("Usage:"), "{stderr}");

    let out = preindex(&["frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn invalid_thread_cap_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_preindex"))
        .args(["synth-data", "--samples", "3", "--out", "d"])
        .current_dir(dir.path())
        .env("PREINDEX_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn data_errors_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = preindex(
        &["preindex", "--model", "missing.json", "--data", "also.json"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));

    fs::write(dir.path().join("broken.pidx"), b"PIDX\x01\x01\x09").unwrap();
    let out = preindex(
        &[
            "corrupt",
            "--in",
            "broken.pidx",
            "--kind",
            "gaussian",
            "--level",
            "2",
            "--out",
            "o",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("broken.pidx"));
}

#[test]
fn identity_shift_has_zero_distance() {
    let dir = tempfile::tempdir().unwrap();
    trained(dir.path());
    ok(
        &[
            "preindex",
            "--model",
            "m/model.json",
            "--data",
            "d/test.json",
            "--kind",
            "none",
            "--out",
            "r.json",
        ],
        dir.path(),
    );
    let report = json(&dir.path().join("r.json"));
    assert_eq!(report["p"].as_f64(), Some(0.0));
    assert_eq!(report["s"].as_f64(), Some(0.0));
    assert!(report["kind"].is_null());
    assert_eq!(report["config"]["lambda"].as_f64(), Some(1.0));
}

#[test]
fn dumped_artifacts_reproduce_the_report() {
    let dir = tempfile::tempdir().unwrap();
    trained(dir.path());
    let shift = ["--kind", "impulse", "--level", "5", "--seed", "4"];
    let mut direct = vec![
        "preindex",
        "--model",
        "m/model.json",
        "--data",
        "d/test.json",
        "--out",
        "direct.json",
    ];
    direct.extend(shift);
    ok(&direct, dir.path());
    let mut extract = vec![
        "extract",
        "--model",
        "m/model.json",
        "--data",
        "d/test.json",
        "--out",
        "x",
    ];
    extract.extend(shift);
    ok(&extract, dir.path());
    let mut dumped = vec![
        "preindex",
        "--trace",
        "x/trace.json",
        "--reps",
        "x/noisy_reps.json",
        "--clean-reps",
        "x/clean_reps.json",
        "--data",
        "d/test.json",
        "--out",
        "dumped.json",
    ];
    dumped.extend(shift);
    ok(&dumped, dir.path());

    let (a, b) = (
        json(&dir.path().join("direct.json")),
        json(&dir.path().join("dumped.json")),
    );
    for field in ["ari", "s", "s_bar"] {
        assert_eq!(a[field], b[field], "{field}");
    }
    // dumped activations are stored as f32
    let (pa, pb) = (a["p"].as_f64().unwrap(), b["p"].as_f64().unwrap());
    assert!((pa - pb).abs() <= 1e-6 * pa.max(1.0), "{pa} vs {pb}");
}

#[test]
fn corrupt_is_deterministic_and_keeps_shape() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth-data", "--samples", "6", "--out", "d"], dir.path());
    for out in ["a", "b"] {
        ok(
            &[
                "corrupt",
                "--in",
                "d",
                "--kind",
                "salt_pepper",
                "--level",
                "9",
                "--seed",
                "5",
                "--out",
                out,
            ],
            dir.path(),
        );
    }
    let a = fs::read(dir.path().join("a/data_images.pidx")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b/data_images.pidx")).unwrap());
    assert_eq!(a.len(), fs::read(dir.path().join("d/data_images.pidx")).unwrap().len());
    assert_ne!(a, fs::read(dir.path().join("d/data_images.pidx")).unwrap());
}

#[test]
fn indicators_from_training_log() {
    let dir = tempfile::tempdir().unwrap();
    trained(dir.path());
    for normalizer in ["sqrt-norm", "sqrt-count"] {
        let out = ok(
            &[
                "indicators",
                "--log",
                "m/log.ndjson",
                "--cutoff",
                "90",
                "--normalizer",
                normalizer,
            ],
            dir.path(),
        );
        let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert!(summary["grad_norm_total"].as_f64().unwrap() > 0.0);
        assert!(summary["param_change_total"].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn sweep_resumes_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        vec![
            "sweep",
            "--out",
            out,
            "--kinds",
            "gaussian,impulse",
            "--levels",
            "2,5,8",
            "--name",
            "tiny",
            "--no-snapshots",
        ]
    };
    ok(&args("a"), dir.path());
    ok(&args("b"), dir.path());
    let read = |p: &str| fs::read(dir.path().join(p)).unwrap();
    assert_eq!(read("a/correlations.csv"), read("b/correlations.csv"));
    assert_eq!(read("a/plot_table.csv"), read("b/plot_table.csv"));
    let table = String::from_utf8(read("a/plot_table.csv")).unwrap();
    assert_eq!(table.lines().count(), 7);
    assert!(table.starts_with("kind,level,preindex,epochs,grad_norm,param_change,energy_j,co2_kg\n"));
    assert!(String::from_utf8(read("a/correlations.csv"))
        .unwrap()
        .starts_with("model,indicator,method,coefficient,p_value,n\n"));

    // a resumed run reuses the cell files untouched
    let report = dir.path().join("a/reports/gaussian_5.json");
    let before = fs::metadata(&report).unwrap().modified().unwrap();
    ok(&args("a"), dir.path());
    assert_eq!(fs::metadata(&report).unwrap().modified().unwrap(), before);
    assert_eq!(read("a/correlations.csv"), read("b/correlations.csv"));

    // correlate rebuilds the same tables from the cell files
    ok(&["correlate", "--run", "a", "--name", "tiny", "--out", "c"], dir.path());
    assert_eq!(read("c/correlations.csv"), read("a/correlations.csv"));
    assert_eq!(read("c/plot_table.csv"), read("a/plot_table.csv"));
}
