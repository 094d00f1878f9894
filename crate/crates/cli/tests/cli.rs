use std::path::Path;
use std::process::{Command, Output};

fn facebench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_facebench"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = facebench(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn report_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .unwrap()
        .records()
        .map(|r| r.unwrap())
        .collect()
}

#[test]
fn synth_then_e1_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--spec", "default,n_female=83,n_male=83", "--out-dir", s(&data)]);
    let manifest = data.join("manifest.csv");
    assert!(manifest.exists());

    let report = dir.path().join("out/e1.csv");
    ok(&[
        "experiment",
        "--protocol",
        "e1",
        "--manifest",
        s(&manifest),
        "--ratio",
        "9:1",
        "--seed",
        "7",
        "--classifiers",
        "euc,cos,svm",
        "--out",
        s(&report),
    ]);
    let rows = report_rows(&report);
    assert_eq!(rows.len(), 6);
    for r in &rows {
        assert_eq!(&r[0], "cell");
        assert_eq!(&r[1], "E1");
        let acc: f64 = r[5].parse().unwrap();
        assert!((0.0..=100.0).contains(&acc));
    }
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.contains("83 F + 83 M, 1494 train / 166 test images"));
    assert!(dir.path().join("out/e1.timings.csv").exists());
}

#[test]
fn missing_manifest_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = facebench(&[
        "experiment",
        "--protocol",
        "e1",
        "--manifest",
        "/nonexistent/manifest.csv",
        "--out",
        s(&dir.path().join("r.csv")),
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn too_few_subjects_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = facebench(&[
        "experiment",
        "--protocol",
        "e3_female",
        "--synthetic",
        "default,n_female=50",
        "--out",
        s(&dir.path().join("r.csv")),
    ]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("female"));
}

#[test]
fn bad_ratio_is_a_usage_error() {
    let out = facebench(&[
        "experiment",
        "--protocol",
        "e1",
        "--synthetic",
        "default",
        "--ratio",
        "7:3",
        "--out",
        "r.csv",
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("ratio must be 9:1 or 5:5"));
}

#[test]
fn conflicting_and_missing_sources() {
    let both = facebench(&[
        "experiment",
        "--manifest",
        "m.csv",
        "--synthetic",
        "default",
        "--out",
        "r.csv",
    ]);
    assert_eq!(code(&both), 2);
    let neither = facebench(&["experiment", "--protocol", "e1", "--out", "r.csv"]);
    assert_eq!(code(&neither), 2);
    let unknown = facebench(&["experiment", "--synthetic", "default", "--frobnicate", "--out", "r.csv"]);
    assert_eq!(code(&unknown), 2);
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("--frobnicate"));
}

fn small_experiment(dir: &Path, name: &str, threads: &str) -> (Vec<u8>, Vec<u8>) {
    let mut bytes = Vec::new();
    for ext in ["csv", "json"] {
        let out = dir.join(format!("{name}.{ext}"));
        ok(&[
            "fusion-study",
            "--protocol",
            "custom",
            "--n-female",
            "6",
            "--n-male",
            "6",
            "--synthetic",
            "default,n_female=8,n_male=8",
            "--ratio",
            "5:5",
            "--trials",
            "2",
            "--seed",
            "3",
            "--threads",
            threads,
            "--out",
            s(&out),
        ]);
        bytes.push(std::fs::read(&out).unwrap());
    }
    (bytes.remove(0), bytes.remove(0))
}

#[test]
fn thread_count_does_not_change_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (csv1, json1) = small_experiment(dir.path(), "t1", "1");
    let (csv8, json8) = small_experiment(dir.path(), "t8", "8");
    assert_eq!(csv1, csv8);
    assert_eq!(json1, json8);
}

#[test]
fn fusion_study_lists_weight_tuples() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, json) = small_experiment(dir.path(), "f", "2");
    let text = String::from_utf8(csv).unwrap();
    for w in [
        "weighted(0.9,0.1)",
        "weighted(0.1,0.9)",
        "weighted(0.8,0.1,0.1)",
        "weighted(0.4,0.3,0.3)",
        "weighted(0.1,0.1,0.8)",
        "weighted(0.4,0.4,0.1,0.1)",
        "weighted(0.3,0.3,0.2,0.2)",
        "weighted(0.1,0.1,0.4,0.4)",
    ] {
        assert!(text.contains(w), "missing {w}");
    }
    let v: serde_json::Value = serde_json::from_slice(&json).unwrap();
    assert_eq!(v["config"]["n_trials"], 2);
    assert_eq!(v["sections"][0]["trials"].as_array().unwrap().len(), 2);
}

#[test]
fn config_file_with_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(
        &cfg,
        "seed = 3\nratio = \"5:5\"\nfeatures = [\"LDA\"]\nclassifiers = [\"COS\", \"EUC\"]\nn_components = 10\n",
    )
    .unwrap();
    let out = dir.path().join("r.json");
    ok(&[
        "experiment",
        "--config",
        s(&cfg),
        "--seed",
        "5",
        "--protocol",
        "custom",
        "--n-female",
        "3",
        "--n-male",
        "3",
        "--synthetic",
        "default,n_female=4,n_male=4",
        "--out",
        s(&out),
    ]);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["config"]["seed"], 5);
    assert_eq!(v["config"]["ratio"], "5:5");
    assert_eq!(v["config"]["n_components"], 10);
    assert_eq!(v["sections"][0]["cells"].as_array().unwrap().len(), 2);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"seed": 1, "colour": "red"}"#).unwrap();
    let rejected = facebench(&[
        "experiment",
        "--config",
        s(&bad),
        "--synthetic",
        "default",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&rejected), 2);
    assert!(String::from_utf8_lossy(&rejected.stderr).contains("colour"));
}

#[test]
fn features_classify_and_fuse() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&[
        "synth",
        "--spec",
        "n_female=3,n_male=3,images=4",
        "--seed",
        "2",
        "--out-dir",
        s(&d.join("data")),
    ]);
    ok(&["preprocess", "--manifest", s(&d.join("data/manifest.csv")), "--out-dir", s(&d.join("canon"))]);

    // first image of each subject as probe, the rest as gallery
    let manifest = std::fs::read_to_string(d.join("canon/manifest.csv")).unwrap();
    let mut lines = manifest.lines();
    let header = lines.next().unwrap();
    let (mut gallery, mut probes) = (vec![header.to_string()], vec![header.to_string()]);
    for line in lines {
        if line.contains("_00.pgm") {
            probes.push(line.to_string());
        } else {
            gallery.push(line.to_string());
        }
    }
    std::fs::write(d.join("canon/gallery.csv"), gallery.join("\n")).unwrap();
    std::fs::write(d.join("canon/probes.csv"), probes.join("\n")).unwrap();

    ok(&[
        "features",
        "--manifest",
        s(&d.join("canon/gallery.csv")),
        "--kind",
        "pca",
        "--components",
        "5",
        "--out",
        s(&d.join("pca.bin")),
    ]);
    for metric in ["euc", "cos"] {
        let out = ok(&[
            "classify",
            "--model",
            s(&d.join("pca.bin")),
            "--gallery",
            s(&d.join("canon/gallery.csv")),
            "--probes",
            s(&d.join("canon/probes.csv")),
            "--method",
            metric,
            "--out",
            s(&d.join(format!("{metric}.pred.csv"))),
            "--matrix-out",
            s(&d.join(format!("{metric}.dist.csv"))),
        ]);
        assert!(String::from_utf8_lossy(&out.stdout).contains("accuracy"));
    }
    let preds = std::fs::read_to_string(d.join("cos.pred.csv")).unwrap();
    assert_eq!(preds.lines().count(), 7);

    let matrices = format!("{},{}", s(&d.join("euc.dist.csv")), s(&d.join("cos.dist.csv")));
    ok(&[
        "fuse",
        "--matrices",
        &matrices,
        "--scheme",
        "weighted",
        "--weights",
        "1,0",
        "--out",
        s(&d.join("fused.csv")),
    ]);
    let fused = std::fs::read_to_string(d.join("fused.csv")).unwrap();
    assert_eq!(fused.lines().count(), 7);
    let missing_weights = facebench(&["fuse", "--matrices", &matrices, "--scheme", "weighted", "--out", "x.csv"]);
    assert_eq!(code(&missing_weights), 2);
}

#[test]
fn version_has_build_hash() {
    let out = ok(&["--version"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("facebench 0.1.0 (build "), "{text}");
}
