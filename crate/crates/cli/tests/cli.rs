use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn trra(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trra"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = trra(args);
    assert!(
        out.status.success(),
        "trra {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

#[test]
fn augment_is_reproducible_across_threads() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    ok(&[
        "synth",
        "--output",
        p(&corpus),
        "--images",
        "12",
        "--volumes",
        "1",
        "--sagittal",
        "43",
    ]);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&[
        "augment",
        "--input",
        p(&corpus),
        "--output",
        p(&a),
        "--seed",
        "5",
        "--threads",
        "1",
    ]);
    ok(&[
        "augment",
        "--input",
        p(&corpus),
        "--output",
        p(&b),
        "--seed",
        "5",
        "--threads",
        "3",
    ]);
    let files = dir_bytes(&a);
    assert_eq!(files.len(), 12 + 3 + 1);
    assert_eq!(files, dir_bytes(&b));

    let manifest: serde_json::Value = serde_json::from_slice(&files["manifest.json"]).unwrap();
    for item in manifest["items"].as_array().unwrap() {
        assert!(item["transforms"].as_array().unwrap().len() <= 7);
    }
    assert_eq!(manifest["items"][0]["output"], "img_00000.png");
    assert_eq!(manifest["items"][12]["output"], "vol_000_s000.png");

    let c = tmp.path().join("c");
    ok(&["augment", "--input", p(&corpus), "--output", p(&c), "--seed", "6"]);
    assert_ne!(dir_bytes(&c)["img_00000.png"], files["img_00000.png"]);
}

#[test]
fn zero_retention_records_no_transforms() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    ok(&["synth", "--output", p(&corpus), "--images", "3"]);
    let out = tmp.path().join("out");
    ok(&[
        "augment",
        "--input",
        p(&corpus),
        "--output",
        p(&out),
        "--variant",
        "TRRA",
        "--n-color",
        "5",
        "--n-shape",
        "2",
        "--m-lo",
        "5",
        "--m-hi",
        "30",
        "--p",
        "0",
    ]);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["items"]
        .as_array()
        .unwrap()
        .iter()
        .all(|i| i["transforms"].as_array().unwrap().is_empty()));
}

#[test]
fn config_file_with_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    ok(&["synth", "--output", p(&corpus), "--images", "2"]);
    let out = tmp.path().join("out");
    let cfg = tmp.path().join("cfg.json");
    fs::write(
        &cfg,
        serde_json::json!({
            "seed": 3,
            "policy": {"variant": "RA23", "n": 2, "m": 10},
            "input": corpus,
            "output": out,
            "resize": [64, 60],
            "crop": 48
        })
        .to_string(),
    )
    .unwrap();
    ok(&["augment", "--config", p(&cfg), "--m", "20"]);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["policy"]["m"], 20);
    assert_eq!(manifest["config"]["crop"], 48);
    for item in manifest["items"].as_array().unwrap() {
        let t = item["transforms"].as_array().unwrap();
        assert_eq!(t.len(), 2);
        assert!(t.iter().all(|t| t["level"] == 20));
    }

    fs::write(&cfg, r#"{"seed": 1, "sede": 2}"#).unwrap();
    assert_eq!(trra(&["augment", "--config", p(&cfg)]).status.code(), Some(2));
}

#[test]
fn validation_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    ok(&["synth", "--output", p(&corpus), "--images", "1"]);
    fs::write(corpus.join("broken.png"), b"nope").unwrap();
    let out = trra(&["augment", "--input", p(&corpus), "--output", p(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("o/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["errors"][0]["source"], "broken.png");

    let bad_level = trra(&[
        "augment",
        "--input",
        p(&corpus),
        "--output",
        p(&tmp.path().join("o2")),
        "--variant",
        "RA",
        "--n",
        "2",
        "--m",
        "31",
    ]);
    assert_eq!(bad_level.status.code(), Some(2));
    assert_eq!(
        trra(&["split", "--roster", "/nonexistent.csv", "--output", p(tmp.path())])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(trra(&["bogus"]).status.code(), Some(2));
}

#[test]
fn split_demo_roster() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["synth", "--output", p(tmp.path()), "--images", "0", "--roster", "10"]);
    let out = tmp.path().join("split");
    ok(&[
        "split",
        "--roster",
        p(&tmp.path().join("roster.csv")),
        "--output",
        p(&out),
        "--seed",
        "4",
    ]);
    let split: serde_json::Value = serde_json::from_slice(&fs::read(out.join("split.json")).unwrap()).unwrap();
    let sizes: Vec<usize> = ["train", "val", "test"]
        .iter()
        .map(|k| split[k].as_array().unwrap().len())
        .collect();
    assert_eq!(sizes, [6, 2, 2]);
    let again = tmp.path().join("again");
    ok(&[
        "split",
        "--roster",
        p(&tmp.path().join("roster.csv")),
        "--output",
        p(&again),
        "--seed",
        "4",
    ]);
    assert_eq!(
        fs::read(out.join("split.json")).unwrap(),
        fs::read(again.join("split.json")).unwrap()
    );
}

fn write_preds(path: &Path, subjects: &[(&str, u8)], slices: usize, correct: bool) {
    let mut text = String::from("subject_id,slice_index,logit0,logit1,label\n");
    for &(s, label) in subjects {
        for j in 0..slices {
            let hit = if correct { label } else { 1 - label };
            let (l0, l1) = if hit == 0 { (2.0, -1.0) } else { (-1.0, 2.0) };
            text.push_str(&format!("{s},{j},{l0},{l1},{label}\n"));
        }
    }
    fs::write(path, text).unwrap();
}

#[test]
fn aggregate_perfect_predictions() {
    let tmp = tempfile::tempdir().unwrap();
    let val = tmp.path().join("val.csv");
    let test = tmp.path().join("test.csv");
    write_preds(&val, &[("v1", 0), ("v2", 1)], 4, true);
    write_preds(&test, &[("t1", 0), ("t2", 1), ("t3", 1)], 4, true);
    let out = tmp.path().join("agg");
    ok(&[
        "aggregate",
        "--val",
        p(&val),
        "--test",
        p(&test),
        "--slices-per-subject",
        "4",
        "--output",
        p(&out),
    ]);
    let metrics: serde_json::Value = serde_json::from_slice(&fs::read(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["accuracy"], 1.0);
    assert_eq!(metrics["auc"], 1.0);
    let weights: Vec<f64> = serde_json::from_slice(&fs::read(out.join("weights.json")).unwrap()).unwrap();
    assert_eq!(weights, vec![0.25; 4]);

    // Slice count mismatch is a validation error.
    let bad = trra(&[
        "aggregate",
        "--val",
        p(&val),
        "--test",
        p(&test),
        "--slices-per-subject",
        "5",
        "--output",
        p(&out),
    ]);
    assert_eq!(bad.status.code(), Some(2));
    // No correct validation slice leaves nothing to weight.
    write_preds(&val, &[("v1", 0)], 4, false);
    let none = trra(&[
        "aggregate",
        "--val",
        p(&val),
        "--test",
        p(&test),
        "--slices-per-subject",
        "4",
        "--output",
        p(&out),
    ]);
    assert_eq!(none.status.code(), Some(2));
}

#[test]
fn gridsearch_emit_and_rank() {
    let tmp = tempfile::tempdir().unwrap();
    let grid = tmp.path().join("grid");
    ok(&["gridsearch", "emit", "--variant", "TRRA", "--output", p(&grid)]);
    let files = dir_bytes(&grid);
    assert_eq!(files.len(), 37);
    assert!(files.contains_key("TRRA_001.json") && files.contains_key("TRRA_036.json"));

    let mut csv = String::from("config_id,val_accuracy\n");
    for i in 1..=36 {
        csv.push_str(&format!(
            "TRRA_{i:03},{}\n",
            if i == 20 { 0.95 } else { 0.5 + i as f64 * 0.001 }
        ));
    }
    let metrics = tmp.path().join("val.csv");
    fs::write(&metrics, csv).unwrap();
    let ranked = tmp.path().join("ranked.csv");
    let stdout = ok(&[
        "gridsearch",
        "rank",
        "--grid",
        p(&grid.join("grid.json")),
        "--val-metrics",
        p(&metrics),
        "--output",
        p(&ranked),
    ]);
    assert!(stdout.contains("TRRA_020"));
    let table = fs::read_to_string(&ranked).unwrap();
    assert!(table.lines().nth(1).unwrap().contains("TRRA_020"));

    let test_csv = tmp.path().join("test.csv");
    fs::write(&test_csv, "config_id,test_accuracy\nTRRA_001,0.9\n").unwrap();
    let out = trra(&[
        "gridsearch",
        "rank",
        "--grid",
        p(&grid.join("grid.json")),
        "--val-metrics",
        p(&test_csv),
        "--output",
        p(&ranked),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn refnet_bundle_explained() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&[
        "synth",
        "--output",
        p(tmp.path()),
        "--images",
        "1",
        "--height",
        "40",
        "--width",
        "36",
    ]);
    let img = tmp.path().join("img_00000.png");
    let bundle = tmp.path().join("bundle");
    ok(&[
        "refnet",
        "--image",
        p(&img),
        "--channels",
        "4",
        "--seed",
        "2",
        "--output",
        p(&bundle),
    ]);
    for f in ["A.tsr", "G.tsr", "meta.json", "params/conv.tsr"] {
        assert!(bundle.join(f).exists(), "{f}");
    }
    let out = tmp.path().join("explain");
    ok(&[
        "explain",
        "--bundle",
        p(&bundle),
        "--base",
        p(&img),
        "--output",
        p(&out),
        "--boundary",
        "--baseline",
    ]);
    for f in ["heatmap.tsr", "gradcam.tsr", "overlay.png"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let heat = trra_core::Tensor::<f32>::read_tsr1(out.join("heatmap.tsr")).unwrap();
    assert_eq!(heat.dims(), &[38, 34]);
    assert!(heat.data().iter().all(|v| (0.0..=1.0).contains(v)));
    let overlay = trra_core::Image8::read_png(out.join("overlay.png")).unwrap();
    assert_eq!((overlay.height(), overlay.width()), (40, 36));

    // Reusing the exported parameters reproduces the bundle.
    let again = tmp.path().join("again");
    ok(&[
        "refnet",
        "--image",
        p(&img),
        "--params",
        p(&bundle.join("params")),
        "--output",
        p(&again),
    ]);
    for f in ["A.tsr", "G.tsr", "meta.json"] {
        assert!(
            fs::read(bundle.join(f)).unwrap() == fs::read(again.join(f)).unwrap(),
            "{f} differs"
        );
    }
    let a = trra_core::Tensor::<f32>::read_tsr1(bundle.join("A.tsr")).unwrap();
    assert!(a.data().iter().any(|&v| v > 0.0));
}

#[test]
fn bench_reports_per_kind_timing() {
    let tmp = tempfile::tempdir().unwrap();
    let report = tmp.path().join("bench.json");
    ok(&["bench", "--synthetic", "8", "--threads", "1,2", "--output", p(&report)]);
    let r: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(r["deterministic"], true);
    assert_eq!(r["runs"].as_array().unwrap().len(), 2);
    assert!(!r["per_kind"].as_array().unwrap().is_empty());
}

#[test]
fn earlystop_replay_and_state() {
    let tmp = tempfile::tempdir().unwrap();
    let metrics = tmp.path().join("m.txt");
    fs::write(&metrics, "0.5\n".repeat(21)).unwrap();
    let out = ok(&["earlystop", "--metrics", p(&metrics)]);
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["stop_epoch"], 21);
    assert_eq!(v["best_epoch"], 1);

    let state = tmp.path().join("state.json");
    let mut last = String::new();
    for m in ["0.1", "0.2", "0.2", "0.2"] {
        last = ok(&["earlystop", "--state", p(&state), "--metric", m, "--patience", "2"]);
    }
    let v: serde_json::Value = serde_json::from_str(last.trim()).unwrap();
    assert_eq!(v["should_stop"], true);
    assert_eq!(v["state"]["best_epoch"], 2);
    assert_eq!(
        trra(&["earlystop", "--state", p(&state), "--metric", "NaN"])
            .status
            .code(),
        Some(2)
    );
}
