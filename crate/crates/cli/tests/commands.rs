use std::path::Path;
use std::process::{Command, Output};

use hoi_refine::params::RefinerParams;
use hoi_refine::ModelDims;
use serde_json::Value;

fn hoi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hoi-refine"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = hoi(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn synth(dir: &Path, count: &str) {
    ok(&["synth", "--count", count, "--seed", "1", "--out", p(dir)]);
}

#[test]
fn synth_writes_scenes_and_rejects_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    synth(&a, "5");
    synth(&b, "5");
    let manifest = json(&a.join("manifest.json"));
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["scenes"].as_array().unwrap().len(), 5);
    for name in [
        "hand_gt.obj",
        "obj_init.obj",
        "contact.json",
        "regressor.json",
        "meta.json",
    ] {
        let (x, y) = (a.join("scene_0004").join(name), b.join("scene_0004").join(name));
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{name}");
    }

    let out = hoi(&["synth", "--count", "0", "--out", p(&tmp.path().join("c"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("count must be ≥ 1"));
}

#[test]
fn train_writes_curve_and_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, out) = (tmp.path().join("d"), tmp.path().join("t"));
    synth(&data, "2");
    ok(&[
        "train",
        "--scenes",
        p(&data),
        "--out",
        p(&out),
        "--epochs",
        "6",
        "--lr",
        "1e-3",
        "--seed",
        "7",
    ]);
    let csv = std::fs::read_to_string(out.join("loss.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "epoch,loss_total,loss_hand,loss_obj");
    assert_eq!(lines.len(), 7);
    for (i, line) in lines[1..].iter().enumerate() {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols[0] as usize, i + 1);
        assert!((cols[1] - cols[2] - cols[3]).abs() < 1e-9 * cols[1]);
    }
    assert!(RefinerParams::load(out.join("checkpoint.json")).is_ok());
    let run = json(&out.join("run.json"));
    assert_eq!(run["seed"], 7);
    assert_eq!(run["config"]["epochs"], 6);
    let metrics = json(&out.join("metrics.json"));
    assert_eq!(metrics["refine"]["scenes"].as_array().unwrap().len(), 2);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, out) = (tmp.path().join("d"), tmp.path().join("t"));
    synth(&data, "1");
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"epochs": 9, "lr": 0.01, "gamma": 0.2, "use_attention": false, "dims": {"descriptor": 4, "hidden": 4, "attention": 2}}"#,
    )
    .unwrap();
    ok(&[
        "train",
        "--scenes",
        p(&data),
        "--out",
        p(&out),
        "--config",
        p(&cfg),
        "--epochs",
        "2",
    ]);
    let run = json(&out.join("run.json"));
    assert_eq!(run["config"]["epochs"], 2);
    assert_eq!(run["config"]["lr"], 0.01);
    assert_eq!(run["config"]["graph"]["gamma"], 0.2);
    assert_eq!(run["config"]["graph"]["use_attention"], false);
    assert_eq!(run["config"]["dims"]["hidden"], 4);

    std::fs::write(&cfg, r#"{"epoch": 3}"#).unwrap();
    let bad = hoi(&["train", "--scenes", p(&data), "--out", p(&out), "--config", p(&cfg)]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("unknown field"));

    let bad = hoi(&["train", "--scenes", p(&data), "--out", p(&out), "--gamma", "1.5"]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("gamma"));
}

#[test]
fn zero_checkpoint_leaves_meshes_unchanged() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, out) = (tmp.path().join("d"), tmp.path().join("e"));
    synth(&data, "3");
    let ckpt = tmp.path().join("zero.json");
    RefinerParams::zeros(ModelDims::default()).save(&ckpt).unwrap();
    ok(&[
        "eval",
        "--scenes",
        p(&data),
        "--checkpoint",
        p(&ckpt),
        "--out",
        p(&out),
        "--export-meshes",
    ]);
    let m = json(&out.join("metrics.json"));
    assert_eq!(m["initial"], m["refine"]);

    // the reported mean is the field-wise mean of the per-scene records
    let scenes = m["refine"]["scenes"].as_array().unwrap();
    for (field, mean) in m["refine"]["mean"].as_object().unwrap() {
        let avg = scenes.iter().map(|s| s[field].as_f64().unwrap()).sum::<f64>() / scenes.len() as f64;
        assert!(
            (avg - mean.as_f64().unwrap()).abs() <= 1e-12 * avg.abs().max(1.0),
            "{field}"
        );
    }

    let init = std::fs::read_to_string(data.join("scene_0001/hand_init.obj")).unwrap();
    let refined = std::fs::read_to_string(out.join("meshes/scene_0001/hand_refined.obj")).unwrap();
    assert_eq!(init, refined);
}

#[test]
fn mismatched_checkpoint_names_the_tensor() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d");
    synth(&data, "1");
    let ckpt = tmp.path().join("c.json");
    RefinerParams::zeros(ModelDims::default()).save(&ckpt).unwrap();
    let mut v = json(&ckpt);
    let tensors = v["tensors"].as_array_mut().unwrap();
    let t = tensors.iter_mut().find(|t| t["name"] == "block2.hand.weight").unwrap();
    t["shape"][1] = Value::from(63);
    let n = t["shape"][0].as_u64().unwrap() as usize * 63;
    t["data"] = Value::from(vec![0.0; n]);
    std::fs::write(&ckpt, v.to_string()).unwrap();
    let out = hoi(&[
        "eval",
        "--scenes",
        p(&data),
        "--checkpoint",
        p(&ckpt),
        "--out",
        p(&tmp.path().join("e")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("block2.hand.weight"));
}

#[test]
fn gradcheck_exit_status_follows_the_check() {
    let pass = ok(&["gradcheck", "--seed", "2"]);
    let text = String::from_utf8_lossy(&pass.stdout).to_string();
    assert!(text.contains("PASS"), "{text}");
    assert_eq!(ok(&["gradcheck", "--seed", "2"]).stdout, pass.stdout);

    let fail = hoi(&["gradcheck", "--seed", "2", "--inject-fault", "relu-mask"]);
    assert_eq!(fail.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&fail.stdout).contains("FAIL"));
}

#[test]
fn missing_manifest_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = hoi(&["train", "--scenes", p(tmp.path()), "--out", p(&tmp.path().join("t"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("manifest.json"));
}
