use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn hdmbqc(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hdmbqc"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .env_remove("HDMBQC_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn cluster8_reports_ideal_witness() {
    let dir = tempfile::tempdir().unwrap();
    let o = hdmbqc(dir.path(), &["run", "-p", "cluster8"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("witness = -1.000"), "{}", stdout(&o));
    let w = json(&dir.path().join("cluster8/witness.json"));
    assert_eq!(w["schema_version"], 1);
    assert_eq!(w["kind"], "witness_report");
    assert!((w["data"]["value"].as_f64().unwrap() + 1.0).abs() < 1e-9);
    let terms = std::fs::read_to_string(dir.path().join("cluster8/witness_terms.csv")).unwrap();
    assert_eq!(terms.lines().count(), 33);
    let m = json(&dir.path().join("cluster8/metrics.json"));
    assert_eq!(m["data"]["eqrr_hz"].as_f64().unwrap(), 256.0 * 130.0);
}

#[test]
fn qudit5_counts_give_negative_witness_with_error_bar() {
    let dir = tempfile::tempdir().unwrap();
    let o = hdmbqc(dir.path(), &["run", "-p", "qudit5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let w = json(&dir.path().join("qudit5/witness.json"))["data"].clone();
    let (v, s) = (w["value"].as_f64().unwrap(), w["std_dev"].as_f64().unwrap());
    assert_eq!(w["setting_used"], "two_mub_counts");
    assert!(v < 0.0 && s > 0.0);
    // linear mixing: 0.9·(-1) + 0.1·1.4
    assert!((v + 0.76).abs() < 4.0 * s, "{v} ± {s}");
    assert!(stdout(&o).contains('±'));
}

/// `|+>` is left alone by `R_x`, then `R_z(β)` turns it about z.
fn bloch_oracle(beta: f64) -> [f64; 3] {
    [beta.cos(), beta.sin(), 0.0]
}

#[test]
fn rotation_sweep_matches_rotation_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let o = hdmbqc(dir.path(), &["rotate", "-p", "rotation-sweep"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rd = csv::Reader::from_path(dir.path().join("rotation-sweep/rotation_sweep.csv")).unwrap();
    let rows: Vec<Vec<f64>> = rd
        .records()
        .map(|r| r.unwrap().iter().map(|f| f.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 256);
    for r in &rows {
        let want = bloch_oracle(r[1]);
        for k in 0..3 {
            assert!((r[3 + k] - want[k]).abs() < 1e-10, "{r:?}");
        }
        assert!(r[9] >= 1.0 - 1e-10);
    }
}

#[test]
fn plus_i_input_follows_both_rotations() {
    let dir = tempfile::tempdir().unwrap();
    let o = hdmbqc(dir.path(), &["rotate", "-p", "rotation-sweep", "--steps", "4", "--input", "plus-i"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rd = csv::Reader::from_path(dir.path().join("rotation-sweep/rotation_sweep.csv")).unwrap();
    for r in rd.records() {
        let r: Vec<f64> = r.unwrap().iter().map(|f| f.parse().unwrap()).collect();
        let (a, b) = (r[0], r[1]);
        // (0, 1, 0) after R_x(α): (0, cos α, sin α); then R_z(β)
        let (y, z) = (a.cos(), a.sin());
        let want = [-b.sin() * y, b.cos() * y, z];
        for k in 0..3 {
            assert!((r[3 + k] - want[k]).abs() < 1e-10, "{r:?}");
        }
    }
}

#[test]
fn same_seed_gives_identical_csv() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = hdmbqc(d.path(), &["witness", "-p", "qudit5", "--seed", "7", "--resamples", "50"]);
        assert!(o.status.success());
    }
    for f in ["counts_setting1.csv", "counts_setting2.csv", "witness_terms.csv"] {
        let x = std::fs::read(a.path().join("qudit5").join(f)).unwrap();
        let y = std::fs::read(b.path().join("qudit5").join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
    let o = hdmbqc(b.path(), &["witness", "-p", "qudit5", "--seed", "8", "--resamples", "50"]);
    assert!(o.status.success());
    assert_ne!(
        std::fs::read(a.path().join("qudit5/counts_setting1.csv")).unwrap(),
        std::fs::read(b.path().join("qudit5/counts_setting1.csv")).unwrap()
    );
}

#[test]
fn schedule_reports_rounds_and_rejects_conflicts() {
    let dir = tempfile::tempdir().unwrap();
    let o = hdmbqc(dir.path(), &["schedule", "-p", "rotation-schedule"]);
    assert!(o.status.success());
    let s = json(&dir.path().join("rotation-schedule/schedule.json"))["data"].clone();
    assert_eq!(s["qubit_rounds"]["rounds"].as_array().unwrap().len(), 5);
    assert_eq!(s["photon_rounds"]["rounds"].as_array().unwrap().len(), 2);
    assert!(std::fs::read_to_string(dir.path().join("rotation-schedule/schedule_qubits.dot"))
        .unwrap()
        .contains("rank=same"));

    let o = hdmbqc(dir.path(), &["schedule", "-p", "rotation-schedule", "--allocation", "0,1,0,1,0"]);
    assert_eq!(o.status.code(), Some(5));
    let s = json(&dir.path().join("rotation-schedule/schedule.json"))["data"].clone();
    assert_eq!(s["verdict"]["valid"], false);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(hdmbqc(dir.path(), &["witness", "-p", "no-such-preset"]).status.code(), Some(3));
    assert_eq!(hdmbqc(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(hdmbqc(dir.path(), &["witness", "-p", "cluster8", "--noise", "2"]).status.code(), Some(3));
    // a passive stack cannot raise the coincidence rate
    let gain = hdmbqc(dir.path(), &["metrics", "--dim", "4", "--rate", "1", "--rate-in", "1", "--rate-out", "2"]);
    assert_eq!(gain.status.code(), Some(5));
    assert_eq!(hdmbqc(dir.path(), &["metrics", "--dim", "4", "--rate=-1"]).status.code(), Some(4));
    // reconstruct before any design exists
    assert_eq!(hdmbqc(dir.path(), &["mplc-reconstruct", "-p", "mplc-hadamard"]).status.code(), Some(3));
}

#[test]
fn metrics_from_flags() {
    let dir = tempfile::tempdir().unwrap();
    let o = hdmbqc(
        dir.path(),
        &["metrics", "--dim", "625", "--rate", "100", "--rate-in", "1", "--rate-out", "0.015135612484362076"],
    );
    assert!(o.status.success());
    let m = json(&dir.path().join("metrics/metrics.json"))["data"].clone();
    assert_eq!(m["eqrr_hz"].as_f64().unwrap(), 6.25e4);
    assert!((m["equivalent_qubits"].as_f64().unwrap() - 9.28).abs() < 0.01);
    assert!((m["loss_db"].as_f64().unwrap() + 9.1).abs() < 1e-9);
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_hdmbqc"))
        .args(["metrics", "--dim", "2", "--rate", "1"])
        .env("HDMBQC_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("metrics/manifest.json").exists());
}

#[test]
fn edited_preset_file_with_edge_list_graph() {
    let dir = tempfile::tempdir().unwrap();
    let o = hdmbqc(dir.path(), &["presets", "--show", "cluster8"]);
    let mut p: Value = serde_json::from_slice(&o.stdout).unwrap();
    // qutrit chain 0-1-2-3 with the middle edge on photon B at weight 2
    std::fs::write(dir.path().join("chain.txt"), "d 3\nA 0 3\nB 1 2\n0 1\n2 3\n1 2 2\n").unwrap();
    p["name"] = "chain".into();
    p["graph"] = serde_json::json!({ "file": "chain.txt" });
    p["encoding"] = Value::Null;
    p["stages"] = serde_json::json!(["build-state", "witness"]);
    let path = dir.path().join("chain.json");
    std::fs::write(&path, serde_json::to_string(&p).unwrap()).unwrap();
    let o = hdmbqc(dir.path(), &["run", "-p", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let w = json(&dir.path().join("chain/witness.json"));
    assert!((w["data"]["value"].as_f64().unwrap() + 1.0).abs() < 1e-9);

    p["graph"] = serde_json::json!({ "file": "missing.txt" });
    std::fs::write(&path, serde_json::to_string(&p).unwrap()).unwrap();
    assert_eq!(hdmbqc(dir.path(), &["run", "-p", path.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn mplc_design_then_reconstruct() {
    let dir = tempfile::tempdir().unwrap();
    let o = hdmbqc(dir.path(), &["mplc-design", "-p", "mplc-hadamard", "--qubits", "1", "--iterations", "10"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let d = json(&dir.path().join("mplc-hadamard/mplc_design.json"))["data"].clone();
    assert_eq!(d["planes"], 3);
    assert!(d["fidelity"].as_f64().unwrap() > 0.99);
    let o = hdmbqc(dir.path(), &["mplc-reconstruct", "-p", "mplc-hadamard", "--qubits", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&dir.path().join("mplc-hadamard/reconstruction.json"))["data"].clone();
    assert!(r["fidelity_to_simulated"].as_f64().unwrap() >= 0.999);
    let png = dir.path().join("mplc-hadamard/masks.png");
    assert!(std::fs::metadata(png).unwrap().len() > 0);
}
