use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chebhopgd"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn err_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let last = text.lines().last().unwrap_or_default();
    serde_json::from_str(last).unwrap_or_else(|_| panic!("stderr is not error JSON: {text}"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn line_dirs(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("line_"))
        .collect();
    v.sort();
    v
}

fn vectors(dir: &Path) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    for line in line_dirs(dir) {
        let mut names: Vec<_> = fs::read_dir(dir.join(&line))
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|e| e == "f64le"))
            .collect();
        names.sort();
        out.extend(names.iter().map(|p| fs::read(p).unwrap()));
    }
    out
}

#[test]
fn cross_snapshots_give_two_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let snaps = tmp.path().join("snaps");
    let v = ok_json(&["snapshots", "--problem", "helmholtz-sim1", "--grid-n", "10", "--out", s(&snaps)]);
    assert_eq!(v["lines"], 2);
    assert_eq!(v["vectors"], 13);
    assert_eq!(line_dirs(&snaps).len(), 2);
    assert_eq!(vectors(&snaps).len(), 13);
}

#[test]
fn full_grid_snapshots_give_one_line_per_mu2() {
    let tmp = tempfile::tempdir().unwrap();
    let snaps = tmp.path().join("snaps");
    let v = ok_json(&[
        "snapshots", "--problem", "helmholtz-sim2", "--grid-n", "10", "--nodes", "full", "--n1", "11", "--n2", "7",
        "--out", s(&snaps),
    ]);
    assert_eq!(v["lines"], 7);
    assert_eq!(v["vectors"], 77);
    assert_eq!(vectors(&snaps).len(), 77);
}

#[test]
fn snapshots_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        ok_json(&["snapshots", "--problem", "advdiff", "--grid-n", "199", "--n1", "5", "--n2", "5", "--out", s(d)]);
    }
    assert_eq!(vectors(&a), vectors(&b));
    assert_eq!(fs::read(a.join("manifest.json")).unwrap(), fs::read(b.join("manifest.json")).unwrap());
}

#[test]
fn config_file_round_trips_through_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"problem": {"name": "advdiff", "grid_n": 99, "dt": 0.01}, "nodes": {"kind": "sparse_cross", "n1": 5, "n2": 5}}"#,
    )
    .unwrap();
    let snaps = tmp.path().join("snaps");
    ok_json(&["snapshots", "--config", s(&cfg), "--out", s(&snaps)]);
    let m: Value = serde_json::from_slice(&fs::read(snaps.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["problem"]["name"], "advdiff");
    assert_eq!(m["n"], 99);
    assert_eq!(m["nodes"]["members"].as_array().unwrap().len(), 9);
}

#[test]
fn decompose_eval_errmap_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let snaps = tmp.path().join("snaps");
    let model = tmp.path().join("model");
    ok_json(&["snapshots", "--problem", "advdiff", "--grid-n", "999", "--n1", "5", "--n2", "5", "--out", s(&snaps)]);
    let d = ok_json(&["decompose", "--snapshots", s(&snaps), "--eps2", "1e-3", "--out", s(&model)]);
    assert_eq!(d["converged"], true);
    assert!(d["rank"].as_u64().unwrap() >= 1);
    for f in ["model.json", "phi.f64le", "log.json", "config.json"] {
        assert!(model.join(f).exists(), "{f}");
    }
    let log: Value = serde_json::from_slice(&fs::read(model.join("log.json")).unwrap()).unwrap();
    assert_eq!(log["rank"], d["rank"]);

    // A node of the 5x5 cross on [0, 0.5]^2.
    let x = tmp.path().join("x.f64le");
    let e = ok_json(&["eval", "--model", s(&model), "--mu1", "0.125", "--mu2", "0.25", "--reference", "--out", s(&x)]);
    assert!(e["reference"]["rel_err"].as_f64().unwrap() < 1e-3);
    assert_eq!(fs::read(&x).unwrap().len(), 999 * 8);

    let csv = tmp.path().join("err.csv");
    let m = ok_json(&["errmap", "--model", s(&model), "--g1", "20", "--g2", "20", "--out", s(&csv)]);
    assert_eq!(m["cells"], 400);
    let text = fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "mu1,mu2,rel_err_percent,class");
    assert_eq!(rows.len(), 401);
}

#[test]
fn eval_outside_box_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let snaps = tmp.path().join("snaps");
    let model = tmp.path().join("model");
    ok_json(&["snapshots", "--problem", "advdiff", "--grid-n", "99", "--n1", "5", "--n2", "5", "--out", s(&snaps)]);
    ok_json(&["decompose", "--snapshots", s(&snaps), "--out", s(&model)]);
    let out = run(&["eval", "--model", s(&model), "--mu1", "0.9", "--mu2", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(err_json(&out)["error"]["kind"], "out_of_range");
}

#[test]
fn unconverged_decomposition_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let snaps = tmp.path().join("snaps");
    let model = tmp.path().join("model");
    ok_json(&["snapshots", "--problem", "advdiff", "--grid-n", "99", "--n1", "5", "--n2", "5", "--out", s(&snaps)]);
    let out = run(&["decompose", "--snapshots", s(&snaps), "--eps2", "1e-14", "--max-modes", "1", "--out", s(&model)]);
    assert_eq!(out.status.code(), Some(3));
    let e = err_json(&out);
    assert_eq!(e["error"]["kind"], "not_converged");
    assert_eq!(e["error"]["details"]["rank"], 1);
    // The partial model is still written.
    assert!(model.join("model.json").exists());
}

#[test]
fn empty_snapshot_dir_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["decompose", "--snapshots", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(err_json(&out)["error"]["code"], 2);
}

#[test]
fn unknown_problem_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["snapshots", "--problem", "sim9", "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(err_json(&out)["error"]["kind"], "unknown_variant");
}

#[test]
fn sweep_non_convergence_exits_4_with_partial_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let snaps = tmp.path().join("snaps");
    let out = run(&[
        "snapshots", "--problem", "advdiff", "--grid-n", "199", "--n1", "5", "--n2", "5", "--k-max", "3", "--tol",
        "1e-14", "--out", s(&snaps),
    ]);
    assert_eq!(out.status.code(), Some(4));
    let e = err_json(&out);
    assert_eq!(e["error"]["kind"], "sweep_no_convergence");
    assert!(!e["error"]["details"]["unconverged"].as_array().unwrap().is_empty());
    assert!(snaps.join("manifest.json").exists());
}

#[test]
fn noisy_estimate_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let reports: Vec<Vec<u8>> = ["a.json", "b.json"]
        .iter()
        .map(|name| {
            let path = tmp.path().join(name);
            let v = ok_json(&[
                "estimate", "--problem", "advdiff", "--grid-n", "199", "--truth", "0.2,0.35", "--noise", "1e-2",
                "--seed", "42", "--runs", "2", "--out", s(&path),
            ]);
            assert!(v["timing"]["offline_seconds"].as_f64().unwrap() > 0.0);
            fs::read(&path).unwrap()
        })
        .collect();
    assert_eq!(reports[0], reports[1]);
    let r: Value = serde_json::from_slice(&reports[0]).unwrap();
    assert_eq!(r["runs"].as_array().unwrap().len(), 2);
    assert_eq!(r["seed"], 42);
    let est = r["estimate"].as_array().unwrap();
    assert!((0.0..=0.5).contains(&est[0].as_f64().unwrap()));
}

#[test]
fn estimate_from_observation_file() {
    let tmp = tempfile::tempdir().unwrap();
    let snaps = tmp.path().join("snaps");
    let model = tmp.path().join("model");
    ok_json(&["snapshots", "--problem", "advdiff", "--grid-n", "99", "--n1", "5", "--n2", "5", "--out", s(&snaps)]);
    ok_json(&["decompose", "--snapshots", s(&snaps), "--out", s(&model)]);
    // Model output at a node serves as the observation.
    let x = tmp.path().join("obs.f64le");
    ok_json(&["eval", "--model", s(&model), "--mu1", "0.25", "--mu2", "0.25", "--out", s(&x)]);
    let path = tmp.path().join("est.json");
    ok_json(&[
        "estimate", "--problem", "advdiff", "--grid-n", "99", "--n1", "5", "--n2", "5", "--observation", s(&x),
        "--runs", "1", "--out", s(&path),
    ]);
    let r: Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    assert!(r["truth"].is_null());
    let est = r["estimate"].as_array().unwrap();
    assert!((est[0].as_f64().unwrap() - 0.25).abs() < 1e-3, "{est:?}");
    assert!((est[1].as_f64().unwrap() - 0.25).abs() < 1e-3, "{est:?}");
}

#[test]
fn missing_observation_and_truth_exits_2() {
    let out = run(&["estimate", "--problem", "advdiff", "--grid-n", "99"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_flag_is_json_error() {
    let out = run(&["snapshots", "--box", "1,2"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(err_json(&out)["error"]["kind"], "invalid_input");
}
