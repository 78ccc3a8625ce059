use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn rawls(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rawls"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = rawls(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str], code: i32) -> String {
    let out = rawls(args);
    assert_eq!(
        out.status.code(),
        Some(code),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stderr).unwrap()
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn write_json(p: &Path, v: &Value) {
    fs::write(p, serde_json::to_string(v).unwrap()).unwrap();
}

fn scalar_stats(mu0: f64, v0: f64, mu1: f64, v1: f64) -> Value {
    json!({"p": 1, "d": 1, "subpops": [
        {"y": 0, "z": 1, "count": 10, "mean": [mu0], "cov": [[v0]]},
        {"y": 1, "z": 1, "count": 10, "mean": [mu1], "cov": [[v1]]},
    ]})
}

#[test]
fn synth_writes_preset_sizes() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "d.csv");
    ok(&["synth", "--preset", "synthetic1", "--seed", "42", "--out", s(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("z,y,f1,f2"));
    assert_eq!(lines.count(), 4000);
}

#[test]
fn synth_errors() {
    let dir = TempDir::new().unwrap();
    let err = fails(&["synth", "--preset", "nope", "--out", s(&path(&dir, "d.csv"))], 2);
    assert!(err.contains("synthetic1") && err.contains("synthetic2"), "{err}");
    fails(
        &["synth", "--preset", "synthetic1", "--out", "/nonexistent-dir/d.csv"],
        3,
    );
}

#[test]
fn stats_modes_and_errors() {
    let dir = TempDir::new().unwrap();
    let data = path(&dir, "d.csv");
    ok(&["synth", "--preset", "synthetic1", "--seed", "1", "--out", s(&data)]);
    let stats = path(&dir, "s.json");
    ok(&["stats", "--in", s(&data), "--mode", "full", "--out", s(&stats)]);
    let v = read_json(&stats);
    assert_eq!(v["d"], 2);
    assert_eq!(v["p"], 2);
    assert_eq!(v["subpops"].as_array().unwrap().len(), 4);
    assert!(v["tool_version"].as_str().unwrap().starts_with("rawls "));

    let err = fails(&["stats", "--in", s(&data), "--mode", "score", "--out", s(&stats)], 2);
    assert!(err.contains("score mode requires 1 feature column"), "{err}");

    let no_y = path(&dir, "bad.csv");
    fs::write(&no_y, "z,label,f1\n1,0,0.5\n").unwrap();
    fails(&["stats", "--in", s(&no_y), "--out", s(&stats)], 2);

    let bad_row = path(&dir, "bad_row.csv");
    fs::write(&bad_row, "z,y,score\n1,0,0.5\n1,2,0.1\n").unwrap();
    let err = fails(
        &["stats", "--in", s(&bad_row), "--mode", "score", "--out", s(&stats)],
        2,
    );
    assert!(err.contains(":3:"), "line number missing: {err}");

    let few = path(&dir, "few.csv");
    fs::write(&few, "z,y,f1,f2\n1,0,0,0\n1,1,1,1\n").unwrap();
    fails(&["stats", "--in", s(&few), "--mode", "full", "--out", s(&stats)], 4);

    fails(&["stats", "--in", s(&path(&dir, "missing.csv")), "--out", s(&stats)], 3);
}

#[test]
fn fat_example_and_infeasible() {
    let dir = TempDir::new().unwrap();
    let stats = path(&dir, "s.json");
    let model = path(&dir, "m.json");
    write_json(&stats, &scalar_stats(0.0, 1.0, 4.0, 1.0));
    let stdout = ok(&["fat", "--stats", s(&stats), "--out", s(&model)]);
    assert!(stdout.starts_with("r_star=0.2"), "{stdout}");
    assert!(stdout.contains("j_star=1"));
    let m = read_json(&model);
    assert_eq!(m["type"], "threshold");
    assert_eq!(m["method"], "fat");
    assert!((m["b"].as_f64().unwrap() - 2.0).abs() <= 1e-12);
    assert!((m["r_star"].as_f64().unwrap() - 0.2).abs() <= 1e-12);
    assert!(m.get("w").is_none());

    write_json(&stats, &scalar_stats(4.0, 1.0, 0.0, 1.0));
    let err = fails(&["fat", "--stats", s(&stats), "--out", s(&model)], 5);
    assert!(err.contains("group 1"), "{err}");
}

#[test]
fn flat_symmetric_example() {
    let dir = TempDir::new().unwrap();
    let stats = path(&dir, "s.json");
    let model = path(&dir, "m.json");
    write_json(
        &stats,
        &json!({"p": 1, "d": 2, "subpops": [
            {"y": 0, "z": 1, "count": 10, "mean": [0.0, 0.0], "cov": [[1.0, 0.0], [0.0, 1.0]]},
            {"y": 1, "z": 1, "count": 10, "mean": [2.0, 0.0], "cov": [[1.0, 0.0], [0.0, 1.0]]},
        ]}),
    );
    // 1 - Phi(1)
    let expected = 0.15865525393145707;
    for mode in ["spherical", "general"] {
        let stdout = ok(&["flat", "--stats", s(&stats), "--mode", mode, "--out", s(&model)]);
        assert!(stdout.contains("j_star=1"), "{stdout}");
        let m = read_json(&model);
        let w: Vec<f64> = serde_json::from_value(m["w"].clone()).unwrap();
        let b = m["b"].as_f64().unwrap();
        assert!(w[1].abs() <= 1e-6 * w[0].abs() && w[0] > 0.0, "{w:?}");
        assert!((b / w[0] - 1.0).abs() <= 1e-6);
        assert!((m["r_star"].as_f64().unwrap() - expected).abs() <= 1e-6);
        assert_eq!(m["method"], if mode == "spherical" { "flat1" } else { "flat2" });
    }
}

#[test]
fn eval_on_held_out_sample() {
    let dir = TempDir::new().unwrap();
    let (train, test) = (path(&dir, "train.csv"), path(&dir, "test.csv"));
    let (stats, model, report) = (path(&dir, "s.json"), path(&dir, "m.json"), path(&dir, "r.json"));
    ok(&["synth", "--preset", "synthetic1", "--seed", "42", "--out", s(&train)]);
    ok(&["synth", "--preset", "synthetic1", "--seed", "43", "--out", s(&test)]);
    ok(&["stats", "--in", s(&train), "--mode", "spherical", "--out", s(&stats)]);
    ok(&["flat", "--stats", s(&stats), "--mode", "spherical", "--out", s(&model)]);
    ok(&["eval", "--in", s(&test), "--model", s(&model), "--out", s(&report)]);
    let r = read_json(&report);
    let r_star = r["certified_r_star"].as_f64().unwrap();
    let max_error = r["max_error"].as_f64().unwrap();
    let worst = &r["argmax_set"][0];
    let n = r["per_subpop"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["y"] == worst["y"] && e["z"] == worst["z"])
        .unwrap()["count"]
        .as_f64()
        .unwrap();
    let se = (r_star * (1.0 - r_star) / n).sqrt();
    assert!(
        (max_error - r_star).abs() <= 4.0 * se,
        "{max_error} vs {r_star} (se {se})"
    );
    assert_eq!(r["rows"], 4000);

    // a 2-D model on score data is a precondition failure
    let scores = path(&dir, "scores.csv");
    fs::write(&scores, "z,y,score\n1,0,0.5\n1,1,1.5\n").unwrap();
    fails(
        &["eval", "--in", s(&scores), "--model", s(&model), "--out", s(&report)],
        4,
    );
}

#[test]
fn oracle_two_point() {
    let dir = TempDir::new().unwrap();
    let (dist, out) = (path(&dir, "dist.json"), path(&dir, "o.json"));
    write_json(
        &dist,
        &json!({"points": ["a", "b"], "p": 1, "mass": [
            {"x": "a", "y": 1, "z": 1, "prob": 0.4},
            {"x": "a", "y": 0, "z": 1, "prob": 0.1},
            {"x": "b", "y": 1, "z": 1, "prob": 0.1},
            {"x": "b", "y": 0, "z": 1, "prob": 0.4},
        ]}),
    );
    ok(&["oracle", "--dist", s(&dist), "--out", s(&out)]);
    let v = read_json(&out);
    assert!((v["r_star"].as_f64().unwrap() - 0.2).abs() <= 1e-12);
    assert_eq!(v["optima"][0]["labels"], json!([1, 0]));
    assert_eq!(v["argmax_sets"][0].as_array().unwrap().len(), 2);
    assert!(v["dual_value_check"]["gap"].as_f64().unwrap().abs() <= 1e-12);

    write_json(
        &dist,
        &json!({"points": ["a"], "p": 1, "mass": [{"x": "a", "y": 0, "z": 1, "prob": 0.5}]}),
    );
    fails(&["oracle", "--dist", s(&dist), "--out", s(&out)], 2);
    fs::write(&dist, "{not json").unwrap();
    fails(&["oracle", "--dist", s(&dist), "--out", s(&out)], 2);
}

#[test]
fn boundary_grid_csv() {
    let dir = TempDir::new().unwrap();
    let (model, out) = (path(&dir, "m.json"), path(&dir, "g.csv"));
    write_json(
        &model,
        &json!({"type": "linear", "w": [1.0, 0.0], "b": 0.0, "r_star": null, "j_star": null, "method": "external"}),
    );
    fails(
        &["boundary", "--model", s(&model), "--bbox", "1,2,3", "--out", s(&out)],
        2,
    );
    fails(
        &["boundary", "--model", s(&model), "--bbox", "1,0,-1,1", "--out", s(&out)],
        2,
    );
    ok(&[
        "boundary",
        "--model",
        s(&model),
        "--bbox",
        "-1,-1,1,1",
        "--res",
        "3",
        "--out",
        s(&out),
    ]);
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x,y,label");
    assert_eq!(&lines[1..4], ["-1,-1,0", "0,-1,1", "1,-1,1"]);
    assert_eq!(lines.len(), 10);

    write_json(
        &model,
        &json!({"type": "threshold", "b": 0.0, "r_star": null, "j_star": null, "method": "external"}),
    );
    fails(
        &[
            "boundary",
            "--model",
            s(&model),
            "--bbox",
            "-1,-1,1,1",
            "--out",
            s(&out),
        ],
        4,
    );
}

#[test]
fn pipeline_is_byte_deterministic() {
    let run = || {
        let dir = TempDir::new().unwrap();
        let p = |n: &str| path(&dir, n);
        ok(&[
            "synth",
            "--preset",
            "synthetic1",
            "--seed",
            "42",
            "--out",
            s(&p("d.csv")),
        ]);
        ok(&[
            "stats",
            "--in",
            s(&p("d.csv")),
            "--mode",
            "full",
            "--out",
            s(&p("s.json")),
        ]);
        ok(&[
            "flat",
            "--stats",
            s(&p("s.json")),
            "--mode",
            "general",
            "--out",
            s(&p("m.json")),
        ]);
        ok(&[
            "eval",
            "--in",
            s(&p("d.csv")),
            "--model",
            s(&p("m.json")),
            "--out",
            s(&p("r.json")),
        ]);
        ["d.csv", "s.json", "m.json", "r.json"].map(|n| fs::read(p(n)).unwrap())
    };
    assert_eq!(run(), run());
}

#[test]
fn usage_errors_exit_two() {
    fails(
        &["flat", "--stats", "x.json", "--mode", "elliptic", "--out", "m.json"],
        2,
    );
    fails(&["bogus"], 2);
}
