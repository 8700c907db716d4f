use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const EQ1: &str = "o2 & X(((!o1 U o2) & F o1) | (o1 & X o3))";

const MICRO: &str = r#"{
  "alphabet": ["a", "b"],
  "formula": "a & X b",
  "plant": {
    "A": [[0.0]], "B": [[1.0]],
    "regions": [
      {"obs": "a", "blocks": [{"indices": [0], "center": [1.0], "radius": 0.1}]},
      {"obs": "b", "blocks": [{"indices": [0], "center": [-1.0], "radius": 0.1}]}
    ]
  },
  "x0": [0.0]
}"#;

/// Planar single integrator with three target discs, used with the
/// three-observation formula.
fn planar(policy: &str) -> String {
    format!(
        r#"{{
  "alphabet": ["o1", "o2", "o3"],
  "formula": "{EQ1}",
  "plant": {{
    "A": [[0.0, 0.0], [0.0, 0.0]], "B": [[1.0, 0.0], [0.0, 1.0]],
    "regions": [
      {{"obs": "o1", "blocks": [{{"indices": [0, 1], "center": [3.0, 0.0], "radius": 0.2}}]}},
      {{"obs": "o2", "blocks": [{{"indices": [0, 1], "center": [0.0, 3.0], "radius": 0.2}}]}},
      {{"obs": "o3", "blocks": [{{"indices": [0, 1], "center": [-3.0, 0.0], "radius": 0.2}}]}}
    ]
  }},
  "x0": [0.0, 0.0],
  "policy": {policy}
}}"#
    )
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ltlbarrier"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn compile_reference_formula() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fsa");
    let o = run(&[
        "compile",
        "--formula",
        EQ1,
        "--alphabet",
        "o1,o2,o3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let doc: Value = serde_json::from_str(&fs::read_to_string(out.join("automaton.json")).unwrap()).unwrap();
    assert_eq!(doc["states"].as_array().unwrap().len(), 6);
    let dot = fs::read_to_string(out.join("automaton.dot")).unwrap();
    assert!(dot.contains("d=3") && dot.contains("Ō={o1,o2}"));
}

#[test]
fn compile_atom_and_formula_file() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "f.ltl", "o1\n");
    let out = dir.path().join("fsa");
    let o = run(&[
        "compile",
        "--formula-file",
        &f,
        "--alphabet",
        "o1,o2,o3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let doc: Value = serde_json::from_str(&fs::read_to_string(out.join("automaton.json")).unwrap()).unwrap();
    assert_eq!(doc["states"].as_array().unwrap().len(), 2);
}

#[test]
fn contradiction_exits_2() {
    let o = run(&["compile", "--formula", "o1 & !o1", "--alphabet", "o1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no accepting state reachable"));
}

#[test]
fn syntax_error_exits_1() {
    let o = run(&["compile", "--formula", "o1 &", "--alphabet", "o1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn simulate_micro() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "micro.json", MICRO);
    let out = dir.path().join("sim");
    let o = run(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["verdict"], "accepted");
    assert_eq!(v["J"], 2);
    let t = v["T"].as_f64().unwrap();
    let exact = 2.0 * 10f64.ln() + 2.0 * 19f64.ln();
    assert!((t - exact).abs() < 1e-3);
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,j,s,o,xi_1,B\n"));
    // first sample: d = 2, λ ≈ 0.11338, U_a(0) = 1
    let first: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let b: f64 = first[5].parse().unwrap();
    assert!((b - (2.0 + 0.5 / 4.41)).abs() < 1e-9);
}

#[test]
fn zero_budget_is_inconclusive() {
    let dir = tempfile::tempdir().unwrap();
    let text = MICRO.replace(r#""x0": [0.0]"#, r#""x0": [0.0], "T_max": 0.0"#);
    let cfg = write(dir.path(), "zero.json", &text);
    let o = run(&["simulate", "--config", &cfg]);
    assert!(o.status.success());
    let v = stdout_json(&o);
    assert_eq!(v["verdict"], "inconclusive");
    assert_eq!(v["budget_exhausted"], "time");
}

#[test]
fn scripted_paths_differ() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.json", &planar(r#"{"scripted": ["o2", "o2", "o1"]}"#));
    let b = write(dir.path(), "b.json", &planar(r#"{"scripted": ["o2", "o1", "o3"]}"#));
    let va = stdout_json(&run(&["simulate", "--config", &a, "--seed", "1"]));
    let vb = stdout_json(&run(&["simulate", "--config", &b, "--seed", "2"]));
    assert_eq!(va["verdict"], "accepted");
    assert_eq!(vb["verdict"], "accepted");
    assert_eq!(va["J"], 3);
    assert_eq!(vb["J"], 3);
    assert_eq!(va["word"], serde_json::json!(["o2", "o2", "o1"]));
    assert_eq!(vb["word"], serde_json::json!(["o2", "o1", "o3"]));
    assert_ne!(va["states"], vb["states"]);
    assert_eq!(va["states"].as_array().unwrap().len(), 4);
}

#[test]
fn seeded_random_policy_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "r.json", &planar(r#""seeded_random""#));
    let a = run(&["simulate", "--config", &cfg, "--seed", "11"]);
    let b = run(&["simulate", "--config", &cfg, "--seed", "11"]);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(stdout_json(&a)["verdict"], "accepted");
}

#[test]
fn verify_micro_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "micro.json", MICRO);
    let out = dir.path().join("v");
    let o = run(&["verify", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let v = stdout_json(&o);
    assert_eq!(v["pass"], true);
    assert!((v["lambda"].as_f64().unwrap() - 0.5 / 4.41).abs() < 1e-9);
    assert_eq!(v["conditions"].as_array().unwrap().len(), 5);
    for c in v["conditions"].as_array().unwrap() {
        assert!(c["condition"].is_string() && c["method"].is_string() && c["witness"].is_object());
    }
    let csv = fs::read_to_string(out.join("barrier.csv")).unwrap();
    assert!(csv.starts_with("t,j,B,event\n"));
}

#[test]
fn verify_lambda_override_fails_jump_condition() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "micro.json", MICRO);
    let o = run(&["verify", "--config", &cfg, "--lambda", "1"]);
    assert!(o.status.success());
    let v = stdout_json(&o);
    assert_eq!(v["pass"], false);
    let jump = v["conditions"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["condition"] == "jump_decrease")
        .unwrap();
    assert_eq!(jump["pass"], false);
    assert!(jump["witness"]["sampled"]["violation"]["change"].as_f64().unwrap() > 0.0);
}

#[test]
fn verify_setpoint_on_boundary_fails_flow_condition() {
    let dir = tempfile::tempdir().unwrap();
    let text = MICRO.replace(
        r#""radius": 0.1}]},"#,
        r#""radius": 0.1}], "setpoint": [1.1]},"#,
    );
    assert_ne!(text, MICRO);
    let cfg = write(dir.path(), "bad.json", &text);
    let o = run(&["verify", "--config", &cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    let flow = v["conditions"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["condition"] == "flow_decrease")
        .unwrap();
    assert_eq!(flow["pass"], false);
}

#[test]
fn region_mismatch_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", &MICRO.replace(r#""obs": "b""#, r#""obs": "c""#));
    let o = run(&["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`c`"));
}

#[test]
fn missing_config_exits_1() {
    let o = run(&["simulate", "--config", "/nonexistent/scenario.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn reproduce_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let small = write(dir.path(), "small.json", r#"{"random_runs": 5}"#);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = run(&[
            "reproduce",
            "--config",
            &small,
            "--seed",
            "3",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let mut names: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.iter().any(|n| n == "path1_trajectory.csv"));
    assert!(names.iter().any(|n| n == "barrier.svg"));
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn reproduce_shifted_riccati_mode_warns() {
    let dir = tempfile::tempdir().unwrap();
    let small = write(dir.path(), "small.json", r#"{"random_runs": 0}"#);
    let out = dir.path().join("p");
    let o = run(&[
        "reproduce",
        "--config",
        &small,
        "--gain-mode",
        "paper",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["summary"]["gain_mode_used"], "care");
}
