use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::Value;

fn mcbf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcbf"))
        .args(args)
        .output()
        .expect("spawn mcbf")
}

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn test_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join(rel)
}

fn run_scenario(scenario: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "run",
        scenario.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    mcbf(&args)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn turn90_msttr_runs_clean_without_collision() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_scenario(&repo_file("scenarios/turn90_msttr.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["trajectory.csv", "metrics.json", "audit.json"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let m = read_json(&dir.path().join("metrics.json"));
    assert_eq!(m["collision"], Value::Bool(false));
    let audit = read_json(&dir.path().join("audit.json"));
    assert_eq!(audit["passed"], Value::Bool(true), "{audit}");
}

#[test]
fn turn90_ssttr_completes_with_collision_reported() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_scenario(&repo_file("scenarios/turn90_ssttr_ecbf.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = read_json(&dir.path().join("metrics.json"));
    assert_eq!(m["collision"], Value::Bool(true));
    assert_eq!(m["termination"]["kind"], "completed");
}

#[test]
fn missing_scenario_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_scenario(&dir.path().join("nope.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nope.toml"), "{}", stderr(&o));
    assert!(!dir.path().join("metrics.json").exists());
}

#[test]
fn malformed_scenario_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "name = \"x\"\nrobot = \"msttr\"\nduration = = 3\n").unwrap();
    let o = run_scenario(&bad, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line"), "{}", stderr(&o));
}

#[test]
fn infeasible_filter_exits_two_and_still_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_scenario(
        &test_file("data/head_on.toml"),
        dir.path(),
        &["--filter-input-boxes"],
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let m = read_json(&dir.path().join("metrics.json"));
    assert_eq!(m["termination"]["kind"], "filter_infeasible");
    assert!(dir.path().join("trajectory.csv").is_file());
}

#[test]
fn slack_relaxation_completes_the_infeasible_case() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_scenario(
        &test_file("data/head_on.toml"),
        dir.path(),
        &["--filter-input-boxes", "--filter-slack"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = read_json(&dir.path().join("metrics.json"));
    assert!(m["slack_total"].as_f64().unwrap() > 0.0);
}

#[test]
fn plots_are_well_formed_svg() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_scenario(&repo_file("scenarios/turn90_msttr.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0));
    let csv = dir.path().join("trajectory.csv");
    for kind in ["path", "inputs", "barriers", "footprint"] {
        let svg = dir.path().join(format!("{kind}.svg"));
        let o = mcbf(&[
            "plot",
            csv.to_str().unwrap(),
            "--kind",
            kind,
            "--out",
            svg.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{kind}: {}", stderr(&o));
        let text = std::fs::read_to_string(&svg).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{kind}: {e}"));
        assert_eq!(doc.root_element().tag_name().name(), "svg", "{kind}");
        assert!(doc.descendants().any(|n| n.attribute("class") == Some("axes")), "{kind}");
    }
}

#[test]
fn unknown_plot_kind_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_scenario(&repo_file("scenarios/turn90_msttr.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0));
    let svg = dir.path().join("x.svg");
    let o = mcbf(&[
        "plot",
        dir.path().join("trajectory.csv").to_str().unwrap(),
        "--kind",
        "histogram",
        "--out",
        svg.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("histogram"), "{}", stderr(&o));
    assert!(!svg.exists());
}

#[test]
fn rerun_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let sc = repo_file("scenarios/turn90_msttr.toml");
    assert_eq!(run_scenario(&sc, a.path(), &[]).status.code(), Some(0));
    assert_eq!(run_scenario(&sc, b.path(), &[]).status.code(), Some(0));
    for f in ["trajectory.csv", "metrics.json", "audit.json"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }
}

fn compare(path: &str, golden: &Value, actual: &Value) {
    match (golden, actual) {
        (Value::Object(g), Value::Object(a)) => {
            let gk: Vec<_> = g.keys().collect();
            let ak: Vec<_> = a.keys().collect();
            assert_eq!(gk, ak, "key set at {path}");
            for (k, v) in g {
                compare(&format!("{path}.{k}"), v, &a[k]);
            }
        }
        (Value::Array(g), Value::Array(a)) => {
            assert_eq!(g.len(), a.len(), "length at {path}");
            for (i, (x, y)) in g.iter().zip(a).enumerate() {
                compare(&format!("{path}[{i}]"), x, y);
            }
        }
        (Value::Number(g), Value::Number(a)) => {
            let (g, a) = (g.as_f64().unwrap(), a.as_f64().unwrap());
            assert!(
                (g - a).abs() <= 1e-6 * (1.0 + g.abs()),
                "{path}: golden {g}, got {a}"
            );
        }
        (g, a) => assert_eq!(g, a, "value at {path}"),
    }
}

#[test]
fn turn90_metrics_match_golden() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_scenario(&repo_file("scenarios/turn90_msttr.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0));
    let golden = read_json(&test_file("golden/turn90_msttr_metrics.json"));
    let actual = read_json(&dir.path().join("metrics.json"));
    compare("metrics", &golden, &actual);
}

#[test]
fn verify_passes() {
    let o = mcbf(&["verify"]);
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{out}");
    assert!(out.contains("PASS"));
    assert!(!out.contains("FAIL"), "{out}");
}

#[test]
fn verify_detects_perturbed_entry() {
    let start = Instant::now();
    let o = mcbf(&["verify", "--perturb", "a_57=1e-3"]);
    let elapsed = start.elapsed().as_secs_f64();
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(4), "{out}");
    let row = out
        .lines()
        .find(|l| l.contains("a_57"))
        .unwrap_or_else(|| panic!("no a_57 row in\n{out}"));
    assert!(row.contains("FAIL"), "{row}");
    assert!(elapsed < 30.0, "verify took {elapsed:.1} s");
}

#[test]
fn verify_rejects_unknown_entry() {
    let o = mcbf(&["verify", "--perturb", "a_99=1"]);
    assert_eq!(o.status.code(), Some(1));
}
