use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn setstab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_setstab"))
        .args(args)
        .env_remove("SETSTAB_SEED")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn validator() -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schema/report.schema.json");
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

fn report(out: &Output) -> Value {
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let errors: Vec<String> = validator().iter_errors(&v).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "schema violations: {errors:?}");
    v
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn simulate_example1_conserves_planar_radius() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = setstab(&["simulate", "--scenario", "example1", "--x0", "1,0,0.5", "--T", "100", "--data-dir", d]);
    assert_eq!(code(&out), 0);
    let r = report(&out);
    assert_eq!(r["results"][0]["final_time"], 100.0);
    let (header, rows) = read_csv(&dir.path().join("example1_trajectory.csv"));
    assert_eq!(header, ["t", "x1", "x2", "x3"]);
    let drift = rows
        .iter()
        .map(|x| (x[1] * x[1] + x[2] * x[2] - 1.0).abs())
        .fold(0.0, f64::max);
    assert!(drift < 1e-8, "x1^2 + x2^2 drifted by {drift}");
}

#[test]
fn polar_reduction_reports_hypothesis_i_failing() {
    let out = setstab(&["check-reduction", "--scenario", "example-polar", "--theorem", "sas"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    let rep = &r["results"][0]["report"];
    assert_eq!(rep["hypotheses"]["i"]["outcome"], "fails");
    assert_eq!(rep["hypotheses"]["ii"]["outcome"], "holds");
    assert_eq!(rep["hypotheses"]["iii"]["outcome"], "holds");
    assert_eq!(rep["consistency"], "hypotheses_not_met");
}

#[test]
fn exit_codes_follow_outcomes() {
    let fails = setstab(&["check-stability", "--scenario", "example1", "--property", "stable", "--relative", "o"]);
    assert_eq!(code(&fails), 1);
    let r = report(&fails);
    assert_eq!(r["outcome"], "fails");
    assert!(r["results"][0]["verdict"]["witness"].is_object());

    let holds = setstab(&["check-passivity", "--scenario", "5-state", "--samples", "500"]);
    assert_eq!(code(&holds), 0);
    report(&holds);

    let open = ["--loop", "open", "--T", "5"];
    let mut args = vec!["check-stability", "--scenario", "example1", "--property", "uniform-semi-attractor"];
    args.extend(open);
    let inconclusive = setstab(&args);
    assert_eq!(code(&inconclusive), 2);
    assert_eq!(report(&inconclusive)["outcome"], "inconclusive");
}

#[test]
fn usage_and_input_errors_exit_3() {
    assert_eq!(code(&setstab(&["frobnicate"])), 3);
    assert_eq!(code(&setstab(&["check-stability", "--scenario", "example1"])), 3);
    assert_eq!(code(&setstab(&["check-passivity", "--scenario", "nonexistent"])), 3);
    assert_eq!(code(&setstab(&["check-passivity"])), 3);
    assert_eq!(code(&setstab(&["simulate", "--scenario", "example1", "--x0", "1,0"])), 3);
    assert_eq!(code(&setstab(&["simulate", "--scenario", "example1", "--box", "2:1"])), 3);
    assert_eq!(code(&setstab(&["simulate", "--scenario", "example1", "--T", "-1"])), 3);
    assert_eq!(code(&setstab(&["--help"])), 0);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"name\": \"x\", \"system\": {\"model\": \"nope\"}}").unwrap();
    let out = setstab(&["check-passivity", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn fixed_seed_gives_identical_reports() {
    let args = ["check-stability", "--scenario", "example-polar", "--property", "stable", "--relative", "o", "--seed", "7"];
    let a = setstab(&args);
    let b = setstab(&args);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(report(&a)["seed"], 7);
}

#[test]
fn seed_env_override() {
    let out = Command::new(env!("CARGO_BIN_EXE_setstab"))
        .args(["check-passivity", "--scenario", "integrator", "--samples", "50"])
        .env("SETSTAB_SEED", "11")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let r = report(&out);
    assert_eq!(r["seed"], 11);
    assert_eq!(r["results"][0]["verdict"]["seed"], 11);
}

#[test]
fn shown_config_runs_from_file() {
    let show = setstab(&["scenario", "show", "integrator"]);
    assert_eq!(code(&show), 0);
    let cfg = report(&show)["results"][0]["config"].clone();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("integrator.json");
    std::fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let from_file = setstab(&["check-detectability", "--config", path.to_str().unwrap(), "--kind", "zero-state"]);
    let builtin = setstab(&["check-detectability", "--scenario", "integrator", "--kind", "zero-state"]);
    assert_eq!(code(&from_file), 0);
    let a = report(&from_file);
    let b = report(&builtin);
    assert_eq!(a["results"], b["results"]);
}

#[test]
fn limit_set_writes_cloud() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = setstab(&["limit-set", "--scenario", "example-polar", "--x0", "0.5,1,0", "--loop", "open", "--data-dir", d]);
    assert_eq!(code(&out), 0);
    let r = report(&out);
    let files = r["files"].as_array().unwrap();
    assert_eq!(files.len(), 1);
    let (header, rows) = read_csv(Path::new(files[0].as_str().unwrap()));
    assert_eq!(header, ["x1", "x2", "x3"]);
    assert!(!rows.is_empty());
    // The open-loop ω-limit set from x3 = 0 is the unit circle.
    assert!(rows.iter().all(|x| (x[0] - 1.0).abs() < 1e-3 && x[2].abs() < 1e-9));
}

#[test]
fn run_all_passes() {
    let out = setstab(&["scenario", "run-all"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    let results = r["results"].as_array().unwrap();
    assert!(results.len() > 30);
    assert!(results.iter().all(|e| e["pass"] == true));
}

#[test]
fn list_names_every_builtin() {
    let out = setstab(&["scenario", "list"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    for name in ["example1", "example-polar", "5-state", "cascade"] {
        assert!(text.contains(name));
    }
    assert!(text.contains("[invented]"));
}
