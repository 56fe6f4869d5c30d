use std::fs;
use std::path::Path;
use std::process::Command;

use fpk_certify::presets::PRESET_NAMES;
use fpk_certify::{parse_spec, run_pipeline, Mode, RunOptions};

fn preset_doc(name: &str) -> String {
    format!("[problem]\npreset = \"{name}\"\n")
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fpk-certify"))
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn every_preset_runs_all_modes() {
    let dir = tempfile::tempdir().unwrap();
    for name in PRESET_NAMES {
        let spec = parse_spec(&preset_doc(name)).unwrap();
        let out = dir.path().join(name);
        for mode in [Mode::Bounds, Mode::Simulate, Mode::Verify, Mode::Report] {
            let outcome =
                run_pipeline(&spec, mode, &RunOptions::new(&out)).unwrap_or_else(|e| panic!("{name} {mode:?}: {e}"));
            assert!(outcome.pass, "{name} {mode:?} did not pass:\n{}", outcome.summary);
        }
        assert!(out.join("report.md").exists());
    }
}

#[test]
fn power_moment_bound_decays_like_one_over_t() {
    let dir = tempfile::tempdir().unwrap();
    let spec = parse_spec(&preset_doc("example2_5")).unwrap();
    run_pipeline(&spec, Mode::Bounds, &RunOptions::new(dir.path())).unwrap();
    let csv = fs::read_to_string(dir.path().join("bounds.csv")).unwrap();
    let first = csv.lines().nth(1).unwrap();
    let slope: f64 = first.rsplit(',').next().unwrap().parse().unwrap();
    assert!((slope + 1.0).abs() < 1e-3, "slope {slope}");
}

#[test]
fn zero_step_simulation_keeps_the_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    let doc = "[problem]\npreset = \"ou1d\"\n[solver]\nend_time = 0\nsnapshots = \"uniform 4\"\n";
    let spec = parse_spec(doc).unwrap();
    run_pipeline(&spec, Mode::Simulate, &RunOptions::new(dir.path())).unwrap();
    let summary = read_json(&dir.path().join("simulation.json"));
    assert_eq!(summary["steps"], 0);
    assert_eq!(summary["snapshot_times"], serde_json::json!([0.0]));
    assert_eq!(summary["max_abs_mass_residual"], 0.0);
    let ledger = fs::read_to_string(dir.path().join("ledger.csv")).unwrap();
    assert_eq!(ledger.lines().count(), 2);
}

#[test]
fn custom_two_dimensional_problem() {
    let dir = tempfile::tempdir().unwrap();
    let doc = r#"
[problem]
dimension = 2
[coefficients]
a11 = "1 + 0.1 * exp(-norm(x)^2)"
a22 = "1"
b1 = "-x1 * norm(x)^2"
b2 = "-x2 * norm(x)^2"
c = "0"
[lyapunov]
r = 2
k = 4
[bounds]
select = ["power_moment"]
points = 5
samples = 21
[grid]
extent = 3
cells = 24
[solver]
end_time = 0.1
snapshots = [0.05, 0.1]
[initial]
kind = "point_mass"
mean = [0.5, 0]
width = 0.3
"#;
    let spec = parse_spec(doc).unwrap();
    let out = dir.path();
    assert!(run_pipeline(&spec, Mode::Bounds, &RunOptions::new(out)).unwrap().pass);
    run_pipeline(&spec, Mode::Simulate, &RunOptions::new(out)).unwrap();
    let summary = read_json(&out.join("simulation.json"));
    assert!((summary["final_mass"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    let first = fs::read_to_string(out.join("snapshots/snapshot_0000.csv")).unwrap();
    assert!(first.starts_with("x1,x2,density\n"));
    assert_eq!(first.lines().count(), 1 + 24 * 24);
}

#[test]
fn cli_reports_pass_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("ou.toml");
    fs::write(&spec, preset_doc("ou1d")).unwrap();
    let out = dir.path().join("out");
    for mode in ["bounds", "simulate", "verify"] {
        let status = binary()
            .args([mode, "--spec"])
            .arg(&spec)
            .arg("--out")
            .arg(&out)
            .args(["--threads", "2"])
            .output()
            .unwrap();
        assert_eq!(
            status.status.code(),
            Some(0),
            "{mode}: {}",
            String::from_utf8_lossy(&status.stderr)
        );
    }
    let status = binary().arg("report").arg("--out").arg(&out).output().unwrap();
    assert_eq!(status.status.code(), Some(0));
    assert!(read_json(&out.join("verification.json"))["pass"].as_bool().unwrap());
    assert!(out.join("verify.metadata.json").exists());
    assert!(!out.join("error.json").exists());
}

#[test]
fn uncertified_bound_exits_with_failure() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("expanding.toml");
    let doc = "[problem]\npreset = \"example2_3\"\n[lyapunov]\nk = 4\n[bounds]\nselect = [\"power_moment\"]\n";
    fs::write(&spec, doc).unwrap();
    let out = dir.path().join("out");
    let run = binary()
        .arg("bounds")
        .arg("--spec")
        .arg(&spec)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(1));
    let bounds = read_json(&out.join("bounds.json"));
    assert_eq!(bounds["bounds"][0]["certified"], false);
}

#[test]
fn invalid_spec_exits_with_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.toml");
    fs::write(&spec, "[problem]\ndimension = 1\n[coefficients]\na = \"1 + foo\"\n").unwrap();
    let out = dir.path().join("out");
    let run = binary()
        .arg("simulate")
        .arg("--spec")
        .arg(&spec)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&run.stderr);
    assert!(stderr.contains("line 4, column 10"), "{stderr}");
    assert_eq!(read_json(&out.join("error.json"))["exit_code"], 2);
}

#[test]
fn hypothesis_violation_quotes_the_hypothesis() {
    let doc = "[problem]\npreset = \"example2_6\"\n[lyapunov]\nr = 2\n";
    let errors = parse_spec(doc).unwrap_err();
    assert!(errors.to_string().contains("Let r>2 and k>r"), "{errors}");
}

#[test]
fn evaluation_failure_exits_with_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("log.toml");
    fs::write(
        &spec,
        "[problem]\npreset = \"heat1d\"\n[coefficients]\nc = \"-ln(x1 + 1)\"\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let run = binary()
        .arg("simulate")
        .arg("--spec")
        .arg(&spec)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(3));
    let record = read_json(&out.join("error.json"));
    let message = record["message"].as_str().unwrap();
    assert!(message.contains("[coefficients] c"), "{message}");
    assert!(message.contains("ln(x1 + 1)"), "{message}");
}

#[test]
fn report_without_inputs_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let run = binary().arg("report").arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(run.status.code(), Some(2));
}
