use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn permon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_permon")).args(args).output().expect("run permon")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn bundled_scenarios_validate() {
    for name in ["three_target.toml", "random7_seed138.toml"] {
        let o = permon(&["validate", s(&bundled(name))]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}{}", stdout(&o), stderr(&o));
        assert!(stdout(&o).contains("no violations"));
    }
}

#[test]
fn violations_name_the_target() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(bundled("three_target.toml")).unwrap();
    // zero out the second target's Q
    let mut parts: Vec<String> = text.split("[[targets]]").map(String::from).collect();
    parts[2] = parts[2].replace("q = [[0.1, 0.0], [0.0, 0.1]]", "q = [[0.0, 0.0], [0.0, 0.0]]");
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, parts.join("[[targets]]")).unwrap();
    let o = permon(&["validate", s(&path)]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains("target 2") && out.contains("Q not positive definite"), "{out}");
}

#[test]
fn malformed_files_exit_two_with_a_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.toml");
    std::fs::write(&path, "schema = \"permon-scenario/1\"\nname = \n").unwrap();
    let o = permon(&["validate", s(&path)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line"), "{}", stderr(&o));
    let o = permon(&["validate", s(&dir.path().join("missing.toml"))]);
    assert_eq!(o.status.code(), Some(2));
    let o = permon(&["optimize"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn a_single_target_stays_put() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("golden.toml");
    assert!(permon(&["example-scenario", "golden-scalar", "-o", s(&sc)]).status.success());
    let out = dir.path().join("out");
    let o = permon(&["optimize", s(&sc), "--iters", "1", "--out-dir", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("best cycle [1] (τ = 1)"), "{}", stdout(&o));
    let history = std::fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 2);
}

#[test]
fn optimize_then_evaluate_three_targets() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let sc = bundled("three_target.toml");
    let o = permon(&["optimize", s(&sc), "--iters", "200", "--parallel", "4", "--svg", "--out-dir", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let history = std::fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 201);
    for f in ["report.json", "solution.json", "trajectory.csv", "targets.csv", "cost.svg", "trajectory.svg"] {
        assert!(out.join(f).exists(), "{f}");
    }

    let report = dir.path().join("eval.json");
    let solution = out.join("solution.json");
    let o = permon(&["evaluate", s(&sc), s(&solution), "--trials", "200", "--report", s(&report)]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let sdp = r["sdp_cost"].as_f64().unwrap();
    let mc = r["monte_carlo"]["mse"].as_f64().unwrap();
    assert!((mc - sdp).abs() < 0.05 * sdp, "{mc} vs {sdp}");
    assert!((r["deterministic_cost"].as_f64().unwrap() - sdp).abs() < 1e-3 * sdp);

    // move one waypoint far away: the speed limit is broken
    let mut sol: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&solution).unwrap()).unwrap();
    sol["positions"][0][0] = serde_json::json!(10.0);
    let tampered = dir.path().join("tampered.json");
    std::fs::write(&tampered, sol.to_string()).unwrap();
    let o = permon(&["evaluate", s(&sc), s(&tampered), "--trials", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("speed limit"), "{}", stdout(&o));

    // a cycle length that does not match the arrays
    let mut sol: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&solution).unwrap()).unwrap();
    sol["tau"] = serde_json::json!(sol["tau"].as_u64().unwrap() + 1);
    let wrong = dir.path().join("wrong.json");
    std::fs::write(&wrong, sol.to_string()).unwrap();
    let o = permon(&["evaluate", s(&sc), s(&wrong), "--trials", "2"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn solutions_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let sc = bundled("three_target.toml");
    let mut files = Vec::new();
    for (run, parallel) in [("a", "1"), ("b", "3")] {
        let out = dir.path().join(run);
        let o = permon(&["optimize", s(&sc), "--iters", "12", "--parallel", parallel, "--out-dir", s(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        files.push(std::fs::read(out.join("solution.json")).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn generated_random_scenario_validates() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("r.toml");
    let o = permon(&["example-scenario", "random", "-o", s(&sc), "--targets", "7", "--seed", "138"]);
    assert!(o.status.success());
    assert!(permon(&["validate", s(&sc)]).status.success());
    // identical to the bundled copy
    assert_eq!(std::fs::read(&sc).unwrap(), std::fs::read(bundled("random7_seed138.toml")).unwrap());
    let o = permon(&["example-scenario", "random", "-o", s(&sc), "--targets", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn seven_targets_reach_a_finite_cost_quickly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = permon(&["optimize", s(&bundled("random7_seed138.toml")), "--iters", "5", "--parallel", "5", "--out-dir", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report["best"]["cost"].as_f64().unwrap().is_finite());
}
