use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn dblsim(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dblsim"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_writes_three_files_reproducibly() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let args = ["simulate", "--seed", "4", "--lookahead", "2", "--preset", "5BLS"];
    assert!(dblsim(&args, a.path()).status.success());
    assert!(dblsim(&args, b.path()).status.success());
    for name in ["trajectories.csv", "ctps.csv", "report.json"] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name} differs between identical runs");
    }
    let traj = fs::read_to_string(a.path().join("trajectories.csv")).unwrap();
    assert!(traj.starts_with("bus_id,stop_id,arrival_s,departure_s\n"));
    let ctps = fs::read_to_string(a.path().join("ctps.csv")).unwrap();
    assert!(ctps.starts_with("time_s,bus_id,h_1,"));
    let report = read_json(&a.path().join("report.json"));
    assert_eq!(report["pattern"], serde_json::json!([2, 3, 5, 11, 17]));
    assert_eq!(report["controller"]["lookahead"]["depth"], 2);
}

#[test]
fn uncontrolled_reference_run_bunches() {
    let dir = TempDir::new().unwrap();
    let out = dblsim(&["simulate", "--seed", "1", "--lookahead", "0"], dir.path());
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("bunched: yes"));
    assert_eq!(read_json(&dir.path().join("report.json"))["stability"]["bunched"], true);
}

#[test]
fn single_replication_evaluation_matches_simulation() {
    let sim = TempDir::new().unwrap();
    let eval = TempDir::new().unwrap();
    let common = ["--seed", "6", "--lookahead", "1", "--preset", "3BLS"];
    let mut s = vec!["simulate"];
    s.extend(common);
    let mut e = vec!["evaluate", "--reps", "1"];
    e.extend(common);
    assert!(dblsim(&s, sim.path()).status.success());
    assert!(dblsim(&e, eval.path()).status.success());
    let report = read_json(&sim.path().join("report.json"));
    let row = read_json(&eval.path().join("aggregate.json"));
    assert_eq!(row["fsi"], report["stability"]["fsi"]);
    assert_eq!(row["n_decisions"].as_f64(), report["stability"]["n_decisions"].as_f64());
    assert_eq!(row["wait_mean_s"], report["passengers"]["stats"]["wait"]["mean"]);
}

#[test]
fn aggregate_is_the_mean_of_the_replications() {
    let dir = TempDir::new().unwrap();
    let out = dblsim(&["evaluate", "--reps", "3", "--lookahead", "0", "--label", "none"], dir.path());
    assert!(out.status.success());
    let reports = read_json(&dir.path().join("reports.json"));
    let reports = reports.as_array().unwrap();
    assert_eq!(reports.len(), 3);
    let mean = reports.iter().map(|r| r["stability"]["fsi"].as_f64().unwrap()).sum::<f64>() / 3.0;
    let row = read_json(&dir.path().join("aggregate.json"));
    assert!((row["fsi"].as_f64().unwrap() - mean).abs() <= 1e-9 * mean);
    let csv = fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().starts_with("none,3,"));
}

#[test]
fn zero_limits_select_no_lanes() {
    let dir = TempDir::new().unwrap();
    let out = dblsim(
        &["optimize", "--reps", "1", "--lookahead", "1", "--limits", "0,0", "--candidates", "2,5,17"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let result = read_json(&dir.path().join("result.json"));
    assert_eq!(result["optimal"], serde_json::json!([]));
    let log = fs::read_to_string(dir.path().join("search_log.csv")).unwrap();
    assert!(log.starts_with("node_id,parent_id,removed_location,chosen_set,objective,feasible,pruned\n"));
    assert_eq!(log.lines().count() as u64, result["nodes_generated"].as_u64().unwrap() + 1);
}

#[test]
fn exit_codes_separate_bad_input_from_infeasibility() {
    let dir = TempDir::new().unwrap();
    let bad_preset = dblsim(&["simulate", "--preset", "nope"], dir.path());
    assert_eq!(bad_preset.status.code(), Some(2));
    let ineligible = dblsim(&["simulate", "--pattern", "1,2"], dir.path());
    assert_eq!(ineligible.status.code(), Some(2));
    let gamma = dblsim(&["simulate", "--lookahead", "2", "--gamma", "0"], dir.path());
    assert_eq!(gamma.status.code(), Some(2));

    let scenario = dir.path().join("broken.json");
    fs::write(&scenario, r#"{"stops": []}"#).unwrap();
    let broken = dblsim(&["simulate", "--scenario", scenario.to_str().unwrap()], dir.path());
    assert_eq!(broken.status.code(), Some(2));

    let infeasible = dblsim(&["optimize", "--reps", "1", "--limits=-1,-1"], dir.path());
    assert_eq!(infeasible.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&infeasible.stderr).contains("no deployment pattern"));
}

#[test]
fn invalid_scenarios_print_their_violations() {
    let dir = TempDir::new().unwrap();
    let mut cfg: Value = serde_json::from_str(dbl_reference()).unwrap();
    cfg["stops"][0]["arrival_rate"] = serde_json::json!(-2.0);
    let path = dir.path().join("scenario.json");
    fs::write(&path, cfg.to_string()).unwrap();
    let out = dblsim(&["simulate", "--scenario", path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("arrival_rate"), "{stderr}");
}

fn dbl_reference() -> &'static str {
    include_str!("../../core/data/reference_line.json")
}
