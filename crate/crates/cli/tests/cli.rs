use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use relaymesh::geometry::{ConvexObstacle, Vec3, Workspace};
use relaymesh::sim::{ScenarioConfig, ScenarioParams, SCHEMA_VERSION};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_relaymesh"))
}

fn small() -> ScenarioConfig {
    ScenarioConfig {
        schema_version: SCHEMA_VERSION,
        name: "cli-small".into(),
        workspace: Workspace::new(Vec3::zeros(), Vec3::new(30.0, 30.0, 10.0)),
        obstacles: vec![ConvexObstacle::axis_box(Vec3::new(10.0, 14.0, 0.0), Vec3::new(14.0, 18.0, 8.0)).unwrap()],
        ground_station: Vec3::new(3.0, 3.0, 3.0),
        targets: vec![Vec3::new(11.0, 4.0, 3.0)],
        params: ScenarioParams {
            tick_budget: 200,
            ..ScenarioParams::default()
        },
    }
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).to_string()
}

#[test]
fn validate_accepts_a_good_file() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(dir.path(), "s.json", &small().to_json());
    let o = bin().args(["validate", "--scenario", &s]).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn malformed_field_gives_one_path_qualified_line_and_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&small().to_json()).unwrap();
    v["params"]["r_a"] = serde_json::json!("wide");
    let s = write(dir.path(), "bad.json", &v.to_string());
    let o = bin().args(["validate", "--scenario", &s]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.contains("params.r_a"), "{err}");

    let mut v: serde_json::Value = serde_json::from_str(&small().to_json()).unwrap();
    v["targets"][0] = serde_json::json!([12.0, 16.0, 4.0]);
    let s = write(dir.path(), "inside.json", &v.to_string());
    let o = bin().args(["run", "--scenario", &s, "--out", dir.path().to_str().unwrap()]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("targets[0]"), "{}", stderr(&o));
}

#[test]
fn topology_of_one_near_target_is_one_agent_and_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(dir.path(), "s.json", &small().to_json());
    let mut trees = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = bin()
            .args(["topology", "--scenario", &s, "--seed", "7", "--out", out.to_str().unwrap()])
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(stdout(&o).starts_with("N=1 "), "{}", stdout(&o));
        trees.push(fs::read_to_string(out.join("tree.json")).unwrap());
    }
    assert_eq!(trees[0], trees[1]);
}

#[test]
fn enclosed_target_is_infeasible_topology() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.targets = vec![Vec3::new(22.0, 22.0, 5.0)];
    // hollow shell around the target
    let (lo, hi, t) = (Vec3::new(19.0, 19.0, 2.0), Vec3::new(25.0, 25.0, 8.0), 0.5);
    for axis in 0..3 {
        for side in [lo[axis], hi[axis] - t] {
            let mut a = lo;
            let mut b = hi;
            a[axis] = side;
            b[axis] = side + t;
            cfg.obstacles.push(ConvexObstacle::axis_box(a, b).unwrap());
        }
    }
    cfg.params.topology_samples = 200;
    cfg.params.topology_retries = 0;
    let s = write(dir.path(), "shell.json", &cfg.to_json());
    let o = bin().args(["topology", "--scenario", &s, "--out", dir.path().to_str().unwrap()]).output().unwrap();
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn run_writes_log_and_one_metrics_row_per_tick() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(dir.path(), "s.json", &small().to_json());
    let out = dir.path().join("run");
    let o = bin().args(["run", "--scenario", &s, "--out", out.to_str().unwrap()]).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("constraints"), "{}", stdout(&o));
    let log = fs::read_to_string(out.join("runlog.ndjson")).unwrap();
    let ticks = log.lines().filter(|l| l.contains(r#""type":"tick""#)).count();
    assert!(ticks > 0);
    let mut rdr = csv::Reader::from_path(out.join("metrics.csv")).unwrap();
    let headers: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        headers,
        ["tick", "t", "min_pair_dist", "min_los_obs_dist", "max_edge_dist", "mean_solve_ms", "mean_constraint_ms"]
    );
    assert_eq!(rdr.records().count(), ticks);
}

#[test]
fn short_budget_is_a_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(dir.path(), "s.json", &small().to_json());
    let o = bin()
        .args(["run", "--scenario", &s, "--tick-budget", "3", "--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("budget"));
}

#[test]
fn single_trial_compare_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut tables = Vec::new();
    for _ in 0..2 {
        let o = bin()
            .args(["compare", "--trials", "1", "--seed", "3", "--targets", "2", "--out", dir.path().to_str().unwrap()])
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        tables.push(stdout(&o));
    }
    assert_eq!(tables[0], tables[1]);
    assert!(dir.path().join("compare.csv").exists());
}

#[test]
fn generated_scenarios_validate() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("g.json");
    let o = bin()
        .args(["generate", "desk", "--seed", "2", "--targets", "3", "--out", p.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = bin().args(["validate", "--scenario", p.to_str().unwrap()]).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}
