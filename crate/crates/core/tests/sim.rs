use relaymesh::geometry::{ConvexObstacle, Vec3, Workspace};
use relaymesh::planner::ConnectorTracking;
use relaymesh::scenario::desk;
use relaymesh::sim::{run, CommandScript, Outcome, RunLog, ScenarioConfig, ScenarioParams, Simulation, SteerCommand, SCHEMA_VERSION};

fn block() -> ConvexObstacle {
    ConvexObstacle::axis_box(Vec3::new(10.0, 14.0, 0.0), Vec3::new(14.0, 18.0, 8.0)).unwrap()
}

fn room(targets: Vec<Vec3>) -> ScenarioConfig {
    ScenarioConfig {
        schema_version: SCHEMA_VERSION,
        name: "room".into(),
        workspace: Workspace::new(Vec3::zeros(), Vec3::new(30.0, 30.0, 10.0)),
        obstacles: vec![block()],
        ground_station: Vec3::new(3.0, 3.0, 3.0),
        targets,
        params: ScenarioParams {
            tick_budget: 300,
            ..ScenarioParams::default()
        },
    }
}

/// Dense sampling along `a -> b` against every obstacle.
fn sampled_clear(a: Vec3, b: Vec3, obstacles: &[ConvexObstacle]) -> bool {
    (0..=400).all(|i| {
        let p = a + (b - a) * (i as f64 / 400.0);
        obstacles.iter().all(|o| !o.contains(&p))
    })
}

fn breaches(log: &RunLog) -> usize {
    log.records.iter().map(|r| r.monitors.breaches.len()).sum()
}

#[test]
fn initial_formation_is_spaced_free_and_mutually_visible() {
    let cfg = desk(1002, 5, 6);
    let sim = Simulation::new(cfg.clone()).unwrap();
    let pts: Vec<Vec3> = std::iter::once(cfg.ground_station)
        .chain(sim.states().iter().map(|s| s.p))
        .collect();
    for (i, p) in pts.iter().enumerate().skip(1) {
        assert!(cfg.workspace.contains(p));
        for q in &pts[..i] {
            assert!((p - q).norm() >= 2.0 * cfg.params.r_a);
            assert!(sampled_clear(*p, *q, &cfg.obstacles));
        }
    }
}

#[test]
fn same_scenario_same_hash() {
    let cfg = desk(1000, 3, 4);
    let a = run(&cfg, &CommandScript::default()).unwrap();
    let b = run(&cfg, &CommandScript::default()).unwrap();
    assert_eq!(a.log.hash(), b.log.hash());
    assert!(a.outcome().is_success());
}

#[test]
fn moved_target_is_reached_with_monitors_clean() {
    let cfg = room(vec![Vec3::new(11.0, 4.0, 3.0)]);
    let goal = Vec3::new(11.0, 9.0, 3.0);
    let mut script = CommandScript::default();
    script.push(10, SteerCommand::MoveTarget { target: 0, position: goal });
    let r = run(&cfg, &script).unwrap();
    assert!(r.rejected.is_empty());
    assert!(matches!(r.outcome(), Outcome::Terminated { .. }), "{:?}", r.outcome());
    assert_eq!(breaches(&r.log), 0);
    let last = r.log.records.last().unwrap();
    assert!((last.states[0].p - goal).norm() <= cfg.params.tol_p);
}

#[test]
fn target_inside_obstacle_is_rejected_without_effect() {
    let cfg = room(vec![Vec3::new(11.0, 4.0, 3.0)]);
    let mut script = CommandScript::default();
    script.push(
        5,
        SteerCommand::MoveTarget {
            target: 0,
            position: Vec3::new(12.0, 16.0, 4.0),
        },
    );
    let r = run(&cfg, &script).unwrap();
    assert_eq!(r.rejected.len(), 1);
    assert!(r.rejected[0].2.contains("obstacle"), "{}", r.rejected[0].2);
    let clean = run(&cfg, &CommandScript::default()).unwrap();
    assert_eq!(r.log.hash(), clean.log.hash());
}

#[test]
fn ndjson_round_trip_keeps_the_hash() {
    let r = run(&room(vec![Vec3::new(11.0, 4.0, 3.0)]), &CommandScript::default()).unwrap();
    let mut buf = Vec::new();
    r.log.write_ndjson(&mut buf).unwrap();
    let back = RunLog::read_ndjson(buf.as_slice()).unwrap();
    assert_eq!(back, r.log);
    assert_eq!(back.hash(), r.log.hash());
}

#[test]
fn metrics_have_one_row_per_tick() {
    let r = run(&room(vec![Vec3::new(11.0, 4.0, 3.0)]), &CommandScript::default()).unwrap();
    assert_eq!(r.metrics.rows.len(), r.log.records.len());
    let mut buf = Vec::new();
    r.metrics.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), r.log.records.len() + 1);
}

#[test]
fn lone_searcher_closes_in_on_its_target() {
    let target = Vec3::new(11.0, 4.0, 3.0);
    let r = run(&room(vec![target]), &CommandScript::default()).unwrap();
    assert!(r.outcome().is_success());
    let d: Vec<f64> = r.log.records.iter().map(|x| (x.states[0].p - target).norm()).collect();
    for w in d.windows(2) {
        assert!(w[1] <= w[0] + 1e-6, "{w:?}");
    }
}

#[test]
fn relay_pair_stays_linked() {
    let cfg = room(vec![Vec3::new(28.0, 20.0, 5.0)]);
    let r = run(&cfg, &CommandScript::default()).unwrap();
    assert_eq!(r.log.header.roles.len(), 2);
    assert!(r.outcome().is_success(), "{:?}", r.outcome());
    for x in &r.log.records {
        assert!(x.monitors.max_edge_dist <= cfg.params.d_c);
        assert!(x.monitors.min_pair_dist >= 2.0 * cfg.params.r_a);
    }
}

#[test]
fn neighbour_tracking_connectors_keep_the_links() {
    let mut cfg = room(vec![Vec3::new(28.0, 20.0, 5.0)]);
    cfg.params.connector_tracking = ConnectorTracking::Neighbours;
    let r = run(&cfg, &CommandScript::default()).unwrap();
    assert_eq!(breaches(&r.log), 0);
    assert!(!matches!(r.outcome(), Outcome::Fault { .. }), "{:?}", r.outcome());
}
