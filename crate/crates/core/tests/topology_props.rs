mod common;

use common::{grid_params, grid_world, lattice_min_relays, obstacles_of};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relaymesh::topology::{
    hop_count, mini_edge_rrt_star, mst_baseline, opt_tree, relay_count, Anchor, Budget,
    TopologyParams,
};
use relaymesh::{ConvexObstacle, Vec3, Workspace};

#[test]
fn grid_worlds_match_brute_force_relay_count() {
    let mut matched = 0;
    let mut report = Vec::new();
    for seed in 0..10 {
        let w = grid_world(seed);
        let terminals: Vec<Vec3> = std::iter::once(w.root).chain(w.targets.iter().copied()).collect();
        let Some(optimum) = lattice_min_relays(&terminals, &w.lattice, &w.boxes, w.d_c) else {
            panic!("seed {seed}: disconnected world");
        };
        assert!(optimum <= 3, "seed {seed}: world needs {optimum} relays");
        let obstacles = obstacles_of(&w.boxes);
        let (tree, _) = opt_tree(w.root, &w.targets, &obstacles, &grid_params(w.d_c, seed)).unwrap();
        assert!(tree.validate(&obstacles, w.d_c).is_empty());
        let ours = relay_count(&tree);
        report.push(format!("seed {seed}: ours {ours} optimum {optimum}"));
        if ours == optimum {
            matched += 1;
        }
    }
    assert!(matched >= 9, "{report:#?}");
}

fn random_3d_scene(seed: u64, targets: usize) -> (Vec3, Vec<Vec3>, Vec<ConvexObstacle>, TopologyParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ws = Workspace::new(Vec3::zeros(), Vec3::new(60.0, 60.0, 15.0));
    let mut obstacles = Vec::new();
    for _ in 0..6 {
        let lo = Vec3::new(rng.gen_range(10.0..45.0), rng.gen_range(10.0..45.0), 0.0);
        let hi = lo + Vec3::new(rng.gen_range(2.0..8.0), rng.gen_range(2.0..8.0), rng.gen_range(5.0..15.0));
        obstacles.push(ConvexObstacle::axis_box(lo, hi).unwrap());
    }
    let root = Vec3::new(2.0, 2.0, 2.0);
    let mut ts = Vec::new();
    while ts.len() < targets {
        let p = Vec3::new(rng.gen_range(5.0..58.0), rng.gen_range(5.0..58.0), rng.gen_range(1.0..14.0));
        if obstacles.iter().all(|o| !o.contains(&p)) {
            ts.push(p);
        }
    }
    let mut params = TopologyParams::new(18.0, ws);
    params.budget = Budget::samples(600);
    params.seed = seed;
    (root, ts, obstacles, params)
}

#[test]
fn every_edge_in_range_and_clear() {
    for seed in 0..5 {
        let (root, ts, obs, params) = random_3d_scene(seed, 5);
        let (tree, paths) = opt_tree(root, &ts, &obs, &params).unwrap();
        assert!(tree.validate(&obs, 18.0).is_empty(), "{:?}", tree.validate(&obs, 18.0));
        for (m, p) in paths.iter().enumerate() {
            assert_eq!(p.target, m);
            assert_eq!(*p.waypoints.last().unwrap(), ts[m]);
            assert_eq!(p.waypoints[0], root);
        }
        let mst = mst_baseline(root, &ts, &obs, &params).unwrap();
        assert!(mst.validate(&obs, 18.0).is_empty());
        assert_eq!(mst.target_nodes().len(), ts.len());
    }
}

#[test]
fn opt_tree_is_deterministic() {
    let (root, ts, obs, params) = random_3d_scene(42, 6);
    let a = opt_tree(root, &ts, &obs, &params).unwrap();
    let b = opt_tree(root, &ts, &obs, &params).unwrap();
    assert_eq!(
        serde_json::to_string(&a.0).unwrap(),
        serde_json::to_string(&b.0).unwrap()
    );
    assert_eq!(a.1, b.1);
}

#[test]
fn worker_count_does_not_change_the_tree() {
    let (root, ts, obs, params) = random_3d_scene(5, 4);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let a = one.install(|| opt_tree(root, &ts, &obs, &params).unwrap());
    let b = three.install(|| opt_tree(root, &ts, &obs, &params).unwrap());
    assert_eq!(a, b);
}

#[test]
fn relay_count_grows_sublinearly_with_targets() {
    // mean over seeds; a linear trend would double N going from 4 to 8
    let mean_n = |m: usize| {
        (0..6)
            .map(|s| {
                let (root, ts, obs, params) = random_3d_scene(100 + s, m);
                opt_tree(root, &ts, &obs, &params).unwrap().0.agent_count() as f64
            })
            .sum::<f64>()
            / 6.0
    };
    let n4 = mean_n(4);
    let n8 = mean_n(8);
    assert!(n8 < 2.0 * n4, "N(4) = {n4}, N(8) = {n8}");
}

#[test]
fn exhaustive_one_relay_check_at_200m() {
    // no single relay at the anchor reaches 200 m with d_c = 150, so 2 edges is optimal
    let anchor = Vec3::new(0.0, 0.0, 50.0);
    let target = Vec3::new(200.0, 0.0, 50.0);
    assert!((target - anchor).norm() > 150.0);
    let mut params = TopologyParams::new(
        150.0,
        Workspace::new(Vec3::new(-50.0, -100.0, 0.0), Vec3::new(250.0, 100.0, 100.0)),
    );
    params.budget = Budget::samples(300);
    let paths = mini_edge_rrt_star(target, &[Anchor::root(anchor)], &[], &params, 4);
    assert_eq!(paths[0].edge_count, 2);
}

#[test]
fn hop_count_of_chain_with_fork() {
    let (root, ts, obs, params) = random_3d_scene(3, 3);
    let (tree, paths) = opt_tree(root, &ts, &obs, &params).unwrap();
    let by_paths: usize = paths.iter().map(|p| p.nodes.len() - 1).sum();
    assert_eq!(hop_count(&tree), by_paths);
}
