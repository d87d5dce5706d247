//! Fixtures shared by the benchmarks.

use nalgebra::Matrix3;
use relaymesh::scenario::desk;
use relaymesh::sim::{ScenarioConfig, Simulation};
use relaymesh::solver::{rollout, AgentState, QcqpProblem, QuadObjective, StageBall, StageHalfspace};
use relaymesh::{Halfspace, Vec3};

/// Desk scene with `targets` goals and six obstacles.
pub fn desk_scene(targets: usize) -> ScenarioConfig {
    desk(1001, targets, 6)
}

/// Simulation advanced `ticks` steps into a desk run.
pub fn warm_sim(targets: usize, ticks: usize) -> Simulation {
    let mut sim = Simulation::new(desk_scene(targets)).expect("desk scene plans");
    for _ in 0..ticks {
        sim.step().expect("tick");
    }
    sim
}

/// One agent's problem with a corridor, a neighbour plane and a link ball,
/// sized like a desk tick.
pub fn agent_problem() -> QcqpProblem {
    let (k, h) = (10, 0.5);
    let x0 = AgentState {
        p: Vec3::new(10.0, 10.0, 5.0),
        v: Vec3::new(1.0, 0.4, 0.0),
    };
    let warm = vec![-x0.v / (k as f64 * h); k];
    let path: Vec<Vec3> = rollout(&x0, &warm, h).iter().map(|s| s.p).collect();
    let mut halfspaces = Vec::new();
    for (i, p) in path.iter().enumerate() {
        for a in [Vec3::new(0.0, -1.0, 0.0), Vec3::new(0.0, 0.0, 1.0), Vec3::new(-0.6, 0.0, -0.8)] {
            halfspaces.push(StageHalfspace {
                stage: i + 1,
                halfspace: Halfspace::new(a, a.dot(p) - 1.5).expect("unit normal"),
            });
        }
    }
    let balls = (1..=k)
        .map(|stage| StageBall {
            stage,
            center: x0.p,
            radius: 8.0,
        })
        .collect();
    let mut tracking = vec![(0.0, Vec3::zeros()); k];
    tracking[k - 1] = (10.0, Vec3::new(16.0, 9.0, 5.0));
    QcqpProblem {
        horizon: k,
        h,
        x0,
        objective: QuadObjective {
            tracking,
            smoothing: vec![1.0; k - 1],
        },
        halfspaces,
        balls,
        v_max: 1.8,
        a_max: 0.36,
        theta_v: Matrix3::identity(),
        theta_a: Matrix3::identity(),
        terminal_rest: true,
        warm_start: warm,
    }
}
