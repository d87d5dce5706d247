use serde::{Deserialize, Serialize};

use crate::geometry::{point_obstacle_distance, segment_obstacle_distance, ConvexObstacle, Segment, Vec3};
use crate::solver::AgentState;

/// Arc subsamples per step, endpoints included.
pub const SUBSAMPLES: usize = 10;

/// Worst values seen over one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorValues {
    pub min_pair_dist: f64,
    pub min_obstacle_dist: f64,
    pub min_los_obs_dist: f64,
    pub max_edge_dist: f64,
    pub breaches: Vec<String>,
}

impl MonitorValues {
    pub fn ok(&self) -> bool {
        self.breaches.is_empty()
    }
}

/// Limits the monitors enforce.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorLimits {
    pub r_a: f64,
    pub d_c: f64,
}

/// Position along the exact double-integrator arc at fraction `s` of a step.
pub fn arc_point(x: &AgentState, u: &Vec3, h: f64, s: f64) -> Vec3 {
    let t = s * h;
    x.p + x.v * t + u * (0.5 * t * t)
}

/// Checks one step of every agent at `SUBSAMPLES + 1` points along the arcs.
///
/// `edges` holds `(a, b)` agent pairs, `b == None` meaning the ground station.
pub fn check_step(
    start: &[AgentState],
    controls: &[Vec3],
    h: f64,
    edges: &[(usize, Option<usize>)],
    ground: Vec3,
    obstacles: &[ConvexObstacle],
    limits: MonitorLimits,
) -> MonitorValues {
    let mut v = MonitorValues {
        min_pair_dist: f64::MAX,
        min_obstacle_dist: f64::MAX,
        min_los_obs_dist: f64::MAX,
        max_edge_dist: 0.0,
        breaches: Vec::new(),
    };
    let tol = 1e-9;
    for j in 0..=SUBSAMPLES {
        let s = j as f64 / SUBSAMPLES as f64;
        let pts: Vec<Vec3> = start.iter().zip(controls).map(|(x, u)| arc_point(x, u, h, s)).collect();
        for a in 0..pts.len() {
            for b in a + 1..pts.len() {
                let d = (pts[a] - pts[b]).norm();
                v.min_pair_dist = v.min_pair_dist.min(d);
                if d < 2.0 * limits.r_a - tol {
                    v.breaches.push(format!("s={s:.1}: agents {a} and {b} are {d:.4} apart"));
                }
            }
            for (o, obs) in obstacles.iter().enumerate() {
                let d = point_obstacle_distance(&pts[a], obs) - limits.r_a;
                v.min_obstacle_dist = v.min_obstacle_dist.min(d);
                if d < -tol {
                    v.breaches.push(format!("s={s:.1}: agent {a} overlaps obstacle {o} by {:.4}", -d));
                }
            }
        }
        for &(a, b) in edges {
            let q = b.map_or(ground, |b| pts[b]);
            let len = (pts[a] - q).norm();
            v.max_edge_dist = v.max_edge_dist.max(len);
            if len > limits.d_c + tol {
                v.breaches.push(format!("s={s:.1}: edge {a}-{b:?} is {len:.4} long"));
            }
            let seg = Segment::new(pts[a], q);
            for (o, obs) in obstacles.iter().enumerate() {
                let d = segment_obstacle_distance(&seg, obs);
                v.min_los_obs_dist = v.min_los_obs_dist.min(d);
                if d <= 0.0 {
                    v.breaches.push(format!("s={s:.1}: edge {a}-{b:?} blocked by obstacle {o}"));
                }
            }
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn limits() -> MonitorLimits {
        MonitorLimits { r_a: 0.25, d_c: 18.0 }
    }

    #[test]
    fn arc_ends_at_the_next_state() {
        let x = AgentState {
            p: Vec3::new(1.0, 0.0, 0.0),
            v: Vec3::new(0.0, 1.0, 0.0),
        };
        let u = Vec3::new(0.3, 0.0, -0.2);
        let y = crate::solver::step_dynamics(&x, &u, 0.5);
        assert!((arc_point(&x, &u, 0.5, 1.0) - y.p).norm() < 1e-15);
    }

    #[test]
    fn crossing_agents_are_caught_between_samples() {
        // endpoints far apart, the arcs cross at s = 0.5
        let a = AgentState {
            p: Vec3::new(-1.0, 0.0, 0.0),
            v: Vec3::new(4.0, 0.0, 0.0),
        };
        let b = AgentState {
            p: Vec3::new(1.0, 0.0, 0.0),
            v: Vec3::new(-4.0, 0.0, 0.0),
        };
        let m = check_step(&[a, b], &[Vec3::zeros(); 2], 0.5, &[], Vec3::zeros(), &[], limits());
        assert!(!m.ok());
        assert!(m.min_pair_dist < 1e-9);
    }

    #[test]
    fn blocked_edge_is_a_breach() {
        let wall = ConvexObstacle::axis_box(Vec3::new(1.0, -1.0, -1.0), Vec3::new(2.0, 1.0, 1.0)).unwrap();
        let a = AgentState::at_rest(Vec3::new(4.0, 0.0, 0.0));
        let m = check_step(&[a], &[Vec3::zeros()], 0.5, &[(0, None)], Vec3::zeros(), &[wall], limits());
        assert!(!m.ok());
        assert_eq!(m.min_los_obs_dist, 0.0);
    }

    #[test]
    fn quiet_pair_passes() {
        let a = AgentState::at_rest(Vec3::zeros());
        let b = AgentState::at_rest(Vec3::new(5.0, 0.0, 0.0));
        let m = check_step(&[a, b], &[Vec3::zeros(); 2], 0.5, &[(1, Some(0)), (0, None)], Vec3::new(0.0, 3.0, 0.0), &[], limits());
        assert!(m.ok());
        assert!((m.min_pair_dist - 5.0).abs() < 1e-12);
        assert!((m.max_edge_dist - 5.0).abs() < 1e-12);
    }
}
