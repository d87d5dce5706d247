//! Per-agent convex program over the stacked control sequence.
//!
//! Positions and velocities are affine in the controls, so every constraint
//! becomes a linear map of `u` into an interval, a ball or a point.
//! [`solve`] runs an ADMM with closed-form projections and always returns a
//! plan at least as good as the warm start.

mod admm;

use nalgebra::{DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};

use crate::geometry::{Halfspace, Vec3};

pub use admm::AdmmSettings;

/// Position and velocity of one agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub p: Vec3,
    pub v: Vec3,
}

impl AgentState {
    pub fn at_rest(p: Vec3) -> Self {
        Self { p, v: Vec3::zeros() }
    }
}

/// One sampled double-integrator step.
pub fn step_dynamics(x: &AgentState, u: &Vec3, h: f64) -> AgentState {
    AgentState {
        p: x.p + x.v * h + u * (0.5 * h * h),
        v: x.v + u * h,
    }
}

/// States `x_1..x_K` produced by `controls` from `x0`.
pub fn rollout(x0: &AgentState, controls: &[Vec3], h: f64) -> Vec<AgentState> {
    let mut x = *x0;
    controls
        .iter()
        .map(|u| {
            x = step_dynamics(&x, u, h);
            x
        })
        .collect()
}

/// Halfspace on the position at `stage` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageHalfspace {
    pub stage: usize,
    pub halfspace: Halfspace,
}

/// `‖p_stage - center‖ <= radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageBall {
    pub stage: usize,
    pub center: Vec3,
    pub radius: f64,
}

/// `½ Σ w_k ‖p_k − r_k‖² + ½ Σ s_k ‖p_{k+1} − p_k‖²`.
///
/// `tracking[k-1]` weights stage `k`; `smoothing[k-1]` weights the step from
/// stage `k` to `k+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadObjective {
    pub tracking: Vec<(f64, Vec3)>,
    pub smoothing: Vec<f64>,
}

impl QuadObjective {
    pub fn evaluate(&self, positions: &[Vec3]) -> f64 {
        let track: f64 = self
            .tracking
            .iter()
            .zip(positions)
            .map(|((w, r), p)| 0.5 * w * (p - r).norm_squared())
            .sum();
        let smooth: f64 = self
            .smoothing
            .iter()
            .zip(positions.windows(2))
            .map(|(s, w)| 0.5 * s * (w[1] - w[0]).norm_squared())
            .sum();
        track + smooth
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcqpProblem {
    pub horizon: usize,
    pub h: f64,
    pub x0: AgentState,
    pub objective: QuadObjective,
    pub halfspaces: Vec<StageHalfspace>,
    pub balls: Vec<StageBall>,
    pub v_max: f64,
    pub a_max: f64,
    pub theta_v: Matrix3<f64>,
    pub theta_a: Matrix3<f64>,
    /// Require `v_K = 0`.
    pub terminal_rest: bool,
    /// Feasible control sequence, usually the shifted previous plan.
    pub warm_start: Vec<Vec3>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    FeasibleSuboptimal,
    /// The warm start itself violates the constraints.
    Fault,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcqpSolution {
    pub controls: Vec<Vec3>,
    pub states: Vec<AgentState>,
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: usize,
}

impl QcqpSolution {
    pub fn positions(&self) -> Vec<Vec3> {
        self.states.iter().map(|s| s.p).collect()
    }
}

/// Absolute tolerance of the final feasibility check.
pub const FEAS_TOL: f64 = 1e-7;

/// Coefficients of `u_j` in `p_k` (scaled identity blocks), `k = 1..=K`.
pub(crate) fn position_coeffs(k: usize, horizon: usize, h: f64) -> Vec<f64> {
    (0..horizon)
        .map(|j| if j < k { h * h * (k as f64 - j as f64 - 0.5) } else { 0.0 })
        .collect()
}

pub(crate) fn velocity_coeffs(k: usize, horizon: usize, h: f64) -> Vec<f64> {
    (0..horizon).map(|j| if j < k { h } else { 0.0 }).collect()
}

/// Free-motion part of `p_k`.
pub(crate) fn position_offset(x0: &AgentState, k: usize, h: f64) -> Vec3 {
    x0.p + x0.v * (k as f64 * h)
}

/// A block of constraint rows `lo <= A u <= hi`, `‖A u − c‖ <= r` or `A u = c`.
#[derive(Debug, Clone)]
pub(crate) enum RowSet {
    Interval { lo: f64, hi: f64 },
    Ball { center: Vec3, radius: f64 },
    Point { value: Vec3 },
}

impl RowSet {
    pub(crate) fn rows(&self) -> usize {
        match self {
            RowSet::Interval { .. } => 1,
            _ => 3,
        }
    }

    /// Amount by which `z` misses the set (0 when inside).
    pub(crate) fn violation(&self, z: &[f64]) -> f64 {
        match self {
            RowSet::Interval { lo, hi } => (lo - z[0]).max(z[0] - hi).max(0.0),
            RowSet::Ball { center, radius } => {
                ((Vec3::new(z[0], z[1], z[2]) - center).norm() - radius).max(0.0)
            }
            RowSet::Point { value } => (Vec3::new(z[0], z[1], z[2]) - value).amax(),
        }
    }

    pub(crate) fn project(&self, z: &mut [f64]) {
        match self {
            RowSet::Interval { lo, hi } => z[0] = z[0].clamp(*lo, *hi),
            RowSet::Ball { center, radius } => {
                let p = Vec3::new(z[0], z[1], z[2]);
                let d = p - center;
                let n = d.norm();
                if n > *radius {
                    let q = center + d * (radius / n);
                    z[..3].copy_from_slice(q.as_slice());
                }
            }
            RowSet::Point { value } => z[..3].copy_from_slice(value.as_slice()),
        }
    }

    pub(crate) fn shrunk(&self, eps: f64) -> RowSet {
        match self {
            RowSet::Interval { lo, hi } => {
                let (l, u) = (lo + eps, hi - eps);
                if l <= u {
                    RowSet::Interval { lo: l, hi: u }
                } else {
                    self.clone()
                }
            }
            RowSet::Ball { center, radius } => RowSet::Ball {
                center: *center,
                radius: (radius - eps).max(0.0),
            },
            RowSet::Point { .. } => self.clone(),
        }
    }
}

/// The problem in stacked form: `min ½ uᵀPu + qᵀu + r` with `A u ∈ sets`.
pub(crate) struct Stacked {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub r: f64,
    pub a: DMatrix<f64>,
    pub sets: Vec<RowSet>,
}

impl Stacked {
    pub(crate) fn objective(&self, u: &DVector<f64>) -> f64 {
        0.5 * u.dot(&(&self.p * u)) + self.q.dot(u) + self.r
    }

    pub(crate) fn max_violation(&self, u: &DVector<f64>) -> f64 {
        let z = &self.a * u;
        let mut row = 0;
        let mut worst = 0.0f64;
        for s in &self.sets {
            let n = s.rows();
            worst = worst.max(s.violation(&z.as_slice()[row..row + n]));
            row += n;
        }
        worst
    }
}

fn kron_block(a: &mut DMatrix<f64>, row: usize, coeffs: &[f64], m: &Matrix3<f64>) {
    for (j, c) in coeffs.iter().enumerate() {
        if *c != 0.0 {
            let blk = m * *c;
            a.fixed_view_mut::<3, 3>(row, 3 * j).copy_from(&blk);
        }
    }
}

impl QcqpProblem {
    pub(crate) fn stack(&self) -> Stacked {
        let kh = self.horizon;
        let n = 3 * kh;
        let h = self.h;

        // objective as P_s ⊗ I3
        let mut ps = DMatrix::<f64>::zeros(kh, kh);
        let mut q = DVector::<f64>::zeros(n);
        let mut r = 0.0;
        for (idx, (w, target)) in self.objective.tracking.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            let k = idx + 1;
            let c = DVector::from_vec(position_coeffs(k, kh, h));
            ps += &c * c.transpose() * *w;
            let off = position_offset(&self.x0, k, h) - target;
            for j in 0..kh {
                for d in 0..3 {
                    q[3 * j + d] += w * c[j] * off[d];
                }
            }
            r += 0.5 * w * off.norm_squared();
        }
        for (idx, s) in self.objective.smoothing.iter().enumerate() {
            if *s == 0.0 {
                continue;
            }
            let k = idx + 1;
            let c1 = position_coeffs(k + 1, kh, h);
            let c0 = position_coeffs(k, kh, h);
            let d = DVector::from_iterator(kh, c1.iter().zip(&c0).map(|(a, b)| a - b));
            ps += &d * d.transpose() * *s;
            let off = position_offset(&self.x0, k + 1, h) - position_offset(&self.x0, k, h);
            for j in 0..kh {
                for e in 0..3 {
                    q[3 * j + e] += s * d[j] * off[e];
                }
            }
            r += 0.5 * s * off.norm_squared();
        }
        let mut p = DMatrix::<f64>::zeros(n, n);
        for i in 0..kh {
            for j in 0..kh {
                for d in 0..3 {
                    p[(3 * i + d, 3 * j + d)] = ps[(i, j)];
                }
            }
        }

        let mut rows: Vec<(Vec<f64>, RowSet)> = Vec::new();
        let mut push_block = |coeffs: &[f64], m: &Matrix3<f64>, set: RowSet| {
            let mut a = DMatrix::<f64>::zeros(set.rows(), n);
            if set.rows() == 1 {
                let v = m.row(0);
                for (j, c) in coeffs.iter().enumerate() {
                    for d in 0..3 {
                        a[(0, 3 * j + d)] = c * v[d];
                    }
                }
            } else {
                kron_block(&mut a, 0, coeffs, m);
            }
            rows.push((a.as_slice().to_vec(), set));
        };

        for sh in &self.halfspaces {
            let k = sh.stage;
            let c = position_coeffs(k, kh, h);
            let hs = &sh.halfspace;
            let lo = hs.b - hs.a.dot(&position_offset(&self.x0, k, h));
            let mut m = Matrix3::zeros();
            m.set_row(0, &hs.a.transpose());
            push_block(&c, &m, RowSet::Interval { lo, hi: f64::INFINITY });
        }
        for b in &self.balls {
            let k = b.stage;
            let c = position_coeffs(k, kh, h);
            push_block(
                &c,
                &Matrix3::identity(),
                RowSet::Ball {
                    center: b.center - position_offset(&self.x0, k, h),
                    radius: b.radius,
                },
            );
        }
        for k in 1..=kh {
            let c = velocity_coeffs(k, kh, h);
            if k == kh && self.terminal_rest {
                push_block(&c, &Matrix3::identity(), RowSet::Point { value: -self.x0.v });
            } else {
                push_block(
                    &c,
                    &self.theta_v,
                    RowSet::Ball {
                        center: -(self.theta_v * self.x0.v),
                        radius: self.v_max,
                    },
                );
            }
        }
        for j in 0..kh {
            let mut c = vec![0.0; kh];
            c[j] = 1.0;
            push_block(
                &c,
                &self.theta_a,
                RowSet::Ball {
                    center: Vec3::zeros(),
                    radius: self.a_max,
                },
            );
        }

        let m: usize = rows.iter().map(|(_, s)| s.rows()).sum();
        let mut a = DMatrix::<f64>::zeros(m, n);
        let mut sets = Vec::with_capacity(rows.len());
        let mut row = 0;
        for (data, set) in rows {
            let nr = set.rows();
            let blk = DMatrix::from_column_slice(nr, n, &data);
            a.view_mut((row, 0), (nr, n)).copy_from(&blk);
            row += nr;
            sets.push(set);
        }
        Stacked { p, q, r, a, sets }
    }

    pub fn objective_of(&self, controls: &[Vec3]) -> f64 {
        let pos: Vec<Vec3> = rollout(&self.x0, controls, self.h).iter().map(|s| s.p).collect();
        self.objective.evaluate(&pos)
    }

    /// Largest constraint violation of a control sequence, evaluated directly
    /// on the rolled-out states.
    pub fn max_violation(&self, controls: &[Vec3]) -> f64 {
        let states = rollout(&self.x0, controls, self.h);
        let mut worst = 0.0f64;
        for sh in &self.halfspaces {
            worst = worst.max(-sh.halfspace.slack(&states[sh.stage - 1].p));
        }
        for b in &self.balls {
            worst = worst.max((states[b.stage - 1].p - b.center).norm() - b.radius);
        }
        for (k, s) in states.iter().enumerate() {
            if k + 1 == self.horizon && self.terminal_rest {
                worst = worst.max(s.v.amax());
            } else {
                worst = worst.max((self.theta_v * s.v).norm() - self.v_max);
            }
        }
        for u in controls {
            worst = worst.max((self.theta_a * u).norm() - self.a_max);
        }
        worst.max(0.0)
    }

    fn solution(&self, controls: Vec<Vec3>, status: SolveStatus, iterations: usize) -> QcqpSolution {
        let states = rollout(&self.x0, &controls, self.h);
        let objective = self.objective.evaluate(&states.iter().map(|s| s.p).collect::<Vec<_>>());
        QcqpSolution {
            controls,
            states,
            objective,
            status,
            iterations,
        }
    }
}

fn to_controls(u: &DVector<f64>) -> Vec<Vec3> {
    u.as_slice().chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
}

fn to_stacked(controls: &[Vec3]) -> DVector<f64> {
    DVector::from_iterator(controls.len() * 3, controls.iter().flat_map(|c| c.iter().copied()))
}

/// Solves with default settings.
pub fn solve(problem: &QcqpProblem) -> QcqpSolution {
    solve_with(problem, &AdmmSettings::default())
}

pub fn solve_with(problem: &QcqpProblem, settings: &AdmmSettings) -> QcqpSolution {
    assert_eq!(problem.warm_start.len(), problem.horizon, "warm start length");
    let warm = problem.warm_start.clone();
    if problem.max_violation(&warm) > FEAS_TOL {
        log::warn!("warm start violates constraints by {}", problem.max_violation(&warm));
        return problem.solution(warm, SolveStatus::Fault, 0);
    }
    let stacked = problem.stack();
    let u_warm = to_stacked(&warm);
    let f_warm = stacked.objective(&u_warm);
    let out = admm::run(&stacked, &u_warm, settings);

    let accept = |u: &DVector<f64>| {
        let c = to_controls(u);
        problem.max_violation(&c) <= FEAS_TOL && stacked.objective(u) <= f_warm + 1e-12 * (1.0 + f_warm.abs())
    };
    if out.converged && accept(&out.u) {
        return problem.solution(to_controls(&out.u), SolveStatus::Optimal, out.iterations);
    }
    // blend toward the warm start until feasible
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let u = &u_warm + (&out.u - &u_warm) * mid;
        if accept(&u) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let u = &u_warm + (&out.u - &u_warm) * lo;
    let status = if out.converged && lo > 1.0 - 1e-9 {
        SolveStatus::Optimal
    } else {
        SolveStatus::FeasibleSuboptimal
    };
    problem.solution(to_controls(&u), status, out.iterations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_input_is_uniform_motion() {
        let x = AgentState {
            p: Vec3::new(1.0, 2.0, 3.0),
            v: Vec3::new(0.5, 0.0, -1.0),
        };
        let y = step_dynamics(&x, &Vec3::zeros(), 0.5);
        assert_eq!(y.p, x.p + x.v * 0.5);
        assert_eq!(y.v, x.v);
    }

    #[test]
    fn unit_push_from_rest() {
        let y = step_dynamics(&AgentState::at_rest(Vec3::zeros()), &Vec3::new(1.0, 0.0, 0.0), 0.5);
        assert_relative_eq!(y.p, Vec3::new(0.125, 0.0, 0.0), epsilon = 1e-15);
        assert_relative_eq!(y.v, Vec3::new(0.5, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn two_steps_match_matrix_product() {
        let h = 0.5;
        let x = AgentState {
            p: Vec3::new(0.3, -0.2, 1.0),
            v: Vec3::new(1.0, 0.5, 0.0),
        };
        let (u0, u1) = (Vec3::new(0.2, 0.0, -0.1), Vec3::new(-0.3, 0.4, 0.0));
        let y = step_dynamics(&step_dynamics(&x, &u0, h), &u1, h);
        // A² x + A B u0 + B u1 with A = [I hI; 0 I], B = [h²/2 I; h I]
        let p = x.p + x.v * (2.0 * h) + u0 * (h * h / 2.0 + h * h) + u1 * (h * h / 2.0);
        let v = x.v + (u0 + u1) * h;
        assert_relative_eq!(y.p, p, epsilon = 1e-14);
        assert_relative_eq!(y.v, v, epsilon = 1e-14);
    }

    #[test]
    fn coefficients_reproduce_rollout() {
        let h = 0.5;
        let x0 = AgentState {
            p: Vec3::new(1.0, 0.0, 0.0),
            v: Vec3::new(0.0, 1.0, 0.0),
        };
        let us: Vec<Vec3> = (0..4).map(|i| Vec3::new(i as f64, -1.0, 0.5)).collect();
        let states = rollout(&x0, &us, h);
        for k in 1..=4 {
            let c = position_coeffs(k, 4, h);
            let p = position_offset(&x0, k, h) + us.iter().zip(&c).map(|(u, c)| u * *c).sum::<Vec3>();
            assert_relative_eq!(p, states[k - 1].p, epsilon = 1e-12);
        }
    }
}
