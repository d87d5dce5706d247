//! Per-tick planning for one agent: message exchange, constraint assembly,
//! objective construction and the QCQP solve.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{
    build_corridor, connectivity_center, los_safe_zone, los_waypoints, mbvc_halfspace,
    min_buffer, update_intermediate_target, Ball, CenterCase, ConstraintCounts, ConstraintError,
    ConstraintSet, PredeterminedTrajectory,
};
use crate::geometry::{hulls_disjoint, ConvexObstacle, GeometryError, Halfspace, Vec3, Workspace};
use crate::solver::{
    solve_with, AdmmSettings, AgentState, QcqpProblem, QuadObjective, SolveStatus, StageBall,
    StageHalfspace,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("tick {tick}: agent {agent} is missing the message of {missing}")]
    Sync { tick: u64, agent: usize, missing: String },
    #[error("agent {agent}: {source}")]
    Constraint {
        agent: usize,
        #[source]
        source: ConstraintError,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// How connectors choose where to go.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectorTracking {
    /// Follow the tree path to the connector's own node, like a searcher.
    #[default]
    Path,
    /// Track the weighted mean of the tree neighbours' trajectories.
    Neighbours,
}

/// Planning parameters shared by every agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerParams {
    pub r_a: f64,
    pub d_c: f64,
    pub d_m: f64,
    pub d_w: f64,
    pub v_max: f64,
    pub a_max: f64,
    pub h: f64,
    pub horizon: usize,
    pub q_terminal: f64,
    pub q_smooth: f64,
    pub alpha_c: f64,
    pub alpha_p: f64,
    /// Pull of a connector toward its own tree node under neighbour tracking.
    pub alpha_n: f64,
    pub connector_tracking: ConnectorTracking,
    pub tol_p: f64,
    pub tol_v: f64,
    pub admm: AdmmSettings,
}

impl PlannerParams {
    /// Largest gap between a double-integrator arc and its chord over one step.
    pub fn bulge(&self) -> f64 {
        self.h * self.h * self.a_max / 8.0
    }

    /// Extra clearance added to emitted planes.
    pub fn margin(&self) -> f64 {
        0.05 * self.d_m
    }

    pub fn ball_radius(&self) -> f64 {
        self.d_c / 2.0 - self.bulge()
    }

    /// Obstacle growth for the flight corridor.
    pub fn corridor_inflation(&self) -> f64 {
        self.r_a + self.bulge()
    }

    /// Obstacle growth the spanning tree is planned against.
    /// Obstacle clearance of tree edges.
    pub fn tree_clearance(&self) -> f64 {
        self.corridor_inflation().max(self.d_m) + 2.0 * self.margin() + 0.5 * self.separation()
    }

    /// Sampled-time separation enforced between agents.
    pub fn separation(&self) -> f64 {
        min_buffer(self.corridor_inflation(), self.h, self.v_max)
    }

    pub fn reach(&self) -> f64 {
        self.horizon as f64 * self.h * self.v_max
    }

    pub fn obstacle_cull(&self) -> f64 {
        2.0 * (self.d_c + self.reach())
    }

    /// Agents farther apart than this cannot meet within one horizon.
    pub fn mbvc_cull(&self) -> f64 {
        2.0 * self.reach() + self.separation()
    }

    pub fn check(&self) -> Result<(), String> {
        let pos = [
            ("r_a", self.r_a),
            ("d_c", self.d_c),
            ("d_m", self.d_m),
            ("d_w", self.d_w),
            ("v_max", self.v_max),
            ("a_max", self.a_max),
            ("h", self.h),
            ("q_terminal", self.q_terminal),
            ("tol_p", self.tol_p),
            ("tol_v", self.tol_v),
        ];
        for (name, v) in pos {
            if !(v > 0.0) || !v.is_finite() {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("q_smooth", self.q_smooth), ("alpha_c", self.alpha_c), ("alpha_p", self.alpha_p), ("alpha_n", self.alpha_n)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(format!("{name} must be non-negative, got {v}"));
            }
        }
        if self.horizon < 2 {
            return Err(format!("horizon must be at least 2, got {}", self.horizon));
        }
        if self.d_w >= self.d_c {
            return Err(format!("d_w ({}) must be below d_c ({})", self.d_w, self.d_c));
        }
        if self.d_w > self.d_c - 2.0 * self.bulge() {
            return Err(format!(
                "d_w ({}) must not exceed d_c - h^2 a_max / 4 ({})",
                self.d_w,
                self.d_c - 2.0 * self.bulge()
            ));
        }
        if self.bulge() >= self.d_m {
            return Err("d_m must exceed h^2 a_max / 8".into());
        }
        Ok(())
    }
}

impl Default for PlannerParams {
    /// Desk-scale values.
    fn default() -> Self {
        Self {
            r_a: 0.25,
            d_c: 18.0,
            d_m: 0.4,
            d_w: 17.0,
            v_max: 1.8,
            a_max: 0.36,
            h: 0.5,
            horizon: 10,
            q_terminal: 10.0,
            q_smooth: 1.0,
            alpha_c: 3.0,
            alpha_p: 1.0,
            alpha_n: 1.0,
            connector_tracking: ConnectorTracking::Path,
            tol_p: 0.1,
            tol_v: 0.05,
            admm: AdmmSettings::default(),
        }
    }
}

/// Static geometry every agent plans against.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub workspace: Workspace,
    pub ground: Vec3,
    pub obstacles: Vec<ConvexObstacle>,
    /// Grown by the corridor inflation.
    pub corridor: Vec<ConvexObstacle>,
    /// Grown by `d_m`.
    pub los: Vec<ConvexObstacle>,
}

impl World {
    pub fn new(
        workspace: Workspace,
        ground: Vec3,
        obstacles: Vec<ConvexObstacle>,
        params: &PlannerParams,
    ) -> Result<Self, GeometryError> {
        let corridor = obstacles
            .iter()
            .map(|o| o.inflated(params.corridor_inflation()))
            .collect::<Result<_, _>>()?;
        let los = obstacles
            .iter()
            .map(|o| o.inflated(params.d_m))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            workspace,
            ground,
            obstacles,
            corridor,
            los,
        })
    }

    /// Workspace faces inset by `r_a`, skipping axes too thin to hold an agent.
    pub fn bounds(&self, r_a: f64) -> Vec<Halfspace> {
        let mut out = Vec::new();
        for d in 0..3 {
            let (lo, hi) = (self.workspace.min[d], self.workspace.max[d]);
            if hi - lo <= 2.0 * r_a {
                continue;
            }
            let mut e = Vec3::zeros();
            e[d] = 1.0;
            out.push(Halfspace { a: e, b: lo + r_a });
            out.push(Halfspace { a: -e, b: -(hi - r_a) });
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RoleKind {
    Searcher { target: usize, path: Vec<Vec3> },
    /// `path` runs from the root to the connector's tree node.
    Connector { path: Vec<Vec3> },
}

/// Position of an agent in the tree. `parent == None` means the ground station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRole {
    pub id: usize,
    pub node: usize,
    pub kind: RoleKind,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

impl AgentRole {
    pub fn is_searcher(&self) -> bool {
        matches!(self.kind, RoleKind::Searcher { .. })
    }
}

/// Live state of one agent between ticks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub role: AgentRole,
    pub state: AgentState,
    /// Controls of the last committed plan.
    pub controls: Vec<Vec3>,
    pub predetermined: PredeterminedTrajectory,
    /// Index of the last path waypoint the agent has committed to.
    pub progress: usize,
    /// Intermediate target; `None` until the first update and for agents
    /// that do not follow their path.
    pub goal: Option<Vec3>,
}

impl Agent {
    pub fn at_rest(role: AgentRole, p: Vec3, horizon: usize) -> Self {
        Self {
            predetermined: PredeterminedTrajectory::initial(role.id, p, horizon),
            role,
            state: AgentState::at_rest(p),
            controls: vec![Vec3::zeros(); horizon],
            progress: 0,
            goal: None,
        }
    }

    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    /// `p̄_{K+1}`: the intermediate target, or `p̄_K` when there is none.
    pub fn extension(&self) -> Vec3 {
        self.goal
            .unwrap_or_else(|| *self.predetermined.positions.last().expect("horizon >= 1"))
    }

    /// Root-to-node reference path.
    pub fn path(&self) -> &[Vec3] {
        match &self.role.kind {
            RoleKind::Searcher { path, .. } | RoleKind::Connector { path } => path,
        }
    }

    pub fn final_target(&self) -> Option<Vec3> {
        match &self.role.kind {
            RoleKind::Searcher { path, .. } => path.last().copied(),
            RoleKind::Connector { .. } => None,
        }
    }

    /// Moves the intermediate target as far along the path as the plan tail
    /// allows. Past a waypoint the parent at `parent` could not keep in sight
    /// while the agent heads there, the target stops partway along the edge.
    pub fn advance_intermediate_target(&mut self, world: &World, params: &PlannerParams, parent: Vec3) {
        if !self.role.is_searcher() && params.connector_tracking == ConnectorTracking::Neighbours {
            return;
        }
        let path = self.path();
        let tail = *self.predetermined.positions.last().expect("horizon >= 1");
        let best = update_intermediate_target(path, self.progress, &tail, &world.corridor, params.margin());
        let sweep_clear = |w: Vec3| {
            let tri = [tail, w, parent];
            world.los.iter().all(|o| hulls_disjoint(&tri, o.vertices(), 0.0))
        };
        let mut next = self.progress;
        let mut goal = path[next];
        for w in path.iter().take(best + 1).skip(next + 1) {
            if !sweep_clear(*w) {
                let (from, to) = (path[next], *w);
                if sweep_clear(from) {
                    let (mut lo, mut hi) = (0.0, 1.0);
                    for _ in 0..LEAD_STEPS {
                        let mid = 0.5 * (lo + hi);
                        if sweep_clear(from + (to - from) * mid) {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    goal = from + (to - from) * lo;
                }
                break;
            }
            next += 1;
            goal = *w;
        }
        let reachable = world
            .corridor
            .iter()
            .all(|o| hulls_disjoint(&[tail, goal], o.vertices(), params.margin()));
        if reachable || self.goal.is_none() {
            self.progress = next;
            self.goal = Some(goal);
        }
    }

    /// Controls reproducing the predetermined trajectory from the current state.
    pub fn warm_start(&self) -> Vec<Vec3> {
        let mut w: Vec<Vec3> = self.controls[1..].to_vec();
        w.push(Vec3::zeros());
        w
    }
}

/// Bisection steps for a target partway along an edge.
const LEAD_STEPS: usize = 12;

/// `(p₂ … p_K, p_K)`.
pub fn shift_plan(plan: &[Vec3]) -> Vec<Vec3> {
    let mut out: Vec<Vec3> = plan.iter().skip(1).copied().collect();
    if let Some(last) = plan.last() {
        out.push(*last);
    }
    out
}

/// `½ Q_K ‖p_K − target‖² + ½ Σ Q_k ‖p_{k+1} − p_k‖²`.
pub fn searcher_objective(target: Vec3, horizon: usize, q_terminal: f64, q_smooth: f64) -> QuadObjective {
    let mut tracking = vec![(0.0, Vec3::zeros()); horizon];
    tracking[horizon - 1] = (q_terminal, target);
    QuadObjective {
        tracking,
        smoothing: vec![q_smooth; horizon - 1],
    }
}

/// Weighted mean of child and parent points, stage by stage. An optional
/// `(point, weight)` anchor joins the mean at every stage.
pub fn tracking_points(
    children: &[&[Vec3]],
    parents: &[&[Vec3]],
    alpha_c: f64,
    alpha_p: f64,
    anchor: Option<(Vec3, f64)>,
) -> Vec<Vec3> {
    let horizon = children.iter().chain(parents).map(|t| t.len()).min().unwrap_or(0);
    let (a, alpha_n) = anchor.unwrap_or((Vec3::zeros(), 0.0));
    let total = alpha_c * children.len() as f64 + alpha_p * parents.len() as f64 + alpha_n;
    (0..horizon)
        .map(|k| {
            let sc: Vec3 = children.iter().map(|t| t[k]).sum();
            let sp: Vec3 = parents.iter().map(|t| t[k]).sum();
            (sc * alpha_c + sp * alpha_p + a * alpha_n) / total
        })
        .collect()
}

/// `½ Σ ‖p_k − p̃_k‖²`.
pub fn connector_objective(
    children: &[&[Vec3]],
    parents: &[&[Vec3]],
    alpha_c: f64,
    alpha_p: f64,
    anchor: Option<(Vec3, f64)>,
) -> QuadObjective {
    let pts = tracking_points(children, parents, alpha_c, alpha_p, anchor);
    QuadObjective {
        smoothing: vec![0.0; pts.len().saturating_sub(1)],
        tracking: pts.into_iter().map(|p| (1.0, p)).collect(),
    }
}

/// True iff every searcher sits within `tol_p` of its final target and is
/// slower than `tol_v`.
pub fn termination_check(agents: &[Agent], tol_p: f64, tol_v: f64) -> bool {
    agents.iter().all(|a| match a.final_target() {
        Some(t) => (a.state.p - t).norm() <= tol_p && a.state.v.norm() < tol_v,
        None => true,
    })
}

/// Constraints shared by the two ends of one tree edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeBundle {
    /// `None` is the ground station.
    pub parent: Option<usize>,
    pub child: usize,
    /// Ball centers for stages `1..=K`.
    pub centers: Vec<Vec3>,
    pub cases: Vec<CenterCase>,
    pub radius: f64,
    /// Safe-zone halfspaces for steps `0..=K`.
    pub zones: Vec<Vec<Halfspace>>,
    pub etas: Vec<f64>,
}

/// What one agent broadcasts at the start of a tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickMessage {
    pub sender: usize,
    pub tick: u64,
    pub position: Vec3,
    pub trajectory: PredeterminedTrajectory,
    pub extension: Vec3,
    #[serde(default)]
    pub bundles: Vec<EdgeBundle>,
}

impl TickMessage {
    pub fn from_agent(agent: &Agent, tick: u64) -> Self {
        Self {
            sender: agent.role.id,
            tick,
            position: agent.state.p,
            trajectory: agent.predetermined.clone(),
            extension: agent.extension(),
            bundles: Vec::new(),
        }
    }

    /// `[p_0, p̄_1, …, p̄_K, p̄_{K+1}]`.
    pub fn extended(&self) -> Vec<Vec3> {
        let mut out = Vec::with_capacity(self.trajectory.positions.len() + 2);
        out.push(self.position);
        out.extend_from_slice(&self.trajectory.positions);
        out.push(self.extension);
        out
    }
}

/// Builds ψ for the edge between `parent_ext` and `child_ext`
/// (both in the `[p_0, p̄_1, …, p̄_{K+1}]` layout).
pub fn edge_bundle(
    parent: Option<usize>,
    child: usize,
    parent_ext: &[Vec3],
    child_ext: &[Vec3],
    world: &World,
    params: &PlannerParams,
) -> Result<EdgeBundle, PlanError> {
    let k_max = params.horizon;
    let err = |source| PlanError::Constraint { agent: child, source };
    let mut centers = Vec::with_capacity(k_max);
    let mut cases = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let c = connectivity_center(&parent_ext[k], &child_ext[k], &parent_ext[k + 1], &child_ext[k + 1], params.d_w);
        centers.push(c.center);
        cases.push(c.case);
    }
    let mut zones = Vec::with_capacity(k_max + 1);
    let mut etas = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let (pi, pj) = (parent_ext[k], child_ext[k]);
        let (qi, qj, eta) = los_waypoints(&pi, &pj, &parent_ext[k + 1], &child_ext[k + 1], &world.los, params.margin()).map_err(err)?;
        let zone = los_safe_zone(&[pi, pj, qi, qj], &world.los, Some(params.obstacle_cull()), params.margin()).map_err(err)?;
        zones.push(zone);
        etas.push(eta);
    }
    Ok(EdgeBundle {
        parent,
        child,
        centers,
        cases,
        radius: params.ball_radius(),
        zones,
        etas,
    })
}

/// Ground-station stand-in in the extended layout.
pub fn ground_extended(world: &World, horizon: usize) -> Vec<Vec3> {
    vec![world.ground; horizon + 2]
}

/// Bundles an agent owns: its child edges, plus its own edge when the parent
/// is the ground station.
pub fn owned_bundles(
    agent: &Agent,
    inbox: &BTreeMap<usize, TickMessage>,
    world: &World,
    params: &PlannerParams,
    tick: u64,
) -> Result<Vec<EdgeBundle>, PlanError> {
    let id = agent.role.id;
    let me = inbox.get(&id).ok_or_else(|| missing(tick, id, id))?.extended();
    let mut out = Vec::new();
    if agent.role.parent.is_none() {
        out.push(edge_bundle(None, id, &ground_extended(world, params.horizon), &me, world, params)?);
    }
    for &c in &agent.role.children {
        let other = inbox.get(&c).ok_or_else(|| missing(tick, id, c))?.extended();
        out.push(edge_bundle(Some(id), c, &me, &other, world, params)?);
    }
    Ok(out)
}

fn missing(tick: u64, agent: usize, who: usize) -> PlanError {
    PlanError::Sync {
        tick,
        agent,
        missing: format!("agent {who}"),
    }
}

/// One agent's result for one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOutcome {
    pub agent: usize,
    pub controls: Vec<Vec3>,
    pub states: Vec<AgentState>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub objective: f64,
    pub counts: ConstraintCounts,
    /// Violation of the new constraints by the predetermined trajectory.
    pub warm_violation: f64,
    pub constraint_ms: f64,
    pub solve_ms: f64,
}

/// Assembles this agent's constraint set and objective from the inbox.
pub fn build_problem(
    agent: &Agent,
    inbox: &BTreeMap<usize, TickMessage>,
    world: &World,
    params: &PlannerParams,
    tick: u64,
) -> Result<(ConstraintSet, QuadObjective), PlanError> {
    let id = agent.role.id;
    let k_max = params.horizon;
    let me = inbox.get(&id).ok_or_else(|| missing(tick, id, id))?;
    let ext = me.extended();
    let mut set = ConstraintSet::new(id, tick, k_max);
    let err = |source| PlanError::Constraint { agent: id, source };

    let pad = params.corridor_inflation();
    for (j, msg) in inbox {
        if *j == id || (msg.position - agent.state.p).norm() > params.mbvc_cull() {
            continue;
        }
        let other = msg.extended();
        for k in 1..=k_max {
            let h = mbvc_halfspace(&ext[k], &other[k], pad, params.h, params.v_max)
                .map_err(|_| err(ConstraintError::Coincident(id, *j)))?;
            set.stage_mut(k).mbvc.push(h);
        }
    }

    let corridor = build_corridor(&ext, &world.corridor, Some(params.obstacle_cull()), params.margin()).map_err(err)?;
    let bounds = world.bounds(params.r_a);
    for k in 1..=k_max {
        let s = set.stage_mut(k);
        s.corridor.extend_from_slice(&corridor[k - 1]);
        s.corridor.extend_from_slice(&corridor[k]);
        s.corridor.extend_from_slice(&bounds);
    }

    let mut bundles: Vec<&EdgeBundle> = Vec::new();
    let parent_owner = agent.role.parent.unwrap_or(id);
    let from_parent = inbox.get(&parent_owner).ok_or_else(|| missing(tick, id, parent_owner))?;
    bundles.push(
        from_parent
            .bundles
            .iter()
            .find(|b| b.child == id)
            .ok_or_else(|| PlanError::Sync {
                tick,
                agent: id,
                missing: format!("edge bundle from {parent_owner}"),
            })?,
    );
    for &c in &agent.role.children {
        bundles.push(me.bundles.iter().find(|b| b.child == c).ok_or_else(|| PlanError::Sync {
            tick,
            agent: id,
            missing: format!("edge bundle for child {c}"),
        })?);
    }
    for b in &bundles {
        for k in 1..=k_max {
            let s = set.stage_mut(k);
            s.balls.push(Ball {
                center: b.centers[k - 1],
                radius: b.radius,
            });
            s.los.extend_from_slice(&b.zones[k]);
            if b.etas[k - 1] == 0.0 {
                s.los.extend_from_slice(&b.zones[k - 1]);
            }
        }
    }

    let reach: Vec<f64> = (1..=k_max)
        .map(|k| k as f64 * params.h * params.v_max * (1.0 + 1e-9) + 1e-9)
        .collect();
    set.prune(&vec![agent.state.p; k_max], &reach);

    let objective = match &agent.role.kind {
        RoleKind::Connector { path } if params.connector_tracking == ConnectorTracking::Neighbours => {
            let node = *path.last().expect("non-empty path");
            let mut parents: Vec<Vec<Vec3>> = Vec::new();
            match agent.role.parent {
                None => parents.push(vec![world.ground; k_max]),
                Some(p) => parents.push(inbox[&p].trajectory.positions.clone()),
            }
            let children: Vec<Vec<Vec3>> = agent
                .role
                .children
                .iter()
                .map(|c| inbox[c].trajectory.positions.clone())
                .collect();
            let cr: Vec<&[Vec3]> = children.iter().map(|v| v.as_slice()).collect();
            let pr: Vec<&[Vec3]> = parents.iter().map(|v| v.as_slice()).collect();
            connector_objective(&cr, &pr, params.alpha_c, params.alpha_p, Some((node, params.alpha_n)))
        }
        _ => searcher_objective(me.extension, k_max, params.q_terminal, params.q_smooth),
    };
    Ok((set, objective))
}

pub fn to_problem(agent: &Agent, set: &ConstraintSet, objective: QuadObjective, params: &PlannerParams) -> QcqpProblem {
    let mut halfspaces = Vec::new();
    let mut balls = Vec::new();
    for (k0, s) in set.stages.iter().enumerate() {
        for h in s.halfspaces() {
            halfspaces.push(StageHalfspace { stage: k0 + 1, halfspace: *h });
        }
        for b in &s.balls {
            balls.push(StageBall {
                stage: k0 + 1,
                center: b.center,
                radius: b.radius,
            });
        }
    }
    QcqpProblem {
        horizon: params.horizon,
        h: params.h,
        x0: agent.state,
        objective,
        halfspaces,
        balls,
        v_max: params.v_max,
        a_max: params.a_max,
        theta_v: Matrix3::identity(),
        theta_a: Matrix3::identity(),
        terminal_rest: true,
        warm_start: agent.warm_start(),
    }
}

/// Builds the constraints, solves, and returns the new plan. A solver fault
/// returns the shifted previous plan.
pub fn plan_tick(
    agent: &Agent,
    inbox: &BTreeMap<usize, TickMessage>,
    world: &World,
    params: &PlannerParams,
    tick: u64,
) -> Result<PlanOutcome, PlanError> {
    let t0 = Instant::now();
    let (set, objective) = build_problem(agent, inbox, world, params, tick)?;
    let warm_violation = set.max_violation(&agent.predetermined.positions);
    let problem = to_problem(agent, &set, objective, params);
    let t1 = Instant::now();
    let sol = solve_with(&problem, &params.admm);
    let t2 = Instant::now();
    Ok(PlanOutcome {
        agent: agent.role.id,
        controls: sol.controls,
        states: sol.states,
        status: sol.status,
        iterations: sol.iterations,
        objective: sol.objective,
        counts: set.counts(),
        warm_violation,
        constraint_ms: (t1 - t0).as_secs_f64() * 1e3,
        solve_ms: (t2 - t1).as_secs_f64() * 1e3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn searcher_objective_hand_value() {
        let o = searcher_objective(Vec3::x(), 2, 1.0, 1.0);
        assert_relative_eq!(o.evaluate(&[Vec3::zeros(), Vec3::x()]), 0.5);
        assert_eq!(o.evaluate(&[Vec3::x(), Vec3::x()]), 0.0);
    }

    #[test]
    fn searcher_objective_translation_invariant() {
        let shift = Vec3::new(3.0, -2.0, 7.0);
        let pts = [Vec3::new(0.1, 0.2, 0.3), Vec3::new(1.0, 0.0, -1.0), Vec3::new(2.0, 2.0, 2.0)];
        let t = Vec3::new(5.0, 1.0, 0.0);
        let a = searcher_objective(t, 3, 10.0, 1.0).evaluate(&pts);
        let moved: Vec<Vec3> = pts.iter().map(|p| p + shift).collect();
        let b = searcher_objective(t + shift, 3, 10.0, 1.0).evaluate(&moved);
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn connector_tracks_weighted_mean() {
        let child = [Vec3::new(4.0, 0.0, 0.0)];
        let parent = [Vec3::zeros()];
        let p = tracking_points(&[&child], &[&parent], 3.0, 1.0, None);
        assert_relative_eq!(p[0], Vec3::new(3.0, 0.0, 0.0));
        let single = tracking_points(&[&child], &[], 3.0, 1.0, None);
        assert_relative_eq!(single[0], child[0]);
    }

    #[test]
    fn shift_examples() {
        let plan = [Vec3::x(), Vec3::y(), Vec3::z()];
        assert_eq!(shift_plan(&plan), vec![Vec3::y(), Vec3::z(), Vec3::z()]);
        let c = [Vec3::x(); 4];
        assert_eq!(shift_plan(&c), c.to_vec());
        let mut p = plan.to_vec();
        for _ in 0..3 {
            p = shift_plan(&p);
        }
        assert_eq!(p, vec![Vec3::z(); 3]);
    }

    #[test]
    fn desk_defaults_are_valid() {
        let p = PlannerParams::default();
        p.check().unwrap();
        assert!(p.separation() < 1.3);
    }
}
