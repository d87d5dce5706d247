//! Scenario execution: topology, initial formation, the lock-step tick loop
//! and the safety monitors.

mod config;
mod log;
mod monitor;
mod steer;

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

pub use config::{inset, inset_contains, ConfigError, ScenarioConfig, ScenarioParams, SCHEMA_VERSION};
pub use log::{MetricsRow, Outcome, RunHeader, RunLog, RunMetrics, TickRecord, Timing, RUNLOG_SCHEMA};
pub use monitor::{arc_point, check_step, MonitorLimits, MonitorValues, SUBSAMPLES};
pub use steer::{CommandScript, ScriptEntry, SteerCommand};

use crate::geometry::{hulls_disjoint, segment_clear, ConvexObstacle, GeometryError, Segment, Vec3};
use crate::planner::{
    owned_bundles, plan_tick, shift_plan, termination_check, Agent, AgentRole, PlanError, PlanOutcome,
    PlannerParams, RoleKind, TickMessage, World,
};
use crate::solver::{step_dynamics, AgentState, SolveStatus};
use crate::topology::{
    hop_count, mini_edge_rrt_star, mst_baseline, opt_tree, relay_count, Anchor, Budget, ReferencePath, SpanTree, TopologyError, TopologyParams,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("initial placement: {0}")]
    Placement(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Topology parameters a scenario plans its tree with.
pub fn topology_params(cfg: &ScenarioConfig) -> TopologyParams {
    let p = cfg.params.planner();
    let mut t = TopologyParams::new(p.d_w, inset(&cfg.workspace, p.r_a));
    t.budget = Budget::samples(cfg.params.topology_samples);
    t.seed = cfg.params.seed;
    t.retries = cfg.params.topology_retries;
    t
}

/// Obstacles grown by the tree clearance.
pub fn tree_obstacles(cfg: &ScenarioConfig) -> Result<Vec<ConvexObstacle>, GeometryError> {
    let c = cfg.params.planner().tree_clearance();
    cfg.obstacles.iter().map(|o| o.inflated(c)).collect()
}

/// Plans the relay tree of a scenario.
pub fn plan_topology(cfg: &ScenarioConfig) -> Result<(SpanTree, Vec<ReferencePath>), SimError> {
    let obs = tree_obstacles(cfg)?;
    Ok(opt_tree(cfg.ground_station, &cfg.targets, &obs, &topology_params(cfg))?)
}

/// Relay and hop counts of one tree.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TreeStats {
    pub agents: usize,
    pub relays: usize,
    pub hops: usize,
    pub wall_ms: f64,
}

impl TreeStats {
    pub fn of(tree: &SpanTree, wall_ms: f64) -> Self {
        Self {
            agents: tree.agent_count(),
            relays: relay_count(tree),
            hops: hop_count(tree),
            wall_ms,
        }
    }
}

/// Our tree and the MST baseline on the same scenario.
pub fn compare_topology(cfg: &ScenarioConfig) -> Result<(TreeStats, TreeStats), SimError> {
    let obs = tree_obstacles(cfg)?;
    let tp = topology_params(cfg);
    let t0 = std::time::Instant::now();
    let (ours, _) = opt_tree(cfg.ground_station, &cfg.targets, &obs, &tp)?;
    let t1 = std::time::Instant::now();
    let mst = mst_baseline(cfg.ground_station, &cfg.targets, &obs, &tp)?;
    let t2 = std::time::Instant::now();
    Ok((
        TreeStats::of(&ours, (t1 - t0).as_secs_f64() * 1e3),
        TreeStats::of(&mst, (t2 - t1).as_secs_f64() * 1e3),
    ))
}

/// Agent roles derived from the tree: agent `i` sits on node `i + 1`.
pub fn roles_from_tree(tree: &SpanTree, paths: &[ReferencePath]) -> Vec<AgentRole> {
    (1..tree.len())
        .map(|node| {
            let kind = match tree.target_of_node(node) {
                Some(m) => RoleKind::Searcher {
                    target: m,
                    path: paths[m].waypoints.clone(),
                },
                None => RoleKind::Connector {
                    path: tree.chain_to(node).into_iter().map(|n| tree.position(n)).collect(),
                },
            };
            AgentRole {
                id: node - 1,
                node,
                kind,
                parent: tree.parent(node).filter(|&p| p != 0).map(|p| p - 1),
                children: tree.children(node).iter().map(|c| c - 1).collect(),
            }
        })
        .collect()
}

/// Lattice formation around the ground station.
///
/// Candidate points on a cubic lattice of pitch `spacing` are taken nearest
/// first; a point is kept when the hull of the ground station and every kept
/// point stays clear of `obstacles`, so all pairs are mutually visible.
pub fn initial_placement(
    count: usize,
    ground: Vec3,
    workspace: &crate::geometry::Workspace,
    obstacles: &[ConvexObstacle],
    r_a: f64,
    spacing: f64,
) -> Result<Vec<Vec3>, String> {
    let axes = workspace.free_axes();
    let reach = (count as f64).cbrt().ceil() as i64 + 3;
    let span = |d: usize| if axes[d] { -reach..=reach } else { 0..=0 };
    let mut cands: Vec<(i64, [i64; 3])> = Vec::new();
    for i in span(0) {
        for j in span(1) {
            for k in span(2) {
                if (i, j, k) != (0, 0, 0) {
                    cands.push((i * i + j * j + k * k, [i, j, k]));
                }
            }
        }
    }
    cands.sort();
    let mut kept = vec![ground];
    for (_, [i, j, k]) in cands {
        if kept.len() > count {
            break;
        }
        let p = ground + Vec3::new(i as f64, j as f64, k as f64) * spacing;
        if !inset_contains(workspace, &p, r_a) {
            continue;
        }
        kept.push(p);
        if !obstacles.iter().all(|o| hulls_disjoint(&kept, o.vertices(), 0.0)) {
            kept.pop();
        }
    }
    if kept.len() <= count {
        return Err(format!(
            "room for {} of {count} agents near the ground station",
            kept.len() - 1
        ));
    }
    Ok(kept[1..].to_vec())
}

/// A running deployment.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub config: ScenarioConfig,
    pub params: PlannerParams,
    pub world: World,
    pub tree: SpanTree,
    pub paths: Vec<ReferencePath>,
    pub agents: Vec<Agent>,
    pub tick: u64,
    pub paused: bool,
    /// Agent that serves each target.
    pub searcher_of: Vec<usize>,
    tree_obstacles: Vec<ConvexObstacle>,
    pending: Vec<SteerCommand>,
}

impl Simulation {
    pub fn new(config: ScenarioConfig) -> Result<Self, SimError> {
        config.validate()?;
        let (tree, paths) = plan_topology(&config)?;
        Self::with_tree(config, tree, paths)
    }

    /// Starts from a precomputed tree.
    pub fn with_tree(config: ScenarioConfig, tree: SpanTree, paths: Vec<ReferencePath>) -> Result<Self, SimError> {
        let params = config.params.planner();
        let world = World::new(config.workspace, config.ground_station, config.obstacles.clone(), &params)?;
        let tree_obstacles = tree_obstacles(&config)?;
        let roles = roles_from_tree(&tree, &paths);
        let spots = initial_placement(
            roles.len(),
            config.ground_station,
            &config.workspace,
            &tree_obstacles,
            params.r_a,
            config.params.spacing,
        )
        .map_err(SimError::Placement)?;
        let agents: Vec<Agent> = roles
            .into_iter()
            .zip(spots)
            .map(|(r, p)| Agent::at_rest(r, p, params.horizon))
            .collect();
        let searcher_of = tree.target_nodes().iter().map(|n| n - 1).collect();
        Ok(Self {
            config,
            params,
            world,
            tree,
            paths,
            agents,
            tick: 0,
            paused: false,
            searcher_of,
            tree_obstacles,
            pending: Vec::new(),
        })
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.params.h
    }

    pub fn states(&self) -> Vec<AgentState> {
        self.agents.iter().map(|a| a.state).collect()
    }

    /// Tree edges as agent pairs, `None` being the ground station.
    pub fn edges(&self) -> Vec<(usize, Option<usize>)> {
        self.agents.iter().map(|a| (a.role.id, a.role.parent)).collect()
    }

    pub fn targets(&self) -> Vec<Vec3> {
        self.searcher_of
            .iter()
            .map(|&a| self.agents[a].final_target().expect("searcher"))
            .collect()
    }

    pub fn finished(&self) -> bool {
        termination_check(&self.agents, self.params.tol_p, self.params.tol_v)
    }

    pub fn header(&self) -> RunHeader {
        RunHeader {
            schema: RUNLOG_SCHEMA.into(),
            scenario: self.config.name.clone(),
            seed: self.config.params.seed,
            roles: self.agents.iter().map(|a| a.role.clone()).collect(),
            tree: self.tree.export(),
            initial: self.states(),
        }
    }

    /// Checks a command without applying it.
    pub fn validate_command(&self, cmd: &SteerCommand) -> Result<(), String> {
        if let SteerCommand::MoveTarget { target, position } = cmd {
            if *target >= self.searcher_of.len() {
                return Err(format!("unknown target {target}"));
            }
            if !position.iter().all(|c| c.is_finite()) {
                return Err("position is not finite".into());
            }
            if !inset_contains(&self.config.workspace, position, self.params.r_a) {
                return Err("position is outside the workspace".into());
            }
            if let Some(i) = self.tree_obstacles.iter().position(|o| o.contains(position)) {
                return Err(format!("position is inside obstacle {i} or its clearance"));
            }
            for (m, t) in self.targets().iter().enumerate() {
                if m != *target && (t - position).norm() < 2.0 * self.params.separation() {
                    return Err(format!("position is too close to target {m}"));
                }
            }
        }
        Ok(())
    }

    /// Validates and applies a command at the current tick boundary.
    pub fn apply(&mut self, cmd: &SteerCommand) -> Result<(), String> {
        self.validate_command(cmd)?;
        match cmd {
            SteerCommand::MoveTarget { target, position } => self.reroute(*target, *position)?,
            SteerCommand::Pause => self.paused = true,
            SteerCommand::Resume => self.paused = false,
            SteerCommand::Reset => {
                let fresh = Self::with_tree(self.config.clone(), self.tree.clone(), self.paths.clone())
                    .map_err(|e| e.to_string())?;
                *self = fresh;
            }
        }
        self.pending.push(cmd.clone());
        Ok(())
    }

    fn reroute(&mut self, target: usize, goal: Vec3) -> Result<(), String> {
        let a = self.searcher_of[target];
        let agent = &self.agents[a];
        let RoleKind::Searcher { path, .. } = &agent.role.kind else {
            return Err(format!("agent {a} is not a searcher"));
        };
        let anchor = agent.goal.unwrap_or(path[agent.progress]);
        let mut new_path = path[..=agent.progress].to_vec();
        if anchor != path[agent.progress] {
            new_path.push(anchor);
        }
        let progress = new_path.len() - 1;
        if segment_clear(&Segment::new(anchor, goal), &self.tree_obstacles) {
            new_path.push(goal);
        } else {
            let mut tp = topology_params(&self.config);
            tp.seed ^= self.tick.wrapping_mul(0x2545_F491_4F6C_DD1D);
            let found = mini_edge_rrt_star(goal, &[Anchor::root(anchor)], &self.tree_obstacles, &tp, tp.seed);
            let Some(branch) = found.into_iter().next() else {
                return Err("no obstacle-free route to the new position".into());
            };
            new_path.extend_from_slice(&branch.waypoints[1..]);
        }
        let agent = &mut self.agents[a];
        agent.progress = progress;
        if let RoleKind::Searcher { path, .. } = &mut agent.role.kind {
            *path = new_path;
        }
        Ok(())
    }

    /// Runs one lock-step tick and the monitors over it.
    pub fn step(&mut self) -> Result<TickRecord, SimError> {
        let tick = self.tick + 1;
        let parents: Vec<Vec3> = self
            .agents
            .iter()
            .map(|a| a.role.parent.map_or(self.world.ground, |q| self.agents[q].state.p))
            .collect();
        for (a, parent) in self.agents.iter_mut().zip(parents) {
            a.advance_intermediate_target(&self.world, &self.params, parent);
        }
        // phase 1: predetermined trajectories
        let mut inbox: BTreeMap<usize, TickMessage> = self
            .agents
            .iter()
            .map(|a| (a.role.id, TickMessage::from_agent(a, tick)))
            .collect();
        // phase 2: edge bundles from their owners
        let bundles: Vec<_> = self
            .agents
            .par_iter()
            .map(|a| owned_bundles(a, &inbox, &self.world, &self.params, tick))
            .collect::<Result<_, _>>()?;
        for (a, b) in self.agents.iter().zip(bundles) {
            inbox.get_mut(&a.role.id).expect("own message").bundles = b;
        }
        // phase 3: concurrent solves
        let outcomes: Vec<PlanOutcome> = self
            .agents
            .par_iter()
            .map(|a| plan_tick(a, &inbox, &self.world, &self.params, tick))
            .collect::<Result<_, _>>()?;
        // phase 4: commit
        let start = self.states();
        let first: Vec<Vec3> = outcomes.iter().map(|o| o.controls[0]).collect();
        for (a, o) in self.agents.iter_mut().zip(&outcomes) {
            a.state = step_dynamics(&a.state, &o.controls[0], self.params.h);
            a.controls = o.controls.clone();
            let plan: Vec<Vec3> = o.states.iter().map(|s| s.p).collect();
            a.predetermined.positions = shift_plan(&plan);
            a.predetermined.tick = tick;
        }
        self.tick = tick;
        let monitors = check_step(
            &start,
            &first,
            self.params.h,
            &self.edges(),
            self.world.ground,
            &self.world.obstacles,
            MonitorLimits {
                r_a: self.params.r_a,
                d_c: self.params.d_c,
            },
        );
        if monitors.min_los_obs_dist < self.params.d_m {
            ::log::debug!("tick {tick}: LOS margin {:.3} below d_m", monitors.min_los_obs_dist);
        }
        Ok(TickRecord {
            tick,
            t: self.time(),
            states: self.states(),
            plans: outcomes.iter().map(|o| o.states.iter().map(|s| s.p).collect()).collect(),
            intermediate_targets: self.agents.iter().map(|a| a.extension()).collect(),
            counts: outcomes.iter().map(|o| o.counts).collect(),
            statuses: outcomes.iter().map(|o| o.status).collect(),
            iterations: outcomes.iter().map(|o| o.iterations).collect(),
            warm_violation: outcomes.iter().map(|o| o.warm_violation).fold(0.0, f64::max),
            monitors,
            commands: std::mem::take(&mut self.pending),
            timing: Some(Timing {
                constraint_ms: outcomes.iter().map(|o| o.constraint_ms).collect(),
                solve_ms: outcomes.iter().map(|o| o.solve_ms).collect(),
            }),
        })
    }
}

/// Result of [`run`].
#[derive(Debug, Clone)]
pub struct RunResult {
    pub log: RunLog,
    pub metrics: RunMetrics,
    /// Commands the script supplied that failed validation.
    pub rejected: Vec<(u64, SteerCommand, String)>,
}

impl RunResult {
    pub fn outcome(&self) -> &Outcome {
        self.log.outcome.as_ref().expect("run sets an outcome")
    }
}

/// Runs a scenario until termination, a breach or the tick budget.
///
/// Scripted commands are applied before the tick they are keyed to. Pause and
/// resume do not alter the tick stream of a headless run.
pub fn run(config: &ScenarioConfig, script: &CommandScript) -> Result<RunResult, SimError> {
    let sim = Simulation::new(config.clone())?;
    Ok(run_from(sim, script))
}

pub fn run_from(sim: Simulation, script: &CommandScript) -> RunResult {
    let mut runner = Runner::new(sim);
    loop {
        let boundary = runner.boundary();
        for cmd in script.at(boundary) {
            let _ = runner.apply(cmd);
        }
        if !runner.advance() {
            break;
        }
    }
    runner.finish()
}

/// Tick-by-tick driver that records the run log.
///
/// Commands go in between ticks; boundaries are counted across resets, so a
/// [`CommandScript`] keyed by [`Runner::boundary`] replays the same run.
#[derive(Debug)]
pub struct Runner {
    sim: Simulation,
    log: RunLog,
    rejected: Vec<(u64, SteerCommand, String)>,
    steps: u64,
}

impl Runner {
    pub fn new(sim: Simulation) -> Self {
        let log = RunLog {
            header: sim.header(),
            records: Vec::new(),
            outcome: None,
        };
        Self {
            sim,
            log,
            rejected: Vec::new(),
            steps: 0,
        }
    }

    pub fn sim(&self) -> &Simulation {
        &self.sim
    }

    /// Key of the next tick boundary.
    pub fn boundary(&self) -> u64 {
        self.steps + 1
    }

    pub fn outcome(&self) -> Option<&Outcome> {
        self.log.outcome.as_ref()
    }

    pub fn last(&self) -> Option<&TickRecord> {
        self.log.records.last()
    }

    /// Applies a command at the coming boundary. A reset restarts the log.
    pub fn apply(&mut self, cmd: &SteerCommand) -> Result<(), String> {
        if self.log.outcome.is_some() {
            return Err("run has ended".into());
        }
        match self.sim.apply(cmd) {
            Ok(()) => {
                if *cmd == SteerCommand::Reset {
                    self.log.records.clear();
                    self.log.header = self.sim.header();
                }
                Ok(())
            }
            Err(reason) => {
                self.rejected.push((self.boundary(), cmd.clone(), reason.clone()));
                Err(reason)
            }
        }
    }

    /// Runs one tick. Returns false once the run has an outcome.
    pub fn advance(&mut self) -> bool {
        if self.log.outcome.is_some() {
            return false;
        }
        let sim = &mut self.sim;
        if sim.finished() {
            self.log.outcome = Some(Outcome::Terminated {
                tick: sim.tick,
                t: sim.time(),
            });
            return false;
        }
        if sim.tick >= sim.config.params.tick_budget {
            self.log.outcome = Some(Outcome::BudgetExhausted { tick: sim.tick });
            return false;
        }
        self.steps += 1;
        match sim.step() {
            Ok(rec) => {
                let breach = rec.monitors.breaches.first().cloned();
                let fault = rec.statuses.iter().position(|s| *s == SolveStatus::Fault);
                let tick = rec.tick;
                self.log.records.push(rec);
                if let Some(detail) = breach {
                    ::log::error!("tick {tick}: monitor breach: {detail}");
                    self.log.outcome = Some(Outcome::Breach { tick, detail });
                    return false;
                }
                if let Some(a) = fault {
                    ::log::warn!("tick {tick}: agent {a} kept its shifted plan after a solver fault");
                }
                true
            }
            Err(e) => {
                self.log.outcome = Some(Outcome::Fault {
                    tick: sim.tick + 1,
                    detail: e.to_string(),
                });
                false
            }
        }
    }

    pub fn finish(mut self) -> RunResult {
        while self.advance() {}
        let metrics = self.log.metrics();
        RunResult {
            log: self.log,
            metrics,
            rejected: self.rejected,
        }
    }
}
