//! Wire messages. Field names are part of the protocol; see docs/protocol.md.

use serde::{Deserialize, Serialize};

use relaymesh::geometry::{Vec3, Workspace};
use relaymesh::planner::RoleKind;
use relaymesh::sim::{MonitorValues, Outcome, Simulation, SteerCommand, TickRecord};

pub const FRAME_SCHEMA: &str = "frame.v1";
pub const COMMAND_SCHEMA: &str = "command.v1";
pub const ACK_SCHEMA: &str = "ack.v1";
pub const SCENE_SCHEMA: &str = "scene.v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Searcher,
    Connector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentFrame {
    pub id: usize,
    pub role: Role,
    pub p: Vec3,
    pub v: Vec3,
    /// Current intermediate target, when the agent follows its path.
    pub goal: Option<Vec3>,
}

/// `parent == None` is the ground station.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeFrame {
    pub parent: Option<usize>,
    pub child: usize,
}

/// One state frame per tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub schema: String,
    pub tick: u64,
    pub t: f64,
    pub paused: bool,
    pub agents: Vec<AgentFrame>,
    pub edges: Vec<EdgeFrame>,
    pub targets: Vec<Vec3>,
    /// Absent before the first tick.
    pub monitors: Option<MonitorValues>,
    pub outcome: Option<Outcome>,
}

impl Frame {
    pub fn capture(sim: &Simulation, record: Option<&TickRecord>, outcome: Option<&Outcome>) -> Self {
        let agents = sim
            .agents
            .iter()
            .map(|a| AgentFrame {
                id: a.role.id,
                role: match a.role.kind {
                    RoleKind::Searcher { .. } => Role::Searcher,
                    RoleKind::Connector { .. } => Role::Connector,
                },
                p: a.state.p,
                v: a.state.v,
                goal: a.goal,
            })
            .collect();
        Self {
            schema: FRAME_SCHEMA.into(),
            tick: sim.tick,
            t: sim.time(),
            paused: sim.paused,
            agents,
            edges: sim
                .edges()
                .into_iter()
                .map(|(child, parent)| EdgeFrame { parent, child })
                .collect(),
            targets: sim.targets(),
            monitors: record.map(|r| r.monitors.clone()),
            outcome: outcome.cloned(),
        }
    }
}

/// Static geometry, sent once when a client connects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub schema: String,
    pub name: String,
    pub workspace: Workspace,
    pub ground_station: Vec3,
    /// Obstacle hulls as vertex lists.
    pub obstacles: Vec<Vec<Vec3>>,
    pub r_a: f64,
    pub d_c: f64,
}

impl Scene {
    pub fn of(sim: &Simulation) -> Self {
        Self {
            schema: SCENE_SCHEMA.into(),
            name: sim.config.name.clone(),
            workspace: sim.config.workspace,
            ground_station: sim.config.ground_station,
            obstacles: sim.config.obstacles.iter().map(|o| o.vertices().to_vec()).collect(),
            r_a: sim.params.r_a,
            d_c: sim.params.d_c,
        }
    }
}

/// Client to server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandMessage {
    pub schema: String,
    /// Echoed in the ack.
    #[serde(default)]
    pub id: Option<u64>,
    #[serde(flatten)]
    pub command: SteerCommand,
}

impl CommandMessage {
    pub fn new(id: u64, command: SteerCommand) -> Self {
        Self {
            schema: COMMAND_SCHEMA.into(),
            id: Some(id),
            command,
        }
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let msg: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if msg.schema != COMMAND_SCHEMA {
            return Err(format!("unsupported schema {:?}, expected {COMMAND_SCHEMA:?}", msg.schema));
        }
        Ok(msg)
    }
}

/// Server reply to one command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub schema: String,
    pub id: Option<u64>,
    pub rejected: bool,
    pub reason: Option<String>,
    /// Boundary the command was applied at, when accepted.
    pub tick: Option<u64>,
}

impl Ack {
    pub fn accepted(id: Option<u64>, tick: u64) -> Self {
        Self {
            schema: ACK_SCHEMA.into(),
            id,
            rejected: false,
            reason: None,
            tick: Some(tick),
        }
    }

    pub fn rejected(id: Option<u64>, reason: impl Into<String>) -> Self {
        Self {
            schema: ACK_SCHEMA.into(),
            id,
            rejected: true,
            reason: Some(reason.into()),
            tick: None,
        }
    }
}
