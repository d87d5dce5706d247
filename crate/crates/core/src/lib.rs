pub mod constraints;
pub mod geometry;
pub mod planner;
pub mod scenario;
pub mod sim;
pub mod solver;
pub mod topology;

pub use geometry::{ConvexObstacle, Halfspace, Segment, Vec3, Workspace};
pub use solver::{AgentState, QcqpProblem, QcqpSolution};
pub use topology::{opt_tree, SpanTree};
pub use planner::{PlannerParams, World};
pub use sim::{run, RunLog, ScenarioConfig, SteerCommand};
