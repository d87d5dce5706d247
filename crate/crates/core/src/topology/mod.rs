//! Relay-tree synthesis.
//!
//! [`opt_tree`] grows an embedded spanning tree rooted at the ground station
//! by greedily attaching, one target at a time, the branch that needs the
//! fewest new nodes. Candidate branches come from [`MinEdgeRrtStar`], an RRT*
//! variant whose edge cost carries a large per-edge penalty so that hop count
//! dominates length. [`mst_baseline`] builds the visibility-MST comparison.

mod mst;
mod rrt;
mod tree;

use std::cmp::Ordering;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{ConvexObstacle, Vec3, Workspace};

pub use mst::mst_baseline;
pub use rrt::{mini_edge_rrt_star, Anchor, MinEdgeRrtStar};
pub use tree::{opt_tree, ReferencePath, SpanTree, TreeExport, TreeNode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("targets {targets:?} unreachable after {attempts} attempts")]
    Unreachable { targets: Vec<usize>, attempts: usize },
    #[error("{what} at {position:?} is not in free space")]
    NotFree { what: String, position: [f64; 3] },
    #[error("no targets given")]
    NoTargets,
}

/// Sampling budget of one RRT* call. The sample count is what makes runs
/// reproducible; the optional wall-clock cap trades that away for latency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub samples: usize,
    #[serde(default)]
    pub time_limit: Option<Duration>,
}

impl Budget {
    pub fn samples(samples: usize) -> Self {
        Self {
            samples,
            time_limit: None,
        }
    }

    pub fn doubled(&self) -> Self {
        Self {
            samples: self.samples * 2,
            time_limit: self.time_limit.map(|t| t * 2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyParams {
    /// Maximum edge length (communication range).
    pub link_range: f64,
    pub workspace: Workspace,
    pub budget: Budget,
    pub goal_bias: f64,
    pub seed: u64,
    /// Budget doublings tried before giving up on a target.
    pub retries: usize,
    /// Offer every tree node as an anchor instead of only the newest branch.
    pub anchor_on_whole_tree: bool,
}

impl TopologyParams {
    pub fn new(link_range: f64, workspace: Workspace) -> Self {
        Self {
            link_range,
            workspace,
            budget: Budget::samples(1500),
            goal_bias: 0.1,
            seed: 0,
            retries: 3,
            anchor_on_whole_tree: false,
        }
    }
}

/// Candidate branch from an existing tree node (the anchor) to a target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    /// Anchor first, target last.
    pub waypoints: Vec<Vec3>,
    /// Tree index of the anchor node.
    pub anchor: usize,
    pub edge_count: usize,
    /// Penalized cost from the tree root: `P * total_hops + length`.
    pub root_cost: f64,
}

impl Path {
    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    fn rank(&self, other: &Path) -> Ordering {
        self.edge_count
            .cmp(&other.edge_count)
            .then(self.root_cost.total_cmp(&other.root_cost))
    }
}

/// Keeps the better of two branches: fewer edges first, then lower root cost.
pub fn compare_paths(candidate: Path, incumbent: Option<Path>) -> Path {
    match incumbent {
        None => candidate,
        Some(inc) => {
            if candidate.rank(&inc) == Ordering::Less {
                candidate
            } else {
                inc
            }
        }
    }
}

/// Sum over targets of the root-to-target edge count.
pub fn hop_count(tree: &SpanTree) -> usize {
    tree.target_nodes().iter().map(|&n| tree.depth(n)).sum()
}

/// Agents that are not assigned to any target.
pub fn relay_count(tree: &SpanTree) -> usize {
    let mut targets = tree.target_nodes().to_vec();
    targets.sort_unstable();
    targets.dedup();
    tree.agent_count() - targets.len()
}

pub(crate) fn edge_penalty(workspace: &Workspace, budget: &Budget) -> f64 {
    10.0 * workspace.diagonal().max(1.0) * (budget.samples as f64 + 2.0)
}

pub(crate) fn in_free_space(p: &Vec3, obstacles: &[ConvexObstacle]) -> bool {
    obstacles.iter().all(|o| !o.contains(p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(edges: usize, cost: f64) -> Path {
        Path {
            waypoints: vec![Vec3::zeros(); edges + 1],
            anchor: 0,
            edge_count: edges,
            root_cost: cost,
        }
    }

    #[test]
    fn vacant_incumbent_loses() {
        assert_eq!(compare_paths(path(2, 300.0), None), path(2, 300.0));
    }

    #[test]
    fn fewer_edges_win_over_cost() {
        assert_eq!(compare_paths(path(2, 300.0), Some(path(3, 100.0))).edge_count, 2);
        assert_eq!(compare_paths(path(3, 100.0), Some(path(2, 300.0))).edge_count, 2);
    }

    #[test]
    fn equal_edges_break_on_root_cost() {
        assert_eq!(
            compare_paths(path(2, 300.0), Some(path(2, 250.0))).root_cost,
            250.0
        );
        assert_eq!(
            compare_paths(path(2, 250.0), Some(path(2, 300.0))).root_cost,
            250.0
        );
    }
}
