use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rrt::{Anchor, MinEdgeRrtStar};
use super::{compare_paths, in_free_space, Path, TopologyError, TopologyParams};
use crate::geometry::{segment_clear, ConvexObstacle, Segment, Vec3, EPS_GEO};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub index: usize,
    pub position: Vec3,
    pub parent: Option<usize>,
}

/// Embedded spanning tree. Node 0 is the ground station; every other node is
/// an agent. Parents always precede their children.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TreeExport", into = "TreeExport")]
pub struct SpanTree {
    nodes: Vec<TreeNode>,
    /// Node index of each target, indexed by target id.
    targets: Vec<usize>,
    children: Vec<Vec<usize>>,
}

/// Reference path of one searcher: node chain and positions from the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePath {
    pub target: usize,
    pub nodes: Vec<usize>,
    pub waypoints: Vec<Vec3>,
}

/// JSON form of a tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeExport {
    pub nodes: Vec<TreeNode>,
    pub targets: BTreeMap<usize, usize>,
    #[serde(default)]
    pub paths: Vec<ReferencePath>,
}

impl SpanTree {
    /// Single-node tree at the ground station.
    pub fn with_root(p_g: Vec3) -> Self {
        Self {
            nodes: vec![TreeNode {
                index: 0,
                position: p_g,
                parent: None,
            }],
            targets: Vec::new(),
            children: vec![Vec::new()],
        }
    }

    /// Builds a tree from nodes and the target map, checking structure only.
    pub fn from_parts(nodes: Vec<TreeNode>, targets: Vec<usize>) -> Result<Self, String> {
        if nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        let mut children = vec![Vec::new(); nodes.len()];
        for (i, n) in nodes.iter().enumerate() {
            if n.index != i {
                return Err(format!("node {i} carries index {}", n.index));
            }
            match (i, n.parent) {
                (0, None) => {}
                (0, Some(_)) => return Err("root has a parent".into()),
                (_, None) => return Err(format!("node {i} has no parent")),
                (_, Some(p)) if p >= i => {
                    return Err(format!("node {i} has parent {p} that does not precede it"))
                }
                (_, Some(p)) => children[p].push(i),
            }
        }
        if let Some(t) = targets.iter().find(|&&t| t >= nodes.len()) {
            return Err(format!("target node {t} out of range"));
        }
        Ok(Self {
            nodes,
            targets,
            children,
        })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &TreeNode {
        &self.nodes[i]
    }

    pub fn position(&self, i: usize) -> Vec3 {
        self.nodes[i].position
    }

    pub fn root(&self) -> Vec3 {
        self.nodes[0].position
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.nodes[i].parent
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of agents, `|nodes| - 1`.
    pub fn agent_count(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn target_nodes(&self) -> &[usize] {
        &self.targets
    }

    pub fn target_of_node(&self, node: usize) -> Option<usize> {
        self.targets.iter().position(|&n| n == node)
    }

    pub fn depth(&self, mut i: usize) -> usize {
        let mut d = 0;
        while let Some(p) = self.nodes[i].parent {
            i = p;
            d += 1;
        }
        d
    }

    /// Node indices from the root down to `i`.
    pub fn chain_to(&self, mut i: usize) -> Vec<usize> {
        let mut out = vec![i];
        while let Some(p) = self.nodes[i].parent {
            out.push(p);
            i = p;
        }
        out.reverse();
        out
    }

    pub fn root_length(&self, i: usize) -> f64 {
        self.chain_to(i)
            .windows(2)
            .map(|w| (self.position(w[1]) - self.position(w[0])).norm())
            .sum()
    }

    /// `(child, parent)` pairs.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.nodes.iter().filter_map(|n| n.parent.map(|p| (n.index, p)))
    }

    pub fn anchor(&self, i: usize) -> Anchor {
        Anchor {
            index: i,
            position: self.position(i),
            depth: self.depth(i),
            root_length: self.root_length(i),
        }
    }

    pub fn reference_path(&self, target: usize) -> ReferencePath {
        let nodes = self.chain_to(self.targets[target]);
        let waypoints = nodes.iter().map(|&n| self.position(n)).collect();
        ReferencePath {
            target,
            nodes,
            waypoints,
        }
    }

    pub fn reference_paths(&self) -> Vec<ReferencePath> {
        (0..self.targets.len()).map(|t| self.reference_path(t)).collect()
    }

    /// Appends a branch from `path.anchor` and maps `target` to its last node.
    /// Returns the indices of the new nodes.
    pub fn push_branch(&mut self, target: usize, path: &Path) -> Vec<usize> {
        let mut parent = path.anchor;
        let mut added = Vec::new();
        for w in path.waypoints.iter().skip(1) {
            let index = self.nodes.len();
            self.nodes.push(TreeNode {
                index,
                position: *w,
                parent: Some(parent),
            });
            self.children.push(Vec::new());
            self.children[parent].push(index);
            added.push(index);
            parent = index;
        }
        if self.targets.len() <= target {
            self.targets.resize(target + 1, usize::MAX);
        }
        self.targets[target] = parent;
        added
    }

    /// Checks every edge for range and line of sight. Returns the violations.
    pub fn validate(&self, obstacles: &[ConvexObstacle], link_range: f64) -> Vec<String> {
        let mut out = Vec::new();
        for (c, p) in self.edges() {
            let seg = Segment::new(self.position(p), self.position(c));
            if seg.length() > link_range + EPS_GEO {
                out.push(format!("edge {p}-{c} has length {:.6} > {link_range}", seg.length()));
            }
            if !segment_clear(&seg, obstacles) {
                out.push(format!("edge {p}-{c} is blocked"));
            }
        }
        for (t, &n) in self.targets.iter().enumerate() {
            if n == usize::MAX {
                out.push(format!("target {t} is not in the tree"));
            }
        }
        out
    }

    pub fn export(&self) -> TreeExport {
        TreeExport {
            nodes: self.nodes.clone(),
            targets: self.targets.iter().copied().enumerate().collect(),
            paths: self.reference_paths(),
        }
    }
}

impl TryFrom<TreeExport> for SpanTree {
    type Error = String;
    fn try_from(e: TreeExport) -> Result<Self, String> {
        let n = e.targets.len();
        let mut targets = vec![usize::MAX; n];
        for (t, node) in e.targets {
            if t >= n {
                return Err(format!("target ids must be 0..{n}, found {t}"));
            }
            targets[t] = node;
        }
        SpanTree::from_parts(e.nodes, targets)
    }
}

impl From<SpanTree> for TreeExport {
    fn from(t: SpanTree) -> Self {
        t.export()
    }
}

fn target_seed(seed: u64, target: usize) -> u64 {
    seed ^ (target as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Greedy minimum-relay tree.
///
/// Each iteration connects every remaining target's search tree to the anchors
/// added in the previous iteration, keeps the best branch per target, then
/// commits the target whose branch is best overall. Returns the tree and one
/// reference path per target, in target order.
pub fn opt_tree(
    p_g: Vec3,
    targets: &[Vec3],
    obstacles: &[ConvexObstacle],
    params: &TopologyParams,
) -> Result<(SpanTree, Vec<ReferencePath>), TopologyError> {
    if targets.is_empty() {
        return Err(TopologyError::NoTargets);
    }
    for (what, p) in std::iter::once(("ground station".to_string(), p_g))
        .chain(targets.iter().enumerate().map(|(i, t)| (format!("target {i}"), *t)))
    {
        if !in_free_space(&p, obstacles) || !params.workspace.contains(&p) {
            return Err(TopologyError::NotFree {
                what,
                position: [p.x, p.y, p.z],
            });
        }
    }

    let mut tree = SpanTree::with_root(p_g);
    let mut searches: Vec<(usize, MinEdgeRrtStar)> = targets
        .iter()
        .enumerate()
        .map(|(m, t)| {
            let mut s = MinEdgeRrtStar::new(*t, obstacles, params, target_seed(params.seed, m));
            s.set_goals([p_g]);
            (m, s)
        })
        .collect();
    searches
        .par_iter_mut()
        .for_each(|(_, s)| s.grow(&params.budget));

    let mut best: Vec<Option<Path>> = vec![None; targets.len()];
    let mut fresh: Vec<usize> = vec![0];
    let mut budget = params.budget;
    let mut attempts = 1;

    while !searches.is_empty() {
        let anchors: Vec<Anchor> = if params.anchor_on_whole_tree {
            (0..tree.len()).map(|i| tree.anchor(i)).collect()
        } else {
            fresh.iter().map(|&i| tree.anchor(i)).collect()
        };
        let found: Vec<(usize, Option<Path>)> = searches
            .par_iter()
            .map(|(m, s)| {
                let mut inc: Option<Path> = None;
                for a in &anchors {
                    if let Some(p) = s.connect(a) {
                        inc = Some(compare_paths(p, inc));
                    }
                }
                (*m, inc)
            })
            .collect();
        for (m, cand) in found {
            if let Some(c) = cand {
                best[m] = Some(compare_paths(c, best[m].take()));
            }
        }

        let pick = searches
            .iter()
            .enumerate()
            .filter_map(|(k, (m, _))| best[*m].as_ref().map(|p| (k, *m, p)))
            .min_by(|a, b| {
                a.2.edge_count
                    .cmp(&b.2.edge_count)
                    .then(a.2.root_cost.total_cmp(&b.2.root_cost))
                    .then(a.1.cmp(&b.1))
            })
            .map(|(k, m, _)| (k, m));

        let Some((k, m)) = pick else {
            if attempts > params.retries {
                let mut stuck: Vec<usize> = searches.iter().map(|(m, _)| *m).collect();
                stuck.sort_unstable();
                return Err(TopologyError::Unreachable {
                    targets: stuck,
                    attempts,
                });
            }
            attempts += 1;
            budget = budget.doubled();
            log::debug!("no branch found; growing with {} samples", budget.samples);
            let all: Vec<Vec3> = tree.nodes().iter().map(|n| n.position).collect();
            searches.par_iter_mut().for_each(|(_, s)| {
                s.set_goals(all.iter().copied());
                s.grow(&budget);
            });
            // re-offer every node; earlier anchors may be reachable now
            fresh = (0..tree.len()).collect();
            continue;
        };

        searches.swap_remove(k);
        let path = best[m].take().expect("picked target has a path");
        let added = tree.push_branch(m, &path);
        fresh = std::iter::once(path.anchor).chain(added).collect();
        let goals: Vec<Vec3> = fresh.iter().map(|&i| tree.position(i)).collect();
        searches.iter_mut().for_each(|(_, s)| s.set_goals(goals.iter().copied()));
        searches.sort_by_key(|(m, _)| *m);
    }

    let paths = tree.reference_paths();
    Ok((tree, paths))
}
