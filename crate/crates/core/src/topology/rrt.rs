use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{edge_penalty, in_free_space, Budget, Path, TopologyParams};
use crate::geometry::{segment_clear, ConvexObstacle, Segment, Vec3, Workspace, EPS_GEO};

/// Existing tree node offered as the start of a new branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub index: usize,
    pub position: Vec3,
    /// Edges between the tree root and this node.
    pub depth: usize,
    /// Tree-path length between the root and this node.
    pub root_length: f64,
}

impl Anchor {
    pub fn root(position: Vec3) -> Self {
        Self {
            index: 0,
            position,
            depth: 0,
            root_length: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    pos: Vec3,
    parent: Option<usize>,
    children: Vec<usize>,
    /// Edges to the target.
    edges: usize,
    /// Length to the target.
    length: f64,
}

/// Minimum-edge RRT* tree rooted at a target.
///
/// Costs are `edges * P + length`, with `P` larger than any achievable path
/// length, so rewiring minimises edge count first. Samples are steered to lie
/// within `link_range` of the nearest node. The tree persists across calls so
/// later anchors reuse earlier exploration.
pub struct MinEdgeRrtStar<'a> {
    target: Vec3,
    obstacles: &'a [ConvexObstacle],
    workspace: Workspace,
    link_range: f64,
    goal_bias: f64,
    penalty: f64,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    /// Anchors the goal bias steers toward.
    goals: Vec<Vec3>,
    samples_drawn: usize,
}

impl<'a> MinEdgeRrtStar<'a> {
    pub fn new(
        target: Vec3,
        obstacles: &'a [ConvexObstacle],
        params: &TopologyParams,
        seed: u64,
    ) -> Self {
        Self {
            target,
            obstacles,
            workspace: params.workspace,
            link_range: params.link_range,
            goal_bias: params.goal_bias,
            penalty: edge_penalty(&params.workspace, &params.budget),
            rng: ChaCha8Rng::seed_from_u64(seed),
            nodes: vec![Node {
                pos: target,
                parent: None,
                children: Vec::new(),
                edges: 0,
                length: 0.0,
            }],
            goals: Vec::new(),
            samples_drawn: 0,
        }
    }

    pub fn target(&self) -> Vec3 {
        self.target
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn samples_drawn(&self) -> usize {
        self.samples_drawn
    }

    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    pub fn set_goals(&mut self, goals: impl IntoIterator<Item = Vec3>) {
        self.goals = goals.into_iter().collect();
    }

    fn cost(&self, i: usize) -> f64 {
        self.nodes[i].edges as f64 * self.penalty + self.nodes[i].length
    }

    fn visible(&self, a: &Vec3, b: &Vec3) -> bool {
        segment_clear(&Segment::new(*a, *b), self.obstacles)
    }

    fn sample_point(&mut self) -> Vec3 {
        if !self.goals.is_empty() && self.rng.gen::<f64>() < self.goal_bias {
            let k = self.rng.gen_range(0..self.goals.len());
            return self.goals[k];
        }
        let (lo, hi) = (self.workspace.min, self.workspace.max);
        let mut p = lo;
        for i in 0..3 {
            if hi[i] > lo[i] {
                p[i] = self.rng.gen_range(lo[i]..hi[i]);
            }
        }
        p
    }

    fn nearest(&self, p: &Vec3) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, n) in self.nodes.iter().enumerate() {
            let d = (n.pos - p).norm_squared();
            if d < best.1 {
                best = (i, d);
            }
        }
        (best.0, best.1.sqrt())
    }

    /// Draws samples until `budget` is spent.
    pub fn grow(&mut self, budget: &Budget) {
        let start = Instant::now();
        for s in 0..budget.samples {
            if let Some(limit) = budget.time_limit {
                if s % 32 == 0 && start.elapsed() >= limit {
                    break;
                }
            }
            self.samples_drawn += 1;
            self.extend();
        }
    }

    fn extend(&mut self) {
        let raw = self.sample_point();
        let (near_idx, dist) = self.nearest(&raw);
        if dist <= EPS_GEO {
            return;
        }
        let reach = self.link_range * (1.0 - 1e-9);
        let x = if dist > reach {
            let from = self.nodes[near_idx].pos;
            self.workspace.clamp(&(from + (raw - from) * (reach / dist)))
        } else {
            raw
        };
        if !in_free_space(&x, self.obstacles) {
            return;
        }
        // A node sitting on a goal would add a zero-length edge later.
        if self.goals.iter().any(|g| (g - x).norm() <= 1e-6 * self.link_range) {
            return;
        }

        let mut near: Vec<(usize, f64)> = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| {
                let d = (n.pos - x).norm();
                (d <= self.link_range && d > EPS_GEO).then_some((i, d))
            })
            .collect();
        if near.is_empty() {
            return;
        }
        near.sort_by(|a, b| {
            (self.cost(a.0) + a.1).total_cmp(&(self.cost(b.0) + b.1))
        });

        let mut parent = None;
        for &(i, d) in &near {
            if self.visible(&self.nodes[i].pos, &x) {
                parent = Some((i, d));
                break;
            }
        }
        let Some((pi, pd)) = parent else {
            return;
        };
        let new = self.nodes.len();
        self.nodes.push(Node {
            pos: x,
            parent: Some(pi),
            children: Vec::new(),
            edges: self.nodes[pi].edges + 1,
            length: self.nodes[pi].length + pd,
        });
        self.nodes[pi].children.push(new);

        let new_cost = self.cost(new);
        for &(i, d) in &near {
            if i == pi || i == 0 {
                continue;
            }
            if new_cost + self.penalty + d < self.cost(i) && self.visible(&x, &self.nodes[i].pos) {
                self.reparent(i, new, d);
            }
        }
    }

    fn reparent(&mut self, child: usize, new_parent: usize, dist: f64) {
        if let Some(old) = self.nodes[child].parent {
            self.nodes[old].children.retain(|&c| c != child);
        }
        self.nodes[child].parent = Some(new_parent);
        self.nodes[new_parent].children.push(child);
        let mut stack = vec![(child, dist)];
        while let Some((n, d)) = stack.pop() {
            let p = self.nodes[n].parent.expect("non-root");
            self.nodes[n].edges = self.nodes[p].edges + 1;
            self.nodes[n].length = self.nodes[p].length + d;
            let pos = self.nodes[n].pos;
            for &c in &self.nodes[n].children {
                stack.push((c, (self.nodes[c].pos - pos).norm()));
            }
        }
    }

    /// Best branch from `anchor` into the tree, if any node is in range and sight.
    pub fn connect(&self, anchor: &Anchor) -> Option<Path> {
        let a = anchor.position;
        if (a - self.target).norm() <= EPS_GEO {
            return Some(Path {
                waypoints: vec![a],
                anchor: anchor.index,
                edge_count: 0,
                root_cost: self.penalty * anchor.depth as f64 + anchor.root_length,
            });
        }
        let mut cands: Vec<(usize, f64)> = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| {
                let d = (n.pos - a).norm();
                (d <= self.link_range && d > EPS_GEO).then_some((i, d))
            })
            .collect();
        cands.sort_by(|x, y| (self.cost(x.0) + x.1).total_cmp(&(self.cost(y.0) + y.1)));
        let &(i, d) = cands
            .iter()
            .find(|(i, _)| self.visible(&a, &self.nodes[*i].pos))?;
        let mut waypoints = vec![a];
        let mut cur = Some(i);
        while let Some(c) = cur {
            waypoints.push(self.nodes[c].pos);
            cur = self.nodes[c].parent;
        }
        let edge_count = self.nodes[i].edges + 1;
        let length = self.nodes[i].length + d;
        Some(Path {
            waypoints,
            anchor: anchor.index,
            edge_count,
            root_cost: self.penalty * (anchor.depth + edge_count) as f64
                + anchor.root_length
                + length,
        })
    }
}

/// One-shot search: grows a fresh tree at `target` with the goal bias aimed at
/// the anchors and returns one path per reachable anchor.
pub fn mini_edge_rrt_star(
    target: Vec3,
    anchors: &[Anchor],
    obstacles: &[ConvexObstacle],
    params: &TopologyParams,
    seed: u64,
) -> Vec<Path> {
    let mut rrt = MinEdgeRrtStar::new(target, obstacles, params, seed);
    rrt.set_goals(anchors.iter().map(|a| a.position));
    rrt.grow(&params.budget);
    anchors.iter().filter_map(|a| rrt.connect(a)).collect()
}
