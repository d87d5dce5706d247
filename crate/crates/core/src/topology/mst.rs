use std::collections::BTreeSet;

use petgraph::algo::{dijkstra, min_spanning_tree};
use petgraph::data::Element;
use petgraph::graph::{NodeIndex, UnGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{in_free_space, TopologyError, TopologyParams};
use super::tree::{SpanTree, TreeNode};
use crate::geometry::{segment_clear, ConvexObstacle, Segment, Vec3};

/// Candidate relay spots: obstacle corners pushed slightly outward and
/// clamped into the workspace, plus `extra` uniform free samples.
fn candidates(obstacles: &[ConvexObstacle], params: &TopologyParams, extra: usize) -> Vec<Vec3> {
    let push = 1e-3 * params.workspace.diagonal().max(1.0);
    let (lo, hi) = (params.workspace.min, params.workspace.max);
    let mut out: Vec<Vec3> = Vec::new();
    for o in obstacles {
        if let Ok(g) = o.inflated(push) {
            for v in g.vertices() {
                let v = v.sup(&lo).inf(&hi);
                if in_free_space(&v, obstacles) && !out.contains(&v) {
                    out.push(v);
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x5EED_0F_B45E);
    let mut drawn = 0;
    while drawn < extra {
        let mut p = lo;
        for i in 0..3 {
            if hi[i] > lo[i] {
                p[i] = rng.gen_range(lo[i]..hi[i]);
            }
        }
        drawn += 1;
        if in_free_space(&p, obstacles) {
            out.push(p);
        }
    }
    out
}

/// Visibility-graph minimum spanning tree over the root and targets.
///
/// Terminals are joined by a Prim MST on shortest visibility-graph distances;
/// each MST edge is realised as its shortest path, the union is reduced to a
/// shortest-path tree from the root, non-terminal leaves are pruned, and every
/// edge longer than `link_range` is split evenly by relays.
pub fn mst_baseline(
    p_g: Vec3,
    targets: &[Vec3],
    obstacles: &[ConvexObstacle],
    params: &TopologyParams,
) -> Result<SpanTree, TopologyError> {
    if targets.is_empty() {
        return Err(TopologyError::NoTargets);
    }
    let terminals: Vec<Vec3> = std::iter::once(p_g).chain(targets.iter().copied()).collect();
    let mut points = terminals.clone();
    points.extend(candidates(obstacles, params, 4 * targets.len() + 16));

    let mut g: UnGraph<Vec3, f64> = UnGraph::new_undirected();
    let ids: Vec<NodeIndex> = points.iter().map(|p| g.add_node(*p)).collect();
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            if segment_clear(&Segment::new(points[i], points[j]), obstacles) {
                g.add_edge(ids[i], ids[j], (points[i] - points[j]).norm());
            }
        }
    }

    // metric closure over terminals
    let nt = terminals.len();
    let dist: Vec<_> = (0..nt).map(|t| dijkstra(&g, ids[t], None, |e| *e.weight())).collect();
    let unreachable: Vec<usize> = (1..nt).filter(|&t| !dist[0].contains_key(&ids[t])).map(|t| t - 1).collect();
    if !unreachable.is_empty() {
        return Err(TopologyError::Unreachable {
            targets: unreachable,
            attempts: 1,
        });
    }
    let mut closure: UnGraph<(), f64> = UnGraph::new_undirected();
    let cids: Vec<NodeIndex> = (0..nt).map(|_| closure.add_node(())).collect();
    for a in 0..nt {
        for b in (a + 1)..nt {
            closure.add_edge(cids[a], cids[b], dist[a][&ids[b]]);
        }
    }

    // union of realised shortest paths
    let mut used: BTreeSet<(usize, usize)> = BTreeSet::new();
    for el in min_spanning_tree(&closure) {
        if let Element::Edge { source, target, .. } = el {
            for w in shortest_path(&g, &dist[source], ids[source], ids[target]).windows(2) {
                let (x, y) = (w[0].index(), w[1].index());
                used.insert((x.min(y), x.max(y)));
            }
        }
    }
    let mut sub: UnGraph<(), f64> = UnGraph::new_undirected();
    let sids: Vec<NodeIndex> = (0..points.len()).map(|_| sub.add_node(())).collect();
    for &(x, y) in &used {
        sub.add_edge(sids[x], sids[y], (points[x] - points[y]).norm());
    }

    // shortest-path tree from the root over the union
    let from_root = dijkstra(&sub, sids[0], None, |e| *e.weight());
    let mut parent: Vec<Option<usize>> = vec![None; points.len()];
    for (&n, &d) in &from_root {
        if n == sids[0] {
            continue;
        }
        parent[n.index()] = sub
            .neighbors(n)
            .filter(|m| {
                from_root
                    .get(m)
                    .is_some_and(|dm| (dm + (points[m.index()] - points[n.index()]).norm() - d).abs() < 1e-9 * (1.0 + d))
            })
            .map(|m| m.index())
            .min();
    }
    let mut keep = vec![false; points.len()];
    for t in 0..nt {
        let mut cur = Some(t);
        while let Some(c) = cur {
            if keep[c] {
                break;
            }
            keep[c] = true;
            cur = parent[c];
        }
    }

    // emit in DFS order, subdividing long edges
    let mut kids: Vec<Vec<usize>> = vec![Vec::new(); points.len()];
    for (c, p) in parent.iter().enumerate() {
        if let (Some(p), true) = (p, keep[c]) {
            kids[*p].push(c);
        }
    }
    let mut nodes = vec![TreeNode {
        index: 0,
        position: p_g,
        parent: None,
    }];
    let mut slot = vec![usize::MAX; points.len()];
    slot[0] = 0;
    let mut stack = vec![0usize];
    while let Some(u) = stack.pop() {
        for &v in kids[u].iter().rev() {
            let (a, b) = (points[u], points[v]);
            let pieces = ((b - a).norm() / params.link_range).ceil().max(1.0) as usize;
            let mut prev = slot[u];
            for k in 1..=pieces {
                let index = nodes.len();
                let position = if k == pieces { b } else { a + (b - a) * (k as f64 / pieces as f64) };
                nodes.push(TreeNode {
                    index,
                    position,
                    parent: Some(prev),
                });
                prev = index;
            }
            slot[v] = prev;
            stack.push(v);
        }
    }
    let target_nodes = (1..nt).map(|t| slot[t]).collect();
    SpanTree::from_parts(nodes, target_nodes).map_err(|e| unreachable!("baseline tree malformed: {e}"))
}

fn shortest_path(
    g: &UnGraph<Vec3, f64>,
    dist: &std::collections::HashMap<NodeIndex, f64>,
    from: NodeIndex,
    to: NodeIndex,
) -> Vec<NodeIndex> {
    let mut out = vec![to];
    let mut cur = to;
    while cur != from {
        let d = dist[&cur];
        let prev = g
            .edges(cur)
            .filter_map(|e| {
                use petgraph::visit::EdgeRef;
                let m = if e.source() == cur { e.target() } else { e.source() };
                dist.get(&m)
                    .filter(|&&dm| (dm + e.weight() - d).abs() < 1e-9 * (1.0 + d))
                    .map(|_| m)
            })
            .min()
            .expect("dijkstra predecessor exists");
        out.push(prev);
        cur = prev;
    }
    out.reverse();
    out
}

#[cfg(test)]
mod tests {
    use super::super::{opt_tree, relay_count};
    use super::*;
    use crate::geometry::Workspace;

    fn params() -> TopologyParams {
        TopologyParams::new(
            150.0,
            Workspace::new(Vec3::new(-50.0, -300.0, 0.0), Vec3::new(400.0, 300.0, 100.0)),
        )
    }

    #[test]
    fn single_in_range_target_matches_opt_tree() {
        let pg = Vec3::new(0.0, 0.0, 50.0);
        let t = [Vec3::new(100.0, 20.0, 50.0)];
        let mst = mst_baseline(pg, &t, &[], &params()).unwrap();
        let (ours, _) = opt_tree(pg, &t, &[], &params()).unwrap();
        assert_eq!(mst.agent_count(), 1);
        assert_eq!(mst.nodes(), ours.nodes());
    }

    #[test]
    fn long_edges_are_split() {
        let pg = Vec3::new(0.0, 0.0, 50.0);
        let t = [Vec3::new(350.0, 0.0, 50.0)];
        let mst = mst_baseline(pg, &t, &[], &params()).unwrap();
        assert_eq!(relay_count(&mst), 2);
        assert!(mst.validate(&[], 150.0).is_empty());
    }

    #[test]
    fn routes_around_a_wall() {
        let pg = Vec3::new(0.0, 0.0, 50.0);
        let t = [Vec3::new(200.0, 0.0, 50.0)];
        let wall = ConvexObstacle::axis_box(Vec3::new(90.0, -60.0, 0.0), Vec3::new(110.0, 60.0, 100.0))
            .unwrap();
        let obstacles = [wall];
        let mst = mst_baseline(pg, &t, &obstacles, &params()).unwrap();
        assert!(mst.validate(&obstacles, 150.0).is_empty());
        assert!(relay_count(&mst) >= 1);
    }
}
