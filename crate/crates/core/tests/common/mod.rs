//! Independent reference computations used to freeze and cross-check values.
//! None of these share code paths with the library implementations.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relaymesh::solver::{rollout, AgentState, QcqpProblem, QuadObjective, StageBall, StageHalfspace};
use relaymesh::topology::{Budget, TopologyParams};
use relaymesh::{ConvexObstacle, Halfspace, Vec3, Workspace};

/// Hull-to-hull distance by enumerating every face pairing.
///
/// The closest pair of two polytopes lies on faces whose supporting vertex
/// subsets have at most four points in total (five when the hulls overlap).
/// Each candidate pairing is solved as an affine least-squares problem and
/// kept when its weights are valid.
pub fn enumerated_hull_distance(a: &[Vec3], b: &[Vec3]) -> f64 {
    let subsets_a = subsets_up_to(a.len(), 4);
    let subsets_b = subsets_up_to(b.len(), 4);
    let mut best = f64::INFINITY;
    for sa in &subsets_a {
        for sb in &subsets_b {
            if sa.len() + sb.len() > 5 {
                continue;
            }
            if let Some(d) = affine_pair_distance(a, sa, b, sb) {
                best = best.min(d);
            }
        }
    }
    best
}

fn subsets_up_to(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if !cur.is_empty() {
            out.push(cur.clone());
        }
        if cur.len() == k {
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

fn affine_pair_distance(a: &[Vec3], sa: &[usize], b: &[Vec3], sb: &[usize]) -> Option<f64> {
    // x = a0 + sum s_i (a_i - a0) - b0 - sum t_j (b_j - b0)
    let base = a[sa[0]] - b[sb[0]];
    let mut cols: Vec<Vec3> = sa[1..].iter().map(|&i| a[i] - a[sa[0]]).collect();
    cols.extend(sb[1..].iter().map(|&j| -(b[j] - b[sb[0]])));
    let k = cols.len();
    let coeffs: Vec<f64> = if k == 0 {
        vec![]
    } else {
        let m = DMatrix::from_fn(3, k, |r, c| cols[c][r]);
        let g = m.transpose() * &m;
        let rhs = -(m.transpose() * DVector::from_column_slice(base.as_slice()));
        let svd = g.clone().svd(true, true);
        let smax = svd.singular_values.max();
        if svd.singular_values.min() <= 1e-11 * smax.max(1e-300) {
            return None;
        }
        let sol = g.lu().solve(&rhs)?;
        sol.iter().copied().collect()
    };
    let na = sa.len() - 1;
    let wa: Vec<f64> = std::iter::once(1.0 - coeffs[..na].iter().sum::<f64>())
        .chain(coeffs[..na].iter().copied())
        .collect();
    let wb: Vec<f64> = std::iter::once(1.0 - coeffs[na..].iter().sum::<f64>())
        .chain(coeffs[na..].iter().copied())
        .collect();
    if wa.iter().chain(wb.iter()).any(|&w| w < -1e-10) {
        return None;
    }
    let pa: Vec3 = sa.iter().zip(&wa).map(|(&i, &w)| a[i] * w).sum();
    let pb: Vec3 = sb.iter().zip(&wb).map(|(&j, &w)| b[j] * w).sum();
    Some((pa - pb).norm())
}

/// Dense point-sampling distance between a segment and an axis box.
pub fn sampled_segment_box_distance(p: Vec3, q: Vec3, lo: Vec3, hi: Vec3, samples: usize) -> f64 {
    (0..=samples)
        .map(|i| {
            let x = p + (q - p) * (i as f64 / samples as f64);
            let c = x.sup(&lo).inf(&hi);
            (x - c).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Smallest grid value `g` in [0,1] with `pred(g)` true, step `step`.
pub fn grid_min_eta(pred: impl Fn(f64) -> bool, step: f64) -> f64 {
    let n = (1.0 / step).round() as usize;
    (0..=n)
        .map(|i| i as f64 * step)
        .find(|&e| pred(e))
        .unwrap_or(1.0)
}

/// Slab test: does segment p→q meet the closed box [lo, hi]?
pub fn segment_hits_box(p: Vec3, q: Vec3, lo: Vec3, hi: Vec3) -> bool {
    let d = q - p;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for i in 0..3 {
        if d[i].abs() < 1e-15 {
            if p[i] < lo[i] || p[i] > hi[i] {
                return false;
            }
        } else {
            let a = (lo[i] - p[i]) / d[i];
            let b = (hi[i] - p[i]) / d[i];
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

/// Fewest relays on `lattice` that connect the root (first terminal) and at
/// most two targets.
///
/// With three or fewer terminals the minimum Steiner tree in the unit-weight
/// visibility graph is a star around one hub vertex, so the optimum edge count
/// is the minimum over hubs of the summed BFS hop distances.
pub fn lattice_min_relays(terminals: &[Vec3], lattice: &[Vec3], boxes: &[(Vec3, Vec3)], d_c: f64) -> Option<usize> {
    assert!(terminals.len() <= 3);
    let pts: Vec<Vec3> = terminals.iter().chain(lattice).copied().collect();
    let n = pts.len();
    let link = |i: usize, j: usize| {
        (pts[i] - pts[j]).norm() <= d_c && !boxes.iter().any(|(lo, hi)| segment_hits_box(pts[i], pts[j], *lo, *hi))
    };
    let bfs = |src: usize| {
        let mut dist = vec![usize::MAX; n];
        dist[src] = 0;
        let mut queue = std::collections::VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if dist[v] == usize::MAX && link(u, v) {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    };
    let dists: Vec<Vec<usize>> = (0..terminals.len()).map(bfs).collect();
    let edges = (0..n)
        .filter_map(|v| {
            dists
                .iter()
                .map(|d| (d[v] != usize::MAX).then_some(d[v]))
                .sum::<Option<usize>>()
        })
        .min()?;
    // tree nodes = edges + 1, of which the terminals are not relays
    Some(edges + 1 - terminals.len())
}

/// Small control problem in the form the oracle understands: identity norm
/// weights, position halfspaces and balls, terminal rest.
pub struct OracleProblem {
    pub k: usize,
    pub h: f64,
    pub p0: Vec3,
    pub v0: Vec3,
    pub track: Vec<(f64, Vec3)>,
    pub smooth: Vec<f64>,
    /// (stage, normal, offset): n·p_stage >= offset
    pub halfspaces: Vec<(usize, Vec3, f64)>,
    /// (stage, center, radius)
    pub balls: Vec<(usize, Vec3, f64)>,
    pub v_max: f64,
    pub a_max: f64,
}

impl OracleProblem {
    /// Linear map weights: p_k = p0 + k h v0 + Σ_j w_kj u_j, from repeated stepping.
    fn pos_weights(&self, k: usize) -> Vec<f64> {
        // simulate unit impulses one control at a time
        (0..self.k)
            .map(|j| {
                let (mut p, mut v) = (0.0, 0.0);
                for s in 0..k {
                    let u = if s == j { 1.0 } else { 0.0 };
                    p += v * self.h + 0.5 * self.h * self.h * u;
                    v += self.h * u;
                }
                p
            })
            .collect()
    }

    fn vel_weights(&self, k: usize) -> Vec<f64> {
        (0..self.k).map(|j| if j < k { self.h } else { 0.0 }).collect()
    }

    fn apply(w: &[f64], u: &[Vec3]) -> Vec3 {
        w.iter().zip(u).map(|(a, b)| b * *a).sum()
    }

    pub fn positions(&self, u: &[Vec3]) -> Vec<Vec3> {
        (1..=self.k)
            .map(|k| self.p0 + self.v0 * (k as f64 * self.h) + Self::apply(&self.pos_weights(k), u))
            .collect()
    }

    pub fn objective(&self, u: &[Vec3]) -> f64 {
        let p = self.positions(u);
        let t: f64 = self.track.iter().zip(&p).map(|((w, r), x)| 0.5 * w * (x - r).norm_squared()).sum();
        let s: f64 = self.smooth.iter().zip(p.windows(2)).map(|(w, x)| 0.5 * w * (x[1] - x[0]).norm_squared()).sum();
        t + s
    }

    fn gradient(&self, u: &[Vec3]) -> Vec<Vec3> {
        let p = self.positions(u);
        let mut gp = vec![Vec3::zeros(); self.k];
        for (k, ((w, r), x)) in self.track.iter().zip(&p).enumerate() {
            gp[k] += (x - r) * *w;
        }
        for (k, w) in self.smooth.iter().enumerate() {
            let d = (p[k + 1] - p[k]) * *w;
            gp[k + 1] += d;
            gp[k] -= d;
        }
        (0..self.k)
            .map(|j| (1..=self.k).map(|k| gp[k - 1] * self.pos_weights(k)[j]).sum())
            .collect()
    }

    /// Projection of `u` onto {u : ‖W u − c‖ <= r} where W has weight vector `w`
    /// acting as a scaled identity on every control, so W Wᵀ = |w|² I.
    fn project_ball(w: &[f64], c: Vec3, r: f64, u: &mut [Vec3]) {
        let x = Self::apply(w, u);
        let d = x - c;
        let n = d.norm();
        if n <= r {
            return;
        }
        let s = w.iter().map(|a| a * a).sum::<f64>();
        let corr = d * ((1.0 - r / n) / s);
        for (ui, wi) in u.iter_mut().zip(w) {
            *ui -= corr * *wi;
        }
    }

    fn project_halfspace(w: &[f64], a: Vec3, lo: f64, u: &mut [Vec3]) {
        let val = a.dot(&Self::apply(w, u));
        if val >= lo {
            return;
        }
        let s = w.iter().map(|x| x * x).sum::<f64>() * a.norm_squared();
        let step = (lo - val) / s;
        for (ui, wi) in u.iter_mut().zip(w) {
            *ui += a * (step * wi);
        }
    }

    fn project_equality(w: &[f64], c: Vec3, u: &mut [Vec3]) {
        let d = Self::apply(w, u) - c;
        let s = w.iter().map(|x| x * x).sum::<f64>();
        for (ui, wi) in u.iter_mut().zip(w) {
            *ui -= d * (wi / s);
        }
    }

    /// Dykstra's alternating projections onto the intersection.
    pub fn project(&self, u: &[Vec3]) -> Vec<Vec3> {
        type Proj<'a> = Box<dyn Fn(&mut [Vec3]) + 'a>;
        let mut sets: Vec<Proj> = Vec::new();
        for &(k, a, b) in &self.halfspaces {
            let w = self.pos_weights(k);
            let lo = b - a.dot(&(self.p0 + self.v0 * (k as f64 * self.h)));
            sets.push(Box::new(move |u| Self::project_halfspace(&w, a, lo, u)));
        }
        for &(k, c, r) in &self.balls {
            let w = self.pos_weights(k);
            let c = c - (self.p0 + self.v0 * (k as f64 * self.h));
            sets.push(Box::new(move |u| Self::project_ball(&w, c, r, u)));
        }
        for k in 1..self.k {
            let w = self.vel_weights(k);
            let c = -self.v0;
            let r = self.v_max;
            sets.push(Box::new(move |u| Self::project_ball(&w, c, r, u)));
        }
        {
            let w = self.vel_weights(self.k);
            let c = -self.v0;
            sets.push(Box::new(move |u| Self::project_equality(&w, c, u)));
        }
        for j in 0..self.k {
            let mut w = vec![0.0; self.k];
            w[j] = 1.0;
            let r = self.a_max;
            sets.push(Box::new(move |u| Self::project_ball(&w, Vec3::zeros(), r, u)));
        }
        let mut x = u.to_vec();
        let mut incs = vec![vec![Vec3::zeros(); self.k]; sets.len()];
        for _ in 0..20_000 {
            let prev = x.clone();
            for (s, inc) in sets.iter().zip(incs.iter_mut()) {
                let mut y: Vec<Vec3> = x.iter().zip(inc.iter()).map(|(a, b)| a + b).collect();
                let before = y.clone();
                s(&mut y);
                for ((i, b), a) in inc.iter_mut().zip(&before).zip(&y) {
                    *i = b - a;
                }
                x = y;
            }
            let moved = x.iter().zip(&prev).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            if moved < 1e-13 {
                break;
            }
        }
        x
    }

    /// Projected gradient with a fixed step run until the iterate stalls.
    pub fn projected_gradient(&self, start: &[Vec3]) -> (Vec<Vec3>, f64) {
        // Lipschitz bound from the weight vectors
        let norm2: f64 = (1..=self.k)
            .map(|k| self.pos_weights(k).iter().map(|w| w * w).sum::<f64>())
            .sum();
        let wsum: f64 = self.track.iter().map(|t| t.0).sum::<f64>() + 4.0 * self.smooth.iter().sum::<f64>();
        let step = 1.0 / (wsum * norm2).max(1e-12);
        let mut u = self.project(start);
        for _ in 0..100_000 {
            let g = self.gradient(&u);
            let cand: Vec<Vec3> = u.iter().zip(&g).map(|(a, b)| a - b * step).collect();
            let next = self.project(&cand);
            let moved = next.iter().zip(&u).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            u = next;
            if moved < 1e-12 {
                break;
            }
        }
        let f = self.objective(&u);
        (u, f)
    }
}

fn unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if v.norm() > 0.1 && v.norm() < 1.0 {
            return v.normalize();
        }
    }
}

/// Random instance whose braking warm start is feasible.
pub fn random_instance(seed: u64, k: usize, n_half: usize, n_ball: usize) -> (QcqpProblem, OracleProblem) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 0.5;
    let a_max = 1.0;
    let v_max = 2.0;
    let p0 = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let v0 = unit(&mut rng) * rng.gen_range(0.0..0.6);
    let brake = -v0 / (k as f64 * h);
    let warm = vec![brake; k];
    let x0 = AgentState { p: p0, v: v0 };
    let wpos: Vec<Vec3> = rollout(&x0, &warm, h).iter().map(|s| s.p).collect();

    let mut halfspaces = Vec::new();
    for _ in 0..n_half {
        let stage = rng.gen_range(1..=k);
        let a = unit(&mut rng);
        let b = a.dot(&wpos[stage - 1]) - rng.gen_range(0.0..0.3);
        halfspaces.push((stage, a, b));
    }
    let mut balls = Vec::new();
    for _ in 0..n_ball {
        let stage = rng.gen_range(1..=k);
        let r = rng.gen_range(0.3..1.5);
        let c = wpos[stage - 1] + unit(&mut rng) * rng.gen_range(0.0..r);
        balls.push((stage, c, r));
    }
    let target = p0 + unit(&mut rng) * rng.gen_range(0.5..3.0);
    let mut track = vec![(0.0, Vec3::zeros()); k];
    track[k - 1] = (10.0, target);
    let smooth = vec![1.0; k - 1];

    let problem = QcqpProblem {
        horizon: k,
        h,
        x0,
        objective: QuadObjective {
            tracking: track.clone(),
            smoothing: smooth.clone(),
        },
        halfspaces: halfspaces
            .iter()
            .map(|&(stage, a, b)| StageHalfspace {
                stage,
                halfspace: Halfspace::new(a, b).unwrap(),
            })
            .collect(),
        balls: balls
            .iter()
            .map(|&(stage, center, radius)| StageBall { stage, center, radius })
            .collect(),
        v_max,
        a_max,
        theta_v: Matrix3::identity(),
        theta_a: Matrix3::identity(),
        terminal_rest: true,
        warm_start: warm,
    };
    let oracle = OracleProblem {
        k,
        h,
        p0,
        v0,
        track,
        smooth,
        halfspaces,
        balls,
        v_max,
        a_max,
    };
    (problem, oracle)
}

pub struct GridWorld {
    pub root: Vec3,
    pub targets: Vec<Vec3>,
    pub boxes: Vec<(Vec3, Vec3)>,
    pub lattice: Vec<Vec3>,
    pub d_c: f64,
}

/// Planar 12x12 world with axis boxes straddling the z = 0 plane.
pub fn grid_world(seed: u64) -> GridWorld {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d_c = 4.5;
    loop {
        let nb = rng.gen_range(2..=4);
        let boxes: Vec<(Vec3, Vec3)> = (0..nb)
            .map(|_| {
                let x = rng.gen_range(2.0..9.0);
                let y = rng.gen_range(2.0..9.0);
                let w = rng.gen_range(0.6..2.5);
                let l = rng.gen_range(0.6..5.0);
                let (w, l) = if rng.gen_bool(0.5) { (w, l) } else { (l, w) };
                (Vec3::new(x, y, -1.0), Vec3::new(x + w, y + l, 1.0))
            })
            .collect();
        let free = |p: &Vec3| {
            !boxes.iter().any(|(lo, hi)| {
                p.x >= lo.x - 0.05 && p.x <= hi.x + 0.05 && p.y >= lo.y - 0.05 && p.y <= hi.y + 0.05
            })
        };
        let root = Vec3::new(0.5, 0.5, 0.0);
        let nt = rng.gen_range(1..=2);
        let targets: Vec<Vec3> = (0..nt)
            .map(|_| Vec3::new(rng.gen_range(6.0..11.5), rng.gen_range(6.0..11.5), 0.0))
            .collect();
        if !free(&root) || !targets.iter().all(free) {
            continue;
        }
        let lattice: Vec<Vec3> = (0..=48)
            .flat_map(|i| (0..=48).map(move |j| Vec3::new(i as f64 * 0.25, j as f64 * 0.25, 0.0)))
            .filter(free)
            .collect();
        // keep worlds that actually need relays
        let direct = targets
            .iter()
            .all(|t| (t - root).norm() <= d_c && !boxes.iter().any(|(lo, hi)| segment_hits_box(root, *t, *lo, *hi)));
        if direct {
            continue;
        }
        return GridWorld {
            root,
            targets,
            boxes,
            lattice,
            d_c,
        };
    }
}

pub fn obstacles_of(boxes: &[(Vec3, Vec3)]) -> Vec<ConvexObstacle> {
    boxes
        .iter()
        .map(|(lo, hi)| ConvexObstacle::axis_box(*lo, *hi).unwrap())
        .collect()
}

pub fn grid_params(d_c: f64, seed: u64) -> TopologyParams {
    let mut p = TopologyParams::new(d_c, Workspace::new(Vec3::zeros(), Vec3::new(12.0, 12.0, 0.0)));
    p.budget = Budget::samples(3000);
    p.seed = seed;
    p
}
