//! Per-agent constraint builders: MBVC halfspaces, obstacle corridors,
//! connectivity balls and line-of-sight safe zones, all built around the
//! extended predetermined trajectory so that it stays feasible.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    hull_proximity, hulls_disjoint, separating_hyperplane, segment_clear, ConvexObstacle,
    GeometryError, Halfspace, Segment, Vec3, EPS_GEO,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstraintError {
    #[error("agents {0} and {1} share a predetermined position")]
    Coincident(usize, usize),
    #[error("trajectory point {point:?} lies inside obstacle {obstacle}")]
    InsideObstacle { point: [f64; 3], obstacle: usize },
    #[error("bisection predicate is false at 1")]
    Infeasible,
    #[error("line of sight between {0:?} and {1:?} is blocked")]
    Blocked([f64; 3], [f64; 3]),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn arr(p: &Vec3) -> [f64; 3] {
    [p.x, p.y, p.z]
}

/// Last tick's plan shifted by one step: `p̄_k = p_{k+1}`, `p̄_K = p_K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredeterminedTrajectory {
    pub owner: usize,
    pub tick: u64,
    pub positions: Vec<Vec3>,
}

impl PredeterminedTrajectory {
    /// Every entry at the initial position.
    pub fn initial(owner: usize, p: Vec3, horizon: usize) -> Self {
        Self {
            owner,
            tick: 0,
            positions: vec![p; horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.positions.len()
    }

    /// `p̄_{K+1}` appended.
    pub fn extended(&self, target: Vec3) -> ExtendedPredeterminedTrajectory {
        let mut positions = self.positions.clone();
        positions.push(target);
        ExtendedPredeterminedTrajectory { positions }
    }
}

/// The predetermined trajectory with the intermediate target appended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedPredeterminedTrajectory {
    pub positions: Vec<Vec3>,
}

impl ExtendedPredeterminedTrajectory {
    /// `p̄_k`, 1-based, `k` in `1..=K+1`.
    pub fn at(&self, k: usize) -> Vec3 {
        self.positions[k - 1]
    }

    pub fn horizon(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn target(&self) -> Vec3 {
        *self.positions.last().expect("non-empty")
    }
}

/// `r'_min = sqrt(4 r² + h² v_max²)`.
pub fn min_buffer(r: f64, h: f64, v_max: f64) -> f64 {
    (4.0 * r * r + h * h * v_max * v_max).sqrt()
}

/// Buffered bisector between two predetermined positions, feasible side
/// toward `p_i`.
pub fn mbvc_halfspace(
    p_i: &Vec3,
    p_j: &Vec3,
    r_a: f64,
    h: f64,
    v_max: f64,
) -> Result<Halfspace, ConstraintError> {
    let d = p_i - p_j;
    let n = d.norm();
    if n <= EPS_GEO {
        return Err(ConstraintError::Coincident(0, 1));
    }
    let a = d / n;
    let b = a.dot(&((p_i + p_j) * 0.5)) + min_buffer(r_a, h, v_max) / 2.0;
    Ok(Halfspace { a, b })
}

fn cull(obstacles: &[ConvexObstacle], points: &[Vec3], radius: Option<f64>) -> Vec<usize> {
    let Some(radius) = radius else {
        return (0..obstacles.len()).collect();
    };
    let center = points.iter().sum::<Vec3>() / points.len() as f64;
    let spread = points.iter().map(|p| (p - center).norm()).fold(0.0, f64::max);
    obstacles
        .iter()
        .enumerate()
        .filter(|(_, o)| {
            let c = o.centroid();
            let r = o.vertices().iter().map(|v| (v - c).norm()).fold(0.0, f64::max);
            (c - center).norm() - r - spread <= radius
        })
        .map(|(i, _)| i)
        .collect()
}

/// One separating-plane list per consecutive pair of `points`.
///
/// Each plane keeps both points of its pair on the free side and is tightened
/// by `min(margin, δ)` so the obstacle sits strictly beyond it.
pub fn build_corridor(
    points: &[Vec3],
    inflated: &[ConvexObstacle],
    cull_radius: Option<f64>,
    margin: f64,
) -> Result<Vec<Vec<Halfspace>>, ConstraintError> {
    let mut out = Vec::with_capacity(points.len().saturating_sub(1));
    for w in points.windows(2) {
        let mut planes = Vec::new();
        for oi in cull(inflated, w, cull_radius) {
            let o = &inflated[oi];
            for p in w {
                if o.contains(p) {
                    return Err(ConstraintError::InsideObstacle {
                        point: arr(p),
                        obstacle: oi,
                    });
                }
            }
            let (h, delta) = separating_hyperplane(w, o.vertices())?;
            planes.push(h.tightened(margin.min(delta)));
        }
        out.push(planes);
    }
    Ok(out)
}

/// Index on `path` of the furthest waypoint such that the hull of the
/// waypoints from `previous` up to it, plus `tail`, stays farther than
/// `clearance` from every obstacle.
pub fn update_intermediate_target(
    path: &[Vec3],
    previous: usize,
    tail: &Vec3,
    inflated: &[ConvexObstacle],
    clearance: f64,
) -> usize {
    let mut best = previous;
    let mut hull = vec![*tail, path[previous]];
    for (j, w) in path.iter().enumerate().skip(previous + 1) {
        hull.push(*w);
        if inflated.iter().all(|o| hulls_disjoint(&hull, o.vertices(), clearance)) {
            best = j;
        } else {
            break;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterCase {
    Far,
    Close,
    Medium,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterChoice {
    pub center: Vec3,
    pub case: CenterCase,
    pub eta: f64,
}

pub const ETA_TOL: f64 = 1e-4;

/// Smallest `η` in `[0, 1]` with `feasible(η)`, for a monotone predicate.
pub fn bisect_min_eta(feasible: impl Fn(f64) -> bool, tol: f64) -> Result<f64, ConstraintError> {
    if feasible(0.0) {
        return Ok(0.0);
    }
    if !feasible(1.0) {
        return Err(ConstraintError::Infeasible);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..30 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Center of the shared connectivity ball for an edge at one stage.
///
/// Far pairs (separation above `d_w`) use the midpoint; pairs whose four
/// current and next points fit within `d_w / 2` of their mean use the mean;
/// otherwise the center slides from the mean toward the midpoint just far
/// enough to keep both current points within `d_w / 2`.
pub fn connectivity_center(
    p_ik: &Vec3,
    p_jk: &Vec3,
    p_ik1: &Vec3,
    p_jk1: &Vec3,
    d_w: f64,
) -> CenterChoice {
    let mid = (p_ik + p_jk) * 0.5;
    if (p_ik - p_jk).norm() > d_w {
        return CenterChoice {
            center: mid,
            case: CenterCase::Far,
            eta: 1.0,
        };
    }
    let mean = (p_ik + p_jk + p_ik1 + p_jk1) * 0.25;
    let half = d_w / 2.0;
    if [p_ik, p_jk, p_ik1, p_jk1].iter().all(|p| (*p - mean).norm() <= half) {
        return CenterChoice {
            center: mean,
            case: CenterCase::Close,
            eta: 0.0,
        };
    }
    let blend = |eta: f64| mid * eta + mean * (1.0 - eta);
    let feasible = |eta: f64| {
        let c = blend(eta);
        (p_ik - c).norm() <= half && (p_jk - c).norm() <= half
    };
    // separation <= d_w makes η = 1 feasible
    let eta = bisect_min_eta(feasible, ETA_TOL).unwrap_or(1.0);
    CenterChoice {
        center: blend(eta),
        case: CenterCase::Medium,
        eta,
    }
}

/// Intermediate waypoints for the LOS zone of an edge at one stage.
///
/// Returns `(q_i, q_j, η*)` with `q = η* p̄_k + (1 − η*) p̄_{k+1}` and `η*` the
/// smallest blend keeping the hull of `{p̄_k^i, p̄_k^j, q_i, q_j}` clear of
/// the margin-inflated obstacles. `η = 1` collapses the hull to the current
/// segment. The hull must keep `clearance`, capped at half the clearance of
/// the current segment.
pub fn los_waypoints(
    p_ik: &Vec3,
    p_jk: &Vec3,
    p_ik1: &Vec3,
    p_jk1: &Vec3,
    inflated: &[ConvexObstacle],
    clearance: f64,
) -> Result<(Vec3, Vec3, f64), ConstraintError> {
    if !segment_clear(&Segment::new(*p_ik, *p_jk), inflated) {
        return Err(ConstraintError::Blocked(arr(p_ik), arr(p_jk)));
    }
    let seg = [*p_ik, *p_jk];
    let current = inflated
        .iter()
        .map(|o| hull_proximity(&seg, o.vertices()).distance)
        .fold(f64::INFINITY, f64::min);
    if current <= 2.0 * EPS_GEO {
        return Err(ConstraintError::Blocked(arr(p_ik), arr(p_jk)));
    }
    let clearance = clearance.min(0.5 * current);
    let blend = |eta: f64| (p_ik * eta + p_ik1 * (1.0 - eta), p_jk * eta + p_jk1 * (1.0 - eta));
    let feasible = |eta: f64| {
        let (qi, qj) = blend(eta);
        let hull = [*p_ik, *p_jk, qi, qj];
        inflated.iter().all(|o| hulls_disjoint(&hull, o.vertices(), clearance))
    };
    let eta = bisect_min_eta(feasible, ETA_TOL)?;
    let (qi, qj) = blend(eta);
    Ok((qi, qj, eta))
}

/// Safe-zone halfspaces around `free`, nearest obstacle first.
///
/// Obstacles whose every vertex already lies at least `margin` beyond one
/// emitted plane are skipped. Each emitted plane is tightened by
/// `min(margin, δ)`.
pub fn los_safe_zone(
    free: &[Vec3],
    inflated: &[ConvexObstacle],
    cull_radius: Option<f64>,
    margin: f64,
) -> Result<Vec<Halfspace>, ConstraintError> {
    let mut order: Vec<(f64, usize)> = cull(inflated, free, cull_radius)
        .into_iter()
        .map(|i| (hull_proximity(free, inflated[i].vertices()).distance, i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out: Vec<Halfspace> = Vec::new();
    for (_, i) in order {
        let verts = inflated[i].vertices();
        let excluded = out
            .iter()
            .any(|h| verts.iter().all(|v| h.slack(v) <= -margin));
        if excluded {
            continue;
        }
        let (h, delta) = separating_hyperplane(free, verts)?;
        out.push(h.tightened(margin.min(delta)));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec3,
    pub radius: f64,
}

/// Constraints on one stage of one agent's plan.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageConstraints {
    pub mbvc: Vec<Halfspace>,
    pub corridor: Vec<Halfspace>,
    pub balls: Vec<Ball>,
    pub los: Vec<Halfspace>,
}

impl StageConstraints {
    pub fn halfspaces(&self) -> impl Iterator<Item = &Halfspace> {
        self.mbvc.iter().chain(&self.corridor).chain(&self.los)
    }

    pub fn len(&self) -> usize {
        self.mbvc.len() + self.corridor.len() + self.balls.len() + self.los.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Everything one agent must satisfy this tick, indexed by stage `1..=K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub owner: usize,
    pub tick: u64,
    pub stages: Vec<StageConstraints>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConstraintCounts {
    pub mbvc: usize,
    pub corridor: usize,
    pub balls: usize,
    pub los: usize,
}

impl ConstraintSet {
    pub fn new(owner: usize, tick: u64, horizon: usize) -> Self {
        Self {
            owner,
            tick,
            stages: vec![StageConstraints::default(); horizon],
        }
    }

    pub fn stage_mut(&mut self, k: usize) -> &mut StageConstraints {
        &mut self.stages[k - 1]
    }

    pub fn counts(&self) -> ConstraintCounts {
        let mut c = ConstraintCounts::default();
        for s in &self.stages {
            c.mbvc += s.mbvc.len();
            c.corridor += s.corridor.len();
            c.balls += s.balls.len();
            c.los += s.los.len();
        }
        c
    }

    /// Largest violation by `points[k-1]` of any stage-`k` constraint.
    pub fn max_violation(&self, points: &[Vec3]) -> f64 {
        let mut worst = 0.0f64;
        for (s, p) in self.stages.iter().zip(points) {
            for h in s.halfspaces() {
                worst = worst.max(-h.slack(p));
            }
            for b in &s.balls {
                worst = worst.max((p - b.center).norm() - b.radius);
            }
        }
        worst
    }

    /// Drops halfspaces that cannot bind for any point within `reach[k-1]` of
    /// `anchor[k-1]`.
    pub fn prune(&mut self, anchor: &[Vec3], reach: &[f64]) {
        for ((s, c), r) in self.stages.iter_mut().zip(anchor).zip(reach) {
            let keep = |h: &Halfspace| h.slack(c) - r <= 0.0;
            s.mbvc.retain(keep);
            s.corridor.retain(keep);
            s.los.retain(keep);
            s.balls.retain(|b| (c - b.center).norm() + r > b.radius);
        }
    }
}
