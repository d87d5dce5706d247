//! Convex geometry primitives shared by every other module.
//!
//! Obstacles are convex polytopes kept in two synchronized forms: the vertex
//! list and an inward halfspace list (`a·p >= b` holds inside). Distances and
//! disjointness are computed over convex-combination weights of the vertex
//! sets with a GJK iteration, so no explicit hull enumeration is needed for
//! those queries.

mod gjk;
mod obstacle;

pub use gjk::{hull_proximity, Proximity};
pub use obstacle::{ConvexObstacle, Halfspace, Workspace};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A point or direction in the 3D workspace (meters).
pub type Vec3 = Vector3<f64>;

/// Tolerance used by all geometric predicates.
pub const EPS_GEO: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("obstacle needs at least 4 affinely independent vertices, got a degenerate set of {0}")]
    Degenerate(usize),
    #[error("negative inflation margin {0}")]
    NegativeMargin(f64),
    #[error("point sets are not disjoint (distance {distance:.3e}), no separating hyperplane exists")]
    NotSeparable { distance: f64 },
    #[error("empty point set")]
    EmptySet,
}

/// Straight segment between two points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub p: Vec3,
    pub q: Vec3,
}

impl Segment {
    pub fn new(p: Vec3, q: Vec3) -> Self {
        Self { p, q }
    }

    pub fn length(&self) -> f64 {
        (self.q - self.p).norm()
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.p + (self.q - self.p) * t
    }
}

/// Offsets every face of `obstacle` outward by `margin`.
pub fn inflate(obstacle: &ConvexObstacle, margin: f64) -> Result<ConvexObstacle, GeometryError> {
    obstacle.inflated(margin)
}

/// True iff the convex hulls of the two point sets are farther apart than
/// `clearance`. Exact ties count as not disjoint.
pub fn hulls_disjoint(points_a: &[Vec3], points_b: &[Vec3], clearance: f64) -> bool {
    if points_a.is_empty() || points_b.is_empty() {
        return true;
    }
    hull_proximity(points_a, points_b).distance > clearance + EPS_GEO
}

/// Maximum-margin separating plane between two point hulls.
///
/// Returns `(h, delta)` where every free point satisfies `h.a·p >= h.b + delta`
/// and every obstacle point satisfies `h.a·p <= h.b`. The plane passes through
/// the obstacle-side closest point, so `delta` is the hull-to-hull distance.
pub fn separating_hyperplane(
    free_points: &[Vec3],
    obstacle_points: &[Vec3],
) -> Result<(Halfspace, f64), GeometryError> {
    if free_points.is_empty() || obstacle_points.is_empty() {
        return Err(GeometryError::EmptySet);
    }
    let prox = hull_proximity(free_points, obstacle_points);
    if prox.distance <= EPS_GEO {
        return Err(GeometryError::NotSeparable {
            distance: prox.distance,
        });
    }
    let normal = (prox.point_a - prox.point_b) / prox.distance;
    // The closest points only fix the plane up to roundoff; take the tightest
    // offsets over the actual vertex sets so the certificate holds exactly.
    let b = obstacle_points
        .iter()
        .map(|q| normal.dot(q))
        .fold(f64::NEG_INFINITY, f64::max);
    let free_min = free_points
        .iter()
        .map(|p| normal.dot(p))
        .fold(f64::INFINITY, f64::min);
    let delta = free_min - b;
    if delta <= 0.0 {
        return Err(GeometryError::NotSeparable { distance: delta });
    }
    Ok((Halfspace::new_unchecked(normal, b), delta))
}

/// True iff the segment intersects none of the obstacles.
///
/// Each obstacle is tested with a parametric clip against its halfspaces;
/// touching within [`EPS_GEO`] counts as an intersection.
pub fn segment_clear(seg: &Segment, obstacles: &[ConvexObstacle]) -> bool {
    obstacles.iter().all(|o| !o.intersects_segment(seg))
}

/// Euclidean distance between a segment and an obstacle hull (0 if they meet).
pub fn segment_obstacle_distance(seg: &Segment, obstacle: &ConvexObstacle) -> f64 {
    if obstacle.intersects_segment(seg) {
        return 0.0;
    }
    hull_proximity(&[seg.p, seg.q], obstacle.vertices()).distance
}

/// Distance from a point to an obstacle hull (0 inside).
pub fn point_obstacle_distance(p: &Vec3, obstacle: &ConvexObstacle) -> f64 {
    if obstacle.contains(p) {
        return 0.0;
    }
    hull_proximity(std::slice::from_ref(p), obstacle.vertices()).distance
}
