use serde::{Deserialize, Serialize};

use super::{GeometryError, Segment, Vec3, EPS_GEO};

/// Linear constraint `a·p >= b` with a unit normal `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub a: Vec3,
    pub b: f64,
}

impl Halfspace {
    /// Builds a halfspace from any non-zero normal, rescaling so `|a| = 1`.
    pub fn new(a: Vec3, b: f64) -> Option<Self> {
        let n = a.norm();
        if !(n > 0.0) || !n.is_finite() {
            return None;
        }
        Some(Self { a: a / n, b: b / n })
    }

    pub(crate) fn new_unchecked(a: Vec3, b: f64) -> Self {
        Self { a, b }
    }

    /// `a·p - b`; non-negative on the feasible side.
    #[inline]
    pub fn slack(&self, p: &Vec3) -> f64 {
        self.a.dot(p) - self.b
    }

    #[inline]
    pub fn contains(&self, p: &Vec3, tol: f64) -> bool {
        self.slack(p) >= -tol
    }

    /// Same plane with the feasible side tightened by `margin`.
    pub fn tightened(&self, margin: f64) -> Self {
        Self {
            a: self.a,
            b: self.b + margin,
        }
    }
}

/// Axis-aligned workspace bounds. A zero-thickness axis makes the world planar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub min: Vec3,
    pub max: Vec3,
}

impl Workspace {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] - EPS_GEO && p[i] <= self.max[i] + EPS_GEO)
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    pub fn clamp(&self, p: &Vec3) -> Vec3 {
        Vec3::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
            p.z.clamp(self.min.z, self.max.z),
        )
    }

    /// Axes with non-zero extent.
    pub fn free_axes(&self) -> [bool; 3] {
        [
            self.max.x > self.min.x,
            self.max.y > self.min.y,
            self.max.z > self.min.z,
        ]
    }

    pub fn dimension(&self) -> usize {
        self.free_axes().iter().filter(|&&f| f).count()
    }

    pub fn volume(&self) -> f64 {
        let ext = self.max - self.min;
        self.free_axes()
            .iter()
            .zip(ext.iter())
            .filter(|(f, _)| **f)
            .map(|(_, e)| *e)
            .product()
    }
}

/// Convex polytope obstacle: vertex list plus inward halfspaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ObstacleRepr", into = "ObstacleRepr")]
pub struct ConvexObstacle {
    vertices: Vec<Vec3>,
    halfspaces: Vec<Halfspace>,
}

#[derive(Serialize, Deserialize)]
struct ObstacleRepr {
    vertices: Vec<Vec3>,
}

impl TryFrom<ObstacleRepr> for ConvexObstacle {
    type Error = GeometryError;
    fn try_from(r: ObstacleRepr) -> Result<Self, Self::Error> {
        ConvexObstacle::from_vertices(r.vertices)
    }
}

impl From<ConvexObstacle> for ObstacleRepr {
    fn from(o: ConvexObstacle) -> Self {
        ObstacleRepr {
            vertices: o.vertices,
        }
    }
}

fn scale_of(points: &[Vec3]) -> f64 {
    points.iter().map(|p| p.amax()).fold(1.0, f64::max)
}

impl ConvexObstacle {
    /// Hull of `vertices`; faces are recovered by plane enumeration.
    pub fn from_vertices(vertices: Vec<Vec3>) -> Result<Self, GeometryError> {
        let n = vertices.len();
        if n < 4 || vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::Degenerate(n));
        }
        let tol = 1e-9 * scale_of(&vertices);
        let mut faces: Vec<Halfspace> = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                for k in (j + 1)..n {
                    let normal = (vertices[j] - vertices[i]).cross(&(vertices[k] - vertices[i]));
                    let len = normal.norm();
                    if len <= tol * tol.max(1.0) * 10.0 {
                        continue;
                    }
                    let normal = normal / len;
                    let d = normal.dot(&vertices[i]);
                    let mut above = false;
                    let mut below = false;
                    for v in &vertices {
                        let s = normal.dot(v) - d;
                        above |= s > tol;
                        below |= s < -tol;
                        if above && below {
                            break;
                        }
                    }
                    let inward = match (above, below) {
                        (true, true) => continue,
                        // all vertices on the `normal·p >= d` side
                        (true, false) => Halfspace::new_unchecked(normal, d),
                        (false, true) => Halfspace::new_unchecked(-normal, -d),
                        // every vertex coplanar
                        (false, false) => return Err(GeometryError::Degenerate(n)),
                    };
                    if !faces.iter().any(|f| same_plane(f, &inward, tol)) {
                        faces.push(inward);
                    }
                }
            }
        }
        if faces.len() < 4 {
            return Err(GeometryError::Degenerate(n));
        }
        Ok(Self {
            vertices,
            halfspaces: faces,
        })
    }

    /// Axis-aligned box obstacle between two corners.
    pub fn axis_box(lo: Vec3, hi: Vec3) -> Result<Self, GeometryError> {
        let mut v = Vec::with_capacity(8);
        for &x in &[lo.x, hi.x] {
            for &y in &[lo.y, hi.y] {
                for &z in &[lo.z, hi.z] {
                    v.push(Vec3::new(x, y, z));
                }
            }
        }
        Self::from_vertices(v)
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn halfspaces(&self) -> &[Halfspace] {
        &self.halfspaces
    }

    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    pub fn centroid(&self) -> Vec3 {
        self.vertices.iter().sum::<Vec3>() / self.vertices.len() as f64
    }

    /// Inside or on the boundary (within [`EPS_GEO`]).
    pub fn contains(&self, p: &Vec3) -> bool {
        self.halfspaces.iter().all(|h| h.slack(p) >= -EPS_GEO)
    }

    /// Shifts each face outward by `margin` and recomputes the vertices.
    pub fn inflated(&self, margin: f64) -> Result<Self, GeometryError> {
        if margin < 0.0 || !margin.is_finite() {
            return Err(GeometryError::NegativeMargin(margin));
        }
        if margin == 0.0 {
            return Ok(self.clone());
        }
        let halfspaces: Vec<Halfspace> = self
            .halfspaces
            .iter()
            .map(|h| Halfspace::new_unchecked(h.a, h.b - margin))
            .collect();
        let vertices = enumerate_vertices(&halfspaces, scale_of(&self.vertices) + margin);
        if vertices.len() < 4 {
            return Err(GeometryError::Degenerate(vertices.len()));
        }
        Ok(Self {
            vertices,
            halfspaces,
        })
    }

    /// Parametric clip of the segment against the halfspaces.
    pub fn intersects_segment(&self, seg: &Segment) -> bool {
        let d = seg.q - seg.p;
        let mut t0 = 0.0f64;
        let mut t1 = 1.0f64;
        for h in &self.halfspaces {
            // need h.a·(p + t d) >= h.b - eps
            let s0 = h.slack(&seg.p) + EPS_GEO;
            let rate = h.a.dot(&d);
            if rate.abs() < 1e-15 {
                if s0 < 0.0 {
                    return false;
                }
                continue;
            }
            let t = -s0 / rate;
            if rate > 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}

fn same_plane(a: &Halfspace, b: &Halfspace, tol: f64) -> bool {
    (a.a - b.a).norm() < 1e-9 && (a.b - b.b).abs() < tol.max(1e-12) * 10.0
}

fn enumerate_vertices(halfspaces: &[Halfspace], scale: f64) -> Vec<Vec3> {
    let tol = 1e-9 * scale.max(1.0);
    let mut out: Vec<Vec3> = Vec::new();
    let m = halfspaces.len();
    for i in 0..m {
        for j in (i + 1)..m {
            for k in (j + 1)..m {
                let mat = nalgebra::Matrix3::from_rows(&[
                    halfspaces[i].a.transpose(),
                    halfspaces[j].a.transpose(),
                    halfspaces[k].a.transpose(),
                ]);
                if mat.determinant().abs() < 1e-10 {
                    continue;
                }
                let rhs = Vec3::new(halfspaces[i].b, halfspaces[j].b, halfspaces[k].b);
                let Some(p) = mat.lu().solve(&rhs) else {
                    continue;
                };
                if halfspaces.iter().all(|h| h.slack(&p) >= -tol)
                    && !out.iter().any(|q| (q - p).norm() < tol * 10.0)
                {
                    out.push(p);
                }
            }
        }
    }
    out
}
