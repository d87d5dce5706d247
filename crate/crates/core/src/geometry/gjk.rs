use nalgebra::{Matrix3, Vector3};

use super::Vec3;

/// Closest pair between two point hulls.
#[derive(Debug, Clone, Copy)]
pub struct Proximity {
    pub distance: f64,
    /// Closest point in the hull of the first set.
    pub point_a: Vec3,
    /// Closest point in the hull of the second set.
    pub point_b: Vec3,
}

#[derive(Clone, Copy)]
struct Support {
    w: Vec3,
    ia: usize,
    ib: usize,
}

fn support(points: &[Vec3], dir: &Vec3) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, p) in points.iter().enumerate() {
        let v = p.dot(dir);
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    best
}

/// Minimum distance between conv(a) and conv(b) by GJK over the Minkowski
/// difference, carrying barycentric weights to recover the witness points.
pub fn hull_proximity(a: &[Vec3], b: &[Vec3]) -> Proximity {
    assert!(!a.is_empty() && !b.is_empty(), "hull_proximity on empty set");
    let scale = a
        .iter()
        .chain(b.iter())
        .map(|p| p.amax())
        .fold(1.0, f64::max);
    let mut simplex: Vec<Support> = vec![Support {
        w: a[0] - b[0],
        ia: 0,
        ib: 0,
    }];
    let mut weights: Vec<f64> = vec![1.0];
    let mut v = simplex[0].w;

    for _ in 0..128 {
        let vv = v.norm_squared();
        if vv <= (1e-14 * scale).powi(2) {
            break;
        }
        let ia = support(a, &-v);
        let ib = support(b, &v);
        let w = a[ia] - b[ib];
        // duality gap: |v|^2 - v·w bounds |v| - dist
        if vv - v.dot(&w) <= 1e-13 * vv.max(scale * 1e-6) {
            break;
        }
        if simplex.iter().any(|s| s.ia == ia && s.ib == ib) {
            break;
        }
        simplex.push(Support { w, ia, ib });
        let (new_v, kept, lambda) = closest_on_simplex(&simplex);
        if new_v.norm_squared() >= vv {
            // no progress; keep the previous simplex
            simplex.pop();
            break;
        }
        simplex = kept.iter().map(|&i| simplex[i]).collect();
        weights = lambda;
        v = new_v;
        if simplex.len() == 4 {
            // a full tetrahedron encloses the origin
            break;
        }
    }

    let mut pa = Vec3::zeros();
    let mut pb = Vec3::zeros();
    for (s, l) in simplex.iter().zip(weights.iter()) {
        pa += a[s.ia] * *l;
        pb += b[s.ib] * *l;
    }
    Proximity {
        distance: (pa - pb).norm(),
        point_a: pa,
        point_b: pb,
    }
}

/// Closest point to the origin on the hull of at most four simplex points.
///
/// Every non-empty subset is tried; the affine minimizer is accepted when its
/// barycentric weights are non-negative. Returns the point, the kept indices
/// and their weights.
fn closest_on_simplex(s: &[Support]) -> (Vec3, Vec<usize>, Vec<f64>) {
    let n = s.len();
    let mut best: Option<(f64, Vec3, Vec<usize>, Vec<f64>)> = None;
    for mask in 1u32..(1 << n) {
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let Some(lambda) = affine_minimizer(s, &idx) else {
            continue;
        };
        if lambda.iter().any(|&l| l < -1e-12) {
            continue;
        }
        let lambda: Vec<f64> = {
            let clipped: Vec<f64> = lambda.iter().map(|l| l.max(0.0)).collect();
            let sum: f64 = clipped.iter().sum();
            clipped.iter().map(|l| l / sum).collect()
        };
        let p: Vec3 = idx
            .iter()
            .zip(lambda.iter())
            .map(|(&i, &l)| s[i].w * l)
            .sum();
        let d = p.norm_squared();
        if best.as_ref().map_or(true, |b| d < b.0) {
            best = Some((d, p, idx, lambda));
        }
    }
    let (_, p, idx, lambda) = best.expect("singletons are always valid");
    (p, idx, lambda)
}

/// Weights minimizing |sum l_i w_i| subject to sum l_i = 1 (no sign constraint).
fn affine_minimizer(s: &[Support], idx: &[usize]) -> Option<Vec<f64>> {
    let m = idx.len();
    if m == 1 {
        return Some(vec![1.0]);
    }
    let base = s[idx[0]].w;
    let dirs: Vec<Vec3> = idx[1..].iter().map(|&i| s[i].w - base).collect();
    let k = dirs.len();
    // normal equations G t = -D^T base, G = D^T D
    let mut g = Matrix3::<f64>::identity();
    let mut rhs = Vector3::<f64>::zeros();
    for r in 0..k {
        for c in 0..k {
            g[(r, c)] = dirs[r].dot(&dirs[c]);
        }
        rhs[r] = -dirs[r].dot(&base);
    }
    let scale = dirs.iter().map(|d| d.norm_squared()).fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    let sub = g.fixed_view::<3, 3>(0, 0).clone_owned();
    let t = match k {
        1 => {
            if sub[(0, 0)] <= 1e-14 * scale {
                return None;
            }
            Vector3::new(rhs[0] / sub[(0, 0)], 0.0, 0.0)
        }
        2 => {
            let m2 = nalgebra::Matrix2::new(sub[(0, 0)], sub[(0, 1)], sub[(1, 0)], sub[(1, 1)]);
            if m2.determinant().abs() <= 1e-12 * scale * scale {
                return None;
            }
            let sol = m2.lu().solve(&nalgebra::Vector2::new(rhs[0], rhs[1]))?;
            Vector3::new(sol[0], sol[1], 0.0)
        }
        _ => {
            if sub.determinant().abs() <= 1e-12 * scale * scale * scale {
                return None;
            }
            sub.lu().solve(&rhs)?
        }
    };
    let mut lambda = Vec::with_capacity(m);
    lambda.push(1.0 - (0..k).map(|i| t[i]).sum::<f64>());
    lambda.extend((0..k).map(|i| t[i]));
    Some(lambda)
}
