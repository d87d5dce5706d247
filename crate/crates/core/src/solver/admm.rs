use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::{RowSet, Stacked};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmSettings {
    pub max_iter: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    /// Constraints are shrunk by this much so the iterate lands strictly inside.
    pub tighten: f64,
    pub adapt_every: usize,
    pub polish: bool,
}

impl Default for AdmmSettings {
    fn default() -> Self {
        Self {
            max_iter: 4000,
            eps_abs: 1e-8,
            eps_rel: 1e-8,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            tighten: 1e-6,
            adapt_every: 25,
            polish: true,
        }
    }
}

pub(crate) struct AdmmOutput {
    pub u: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
}

fn row_rho(sets: &[RowSet], rho: f64) -> DVector<f64> {
    let mut out = Vec::new();
    for s in sets {
        let r = match s {
            RowSet::Point { .. } => rho * 1e3,
            RowSet::Interval { lo, hi } if (hi - lo).abs() < 1e-12 => rho * 1e3,
            _ => rho,
        };
        out.extend(std::iter::repeat(r).take(s.rows()));
    }
    DVector::from_vec(out)
}

fn factor(
    p: &DMatrix<f64>,
    a: &DMatrix<f64>,
    rho: &DVector<f64>,
    sigma: f64,
) -> Option<Cholesky<f64, Dyn>> {
    let n = p.nrows();
    let mut k = p.clone() + DMatrix::<f64>::identity(n, n) * sigma;
    let ra = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * rho[i]);
    k += a.transpose() * ra;
    Cholesky::new(k)
}

fn project_all(sets: &[RowSet], z: &mut DVector<f64>) {
    let mut row = 0;
    for s in sets {
        let n = s.rows();
        s.project(&mut z.as_mut_slice()[row..row + n]);
        row += n;
    }
}

pub(crate) fn run(prob: &Stacked, u0: &DVector<f64>, st: &AdmmSettings) -> AdmmOutput {
    let sets: Vec<RowSet> = prob.sets.iter().map(|s| s.shrunk(st.tighten)).collect();
    let a = &prob.a;
    let at = a.transpose();
    let mut rho_scalar = st.rho;
    let mut rho = row_rho(&sets, rho_scalar);
    let Some(mut chol) = factor(&prob.p, a, &rho, st.sigma) else {
        return AdmmOutput {
            u: u0.clone(),
            converged: false,
            iterations: 0,
        };
    };

    let mut x = u0.clone();
    let mut z = a * &x;
    project_all(&sets, &mut z);
    let mut y = DVector::<f64>::zeros(a.nrows());
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=st.max_iter {
        iterations = it;
        let rhs = &x * st.sigma - &prob.q + &at * (rho.component_mul(&z) - &y);
        let xt = chol.solve(&rhs);
        let zt = a * &xt;
        let x_new = &xt * st.alpha + &x * (1.0 - st.alpha);
        let z_relax = &zt * st.alpha + &z * (1.0 - st.alpha);
        let mut z_new = &z_relax + y.component_div(&rho);
        project_all(&sets, &mut z_new);
        y += rho.component_mul(&(&z_relax - &z_new));
        x = x_new;
        z = z_new;

        if it % 5 == 0 || it == st.max_iter {
            let ax = a * &x;
            let px = &prob.p * &x;
            let aty = &at * &y;
            let r_prim = (&ax - &z).amax();
            let r_dual = (&px + &prob.q + &aty).amax();
            let prim_scale = ax.amax().max(z.amax());
            let dual_scale = px.amax().max(aty.amax()).max(prob.q.amax());
            if r_prim <= st.eps_abs + st.eps_rel * prim_scale
                && r_dual <= st.eps_abs + st.eps_rel * dual_scale
            {
                converged = true;
                break;
            }
            if st.adapt_every > 0 && it % st.adapt_every == 0 {
                let num = r_prim / prim_scale.max(1e-12);
                let den = r_dual / dual_scale.max(1e-12);
                let ratio = (num / den.max(1e-30)).sqrt();
                let cand = (rho_scalar * ratio).clamp(1e-6, 1e6);
                if cand > 5.0 * rho_scalar || cand < 0.2 * rho_scalar {
                    rho_scalar = cand;
                    rho = row_rho(&sets, rho_scalar);
                    match factor(&prob.p, a, &rho, st.sigma) {
                        Some(c) => chol = c,
                        None => break,
                    }
                }
            }
        }
    }

    if st.polish {
        if let Some(pol) = polish(prob, &sets, &x, &y, &z) {
            if prob.max_violation(&pol) <= prob.max_violation(&x).max(0.0) + 1e-12
                && prob.objective(&pol) <= prob.objective(&x) + 1e-12
            {
                x = pol;
            }
        }
    }
    AdmmOutput {
        u: x,
        converged,
        iterations,
    }
}

/// Equality-constrained QP on the guessed active set. Active balls are
/// linearised at the current `z`.
fn polish(
    prob: &Stacked,
    sets: &[RowSet],
    x: &DVector<f64>,
    y: &DVector<f64>,
    z: &DVector<f64>,
) -> Option<DVector<f64>> {
    let n = prob.p.nrows();
    let a = &prob.a;
    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut row = 0;
    for s in sets {
        let k = s.rows();
        match s {
            RowSet::Interval { lo, hi } => {
                let yi = y[row];
                if yi < -1e-9 {
                    rows.push(a.row(row).transpose());
                    rhs.push(*lo);
                } else if yi > 1e-9 && hi.is_finite() {
                    rows.push(a.row(row).transpose());
                    rhs.push(*hi);
                }
            }
            RowSet::Ball { center, radius } => {
                let zz = nalgebra::Vector3::new(z[row], z[row + 1], z[row + 2]);
                let yy = nalgebra::Vector3::new(y[row], y[row + 1], y[row + 2]);
                let d = zz - center;
                if yy.norm() > 1e-9 && d.norm() >= radius - 1e-9 && d.norm() > 0.0 {
                    let nrm = d / d.norm();
                    let r: DVector<f64> = (a.rows(row, 3).transpose() * nrm).into_owned();
                    rows.push(r);
                    rhs.push(nrm.dot(center) + radius);
                }
            }
            RowSet::Point { value } => {
                for d in 0..3 {
                    rows.push(a.row(row + d).transpose());
                    rhs.push(value[d]);
                }
            }
        }
        row += k;
    }
    let m = rows.len();
    if m > n {
        return None;
    }
    // KKT: [P  Cᵀ; C  0] [x; λ] = [-q; d], regularised
    let reg = 1e-10;
    let mut kkt = DMatrix::<f64>::zeros(n + m, n + m);
    kkt.view_mut((0, 0), (n, n)).copy_from(&prob.p);
    for i in 0..n {
        kkt[(i, i)] += reg;
    }
    for (r, v) in rows.iter().enumerate() {
        for j in 0..n {
            kkt[(n + r, j)] = v[j];
            kkt[(j, n + r)] = v[j];
        }
        kkt[(n + r, n + r)] = -reg;
    }
    let mut b = DVector::<f64>::zeros(n + m);
    b.rows_mut(0, n).copy_from(&(-&prob.q));
    for (r, v) in rhs.iter().enumerate() {
        b[n + r] = *v;
    }
    let lu = kkt.clone().lu();
    let mut sol = lu.solve(&b)?;
    for _ in 0..3 {
        let res = &b - &kkt * &sol;
        sol += lu.solve(&res)?;
    }
    let out = sol.rows(0, n).into_owned();
    if out.iter().any(|v| !v.is_finite()) || (&out - x).amax() > 1e3 * (1.0 + x.amax()) {
        return None;
    }
    Some(out)
}
