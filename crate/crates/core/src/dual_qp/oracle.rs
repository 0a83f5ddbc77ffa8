//! Primal log-barrier solver for the same subproblems. It shares no code with
//! the dual method and serves as its reference.

use nalgebra::{DMatrix, DVector};

use super::{QpMode, QuadraticSubproblem};
use crate::error::{Result, ThpError};

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub x: DVector<f64>,
    /// `fbar_0(x)` in objective mode, `nu` in feasibility mode.
    pub value: f64,
    /// Smallest achievable `max_j fbar_j` over the box.
    pub nu: f64,
    /// Objective mode only: whether a strictly feasible point exists.
    pub feasible: bool,
}

type Eval = (f64, DVector<f64>, DMatrix<f64>);

fn row_parts(qp: &QuadraticSubproblem, j: usize, x: &DVector<f64>) -> (f64, DVector<f64>) {
    let y = x - &qp.center;
    let v = qp.values[j] + qp.u.row(j).transpose().dot(&y) + qp.tau[j] * y.norm_squared();
    let g = qp.u.row(j).transpose() + &y * (2.0 * qp.tau[j]);
    (v, g)
}

fn add_box(qp: &QuadraticSubproblem, x: &DVector<f64>, f: &mut f64, g: &mut DVector<f64>, h: &mut DMatrix<f64>) -> bool {
    for i in 0..x.len() {
        let (a, b) = (x[i] - qp.bounds.lower[i], qp.bounds.upper[i] - x[i]);
        if !(a > 0.0 && b > 0.0) {
            return false;
        }
        *f -= a.ln() + b.ln();
        g[i] += -1.0 / a + 1.0 / b;
        h[(i, i)] += 1.0 / (a * a) + 1.0 / (b * b);
    }
    true
}

/// `t nu - sum log(nu - fbar_j) - box`, variables `(x, nu)`.
fn feas_barrier(qp: &QuadraticSubproblem, z: &DVector<f64>, t: f64) -> Option<Eval> {
    let n = qp.dim();
    let x = z.rows(0, n).into_owned();
    let nu = z[n];
    let mut f = t * nu;
    let mut g = DVector::zeros(n + 1);
    let mut h = DMatrix::zeros(n + 1, n + 1);
    g[n] = t;
    for j in 1..qp.tau.len() {
        let (v, gj) = row_parts(qp, j, &x);
        let s = nu - v;
        if !(s > 0.0) {
            return None;
        }
        f -= s.ln();
        for i in 0..n {
            g[i] += gj[i] / s;
        }
        g[n] -= 1.0 / s;
        let s2 = s * s;
        for r in 0..n {
            for c in 0..n {
                h[(r, c)] += gj[r] * gj[c] / s2;
            }
            h[(r, r)] += 2.0 * qp.tau[j] / s;
            h[(r, n)] -= gj[r] / s2;
            h[(n, r)] -= gj[r] / s2;
        }
        h[(n, n)] += 1.0 / s2;
    }
    let mut gx = g.rows(0, n).into_owned();
    let mut hx = h.view((0, 0), (n, n)).into_owned();
    if !add_box(qp, &x, &mut f, &mut gx, &mut hx) {
        return None;
    }
    g.rows_mut(0, n).copy_from(&gx);
    h.view_mut((0, 0), (n, n)).copy_from(&hx);
    Some((f, g, h))
}

/// `t fbar_0 - sum log(-fbar_j) - box`.
fn obj_barrier(qp: &QuadraticSubproblem, x: &DVector<f64>, t: f64) -> Option<Eval> {
    let n = qp.dim();
    let (v0, g0) = row_parts(qp, 0, x);
    let mut f = t * v0;
    let mut g = g0 * t;
    let mut h = DMatrix::identity(n, n) * (2.0 * qp.tau[0] * t);
    for j in 1..qp.tau.len() {
        let (v, gj) = row_parts(qp, j, x);
        let s = -v;
        if !(s > 0.0) {
            return None;
        }
        f -= s.ln();
        g += &gj / s;
        h += &gj * gj.transpose() / (s * s);
        for r in 0..n {
            h[(r, r)] += 2.0 * qp.tau[j] / s;
        }
    }
    if !add_box(qp, x, &mut f, &mut g, &mut h) {
        return None;
    }
    Some((f, g, h))
}

fn solve_newton(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    // symmetric diagonal scaling keeps the badly scaled barrier Hessians factorizable
    let d = h.diagonal().map(|v| 1.0 / v.abs().max(1e-300).sqrt());
    let hs = DMatrix::from_fn(h.nrows(), h.ncols(), |r, c| h[(r, c)] * d[r] * d[c]);
    let gs = g.component_mul(&d);
    let step = match hs.clone().cholesky() {
        Some(ch) => ch.solve(&gs),
        None => hs.lu().solve(&gs)?,
    };
    Some(-step.component_mul(&d))
}

fn barrier_minimize<F>(mut z: DVector<f64>, terms: usize, eval: F) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>, f64) -> Option<Eval>,
{
    let mut t = 1.0;
    loop {
        for _ in 0..200 {
            let Some((f, g, h)) = eval(&z, t) else {
                return Err(ThpError::Solver("barrier left its domain".into()));
            };
            let Some(dz) = solve_newton(&h, &g) else {
                return Err(ThpError::Solver("singular barrier Hessian".into()));
            };
            let dec = -g.dot(&dz);
            if dec / 2.0 <= 1e-14 {
                break;
            }
            let mut a = 1.0;
            let mut moved = false;
            while a > 1e-20 {
                let cand = &z + &dz * a;
                if let Some((fc, _, _)) = eval(&cand, t) {
                    if fc <= f - 0.25 * a * dec {
                        z = cand;
                        moved = true;
                        break;
                    }
                }
                a *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if terms as f64 / t < 1e-11 {
            return Ok(z);
        }
        t *= 8.0;
    }
}

fn box_mid(qp: &QuadraticSubproblem) -> DVector<f64> {
    DVector::from_fn(qp.dim(), |i, _| 0.5 * (qp.bounds.lower[i] + qp.bounds.upper[i]))
}

/// `min nu` s.t. `fbar_j(x) <= nu`, `x in X`.
pub fn min_max_constraint(qp: &QuadraticSubproblem) -> Result<(DVector<f64>, f64)> {
    let n = qp.dim();
    if qp.num_constraints() == 0 {
        return Ok((box_mid(qp), f64::NEG_INFINITY));
    }
    let x0 = box_mid(qp);
    let nu0 = qp.max_constraint(&x0) + 1.0;
    let mut z0 = DVector::zeros(n + 1);
    z0.rows_mut(0, n).copy_from(&x0);
    z0[n] = nu0;
    let terms = 2 * n + qp.num_constraints();
    let z = barrier_minimize(z0, terms, |z, t| feas_barrier(qp, z, t))?;
    let x = z.rows(0, n).into_owned();
    Ok((x.clone(), qp.max_constraint(&x)))
}

/// Reference solution of the subproblem in its own mode.
pub fn solve_primal(qp: &QuadraticSubproblem) -> Result<OracleSolution> {
    let (xf, nu) = min_max_constraint(qp)?;
    match qp.mode {
        QpMode::Feasibility => Ok(OracleSolution {
            value: nu,
            x: xf,
            nu,
            feasible: nu <= 0.0,
        }),
        QpMode::Objective => {
            if nu > -1e-9 {
                return Ok(OracleSolution {
                    value: f64::NAN,
                    x: xf,
                    nu,
                    feasible: false,
                });
            }
            let terms = 2 * qp.dim() + qp.num_constraints();
            let x = barrier_minimize(xf, terms, |x, t| obj_barrier(qp, x, t))?;
            Ok(OracleSolution {
                value: qp.eval_row(0, &x),
                x,
                nu,
                feasible: true,
            })
        }
    }
}

/// Random subproblem with `n` variables and `m` constraints.
pub fn random_subproblem<R: rand::Rng + ?Sized>(rng: &mut R, n: usize, m: usize, mode: QpMode) -> QuadraticSubproblem {
    use rand_distr::{Distribution, StandardNormal};
    let lower: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..-0.1)).collect();
    let upper: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
    let center = DVector::from_fn(n, |i, _| rng.random_range(lower[i]..upper[i]));
    let tau = DVector::from_fn(m + 1, |_, _| rng.random_range(0.2..3.0));
    let u = DMatrix::from_fn(m + 1, n, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        2.0 * z
    });
    let values = DVector::from_fn(m + 1, |j, _| {
        if j == 0 {
            StandardNormal.sample(rng)
        } else {
            rng.random_range(-1.0..0.5)
        }
    });
    let bounds = crate::precoding::BoxSet::new(lower, upper).expect("valid random box");
    QuadraticSubproblem::new(center, tau, u, values, bounds, mode).expect("valid random subproblem")
}
