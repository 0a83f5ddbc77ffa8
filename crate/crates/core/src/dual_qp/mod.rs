//! Convex quadratic subproblems with diagonal Hessians over a box, solved
//! through their Lagrange dual with a closed-form primal.
//!
//! All rows share the form `fbar_j(x) = v_j + u_j^T (x - x_l) + tau_j ||x - x_l||^2`.

mod newton;
pub mod oracle;
mod simplex;
mod subgradient;

pub use simplex::project_simplex;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result, ThpError};
use crate::precoding::BoxSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpMode {
    /// `min fbar_0` s.t. `fbar_j <= 0`.
    Objective,
    /// `min nu` s.t. `fbar_j <= nu`, `j >= 1`.
    Feasibility,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSubproblem {
    pub center: DVector<f64>,
    /// `m + 1` proximal weights; entry 0 belongs to the objective row.
    pub tau: DVector<f64>,
    /// `(m + 1) x n`, row `j` is `u_j`.
    pub u: DMatrix<f64>,
    /// `fbar_j(x_l)`.
    pub values: DVector<f64>,
    pub bounds: BoxSet,
    pub mode: QpMode,
}

impl QuadraticSubproblem {
    pub fn new(
        center: DVector<f64>,
        tau: DVector<f64>,
        u: DMatrix<f64>,
        values: DVector<f64>,
        bounds: BoxSet,
        mode: QpMode,
    ) -> Result<Self> {
        let n = center.len();
        let rows = tau.len();
        if rows == 0 || u.nrows() != rows || values.len() != rows {
            return dim_err("tau, u and values need one row per function");
        }
        if u.ncols() != n || bounds.len() != n {
            return dim_err(format!("u has {} columns and box {} entries, x has {n}", u.ncols(), bounds.len()));
        }
        if tau.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(ThpError::Domain("proximal weights must be positive".into()));
        }
        if !bounds.contains(&center) {
            return Err(ThpError::Domain("surrogate center lies outside the box".into()));
        }
        Ok(QuadraticSubproblem {
            center,
            tau,
            u,
            values,
            bounds,
            mode,
        })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.tau.len() - 1
    }

    /// Affine constants `v_j - u_j^T x_l + tau_j ||x_l||^2` of the expanded form
    /// `tau_j ||x||^2 + (u_j - 2 tau_j x_l)^T x + c_j`.
    pub fn affine_constants(&self) -> DVector<f64> {
        let xl2 = self.center.norm_squared();
        DVector::from_fn(self.tau.len(), |j, _| {
            self.values[j] - self.u.row(j).dot(&self.center.transpose()) + self.tau[j] * xl2
        })
    }

    /// `fbar_j(x)`.
    pub fn eval_row(&self, j: usize, x: &DVector<f64>) -> f64 {
        let mut lin = 0.0;
        let mut sq = 0.0;
        for i in 0..x.len() {
            let y = x[i] - self.center[i];
            lin += self.u[(j, i)] * y;
            sq += y * y;
        }
        self.values[j] + lin + self.tau[j] * sq
    }

    /// Gradient of `fbar_j` at `x`.
    pub fn grad_row(&self, j: usize, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(x.len(), |i, _| self.u[(j, i)] + 2.0 * self.tau[j] * (x[i] - self.center[i]))
    }

    /// `max_{j >= 1} fbar_j(x)`, or `-inf` without constraints.
    pub fn max_constraint(&self, x: &DVector<f64>) -> f64 {
        (1..self.tau.len()).map(|j| self.eval_row(j, x)).fold(f64::NEG_INFINITY, f64::max)
    }

    fn weight0(&self) -> f64 {
        match self.mode {
            QpMode::Objective => 1.0,
            QpMode::Feasibility => 0.0,
        }
    }

    /// Scale used to make tolerances relative.
    pub(crate) fn scale(&self) -> f64 {
        1.0 + self.values.amax()
    }
}

/// Unique minimizer over the box of `sum_j lambda_j fbar_j` (with `lambda_0 = 1`
/// in objective mode and `0` in feasibility mode).
pub fn primal_from_dual(qp: &QuadraticSubproblem, lambda: &DVector<f64>) -> Result<DVector<f64>> {
    let m = qp.num_constraints();
    if lambda.len() != m {
        return dim_err(format!("expected {m} multipliers, got {}", lambda.len()));
    }
    if lambda.iter().any(|l| !(*l >= 0.0)) {
        return Err(ThpError::Domain("multipliers must be >= 0".into()));
    }
    let mut x = DVector::zeros(qp.dim());
    primal_into(qp, lambda, &mut x, None)?;
    Ok(x)
}

/// Writes the minimizer into `x`; marks unclipped coordinates in `free`.
pub(crate) fn primal_into(
    qp: &QuadraticSubproblem,
    lambda: &DVector<f64>,
    x: &mut DVector<f64>,
    mut free: Option<&mut Vec<bool>>,
) -> Result<()> {
    let w0 = qp.weight0();
    let a = w0 * qp.tau[0] + lambda.iter().zip(qp.tau.iter().skip(1)).map(|(l, t)| l * t).sum::<f64>();
    if !(a > 0.0) {
        return Err(ThpError::Solver("zero curvature: all multipliers vanish".into()));
    }
    let inv = 0.5 / a;
    let n = qp.dim();
    for i in 0..n {
        let mut b = w0 * qp.u[(0, i)];
        for (j, l) in lambda.iter().enumerate() {
            b += l * qp.u[(j + 1, i)];
        }
        let raw = qp.center[i] - b * inv;
        let (lo, hi) = (qp.bounds.lower[i], qp.bounds.upper[i]);
        let v = raw.clamp(lo, hi);
        x[i] = v;
        if let Some(f) = free.as_deref_mut() {
            f[i] = raw > lo && raw < hi;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualMethod {
    /// Projected Newton ascent on the dual with an active-set strategy.
    Newton,
    /// Projected subgradient ascent with step `c / sqrt(t)`.
    Subgradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualOptions {
    pub method: DualMethod,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Multipliers beyond this size mark the objective subproblem as infeasible.
    pub lambda_cap: f64,
}

impl Default for DualOptions {
    fn default() -> Self {
        DualOptions {
            method: DualMethod::Newton,
            tolerance: 1e-7,
            max_iterations: 5000,
            lambda_cap: 1e10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Converged,
    IterationLimit,
    /// Dual ascent diverged: the objective subproblem has no feasible point.
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct DualSolution {
    pub lambda: DVector<f64>,
    pub x_bar: DVector<f64>,
    /// `max_j fbar_j(x_bar)` in feasibility mode, `NaN` otherwise.
    pub nu: f64,
    /// Primal objective: `fbar_0(x_bar)` or `nu`.
    pub primal_value: f64,
    pub dual_value: f64,
    /// Natural residual `||lambda - P(lambda + grad g)||_inf`.
    pub kkt_residual: f64,
    pub iterations: usize,
    pub status: QpStatus,
}

impl DualSolution {
    pub fn converged(&self) -> bool {
        self.status == QpStatus::Converged
    }

    pub fn duality_gap(&self) -> f64 {
        self.primal_value - self.dual_value
    }
}

/// Dual function data at one multiplier.
#[derive(Debug, Clone)]
pub(crate) struct DualPoint {
    pub lambda: DVector<f64>,
    pub x: DVector<f64>,
    /// `fbar_j(x)`, `j = 1..=m`.
    pub grad: DVector<f64>,
    pub value: f64,
    pub free: Vec<bool>,
}

pub(crate) fn dual_point(qp: &QuadraticSubproblem, lambda: DVector<f64>) -> Result<DualPoint> {
    let n = qp.dim();
    let mut x = DVector::zeros(n);
    let mut free = vec![false; n];
    primal_into(qp, &lambda, &mut x, Some(&mut free))?;
    let m = qp.num_constraints();
    let grad = DVector::from_fn(m, |j, _| qp.eval_row(j + 1, &x));
    let mut value = lambda.dot(&grad);
    if qp.mode == QpMode::Objective {
        value += qp.eval_row(0, &x);
    }
    Ok(DualPoint {
        lambda,
        x,
        grad,
        value,
        free,
    })
}

/// Negated dual Hessian `Omega_F Omega_F^T / (2a)` over the unclipped coordinates.
pub(crate) fn dual_curvature(qp: &QuadraticSubproblem, pt: &DualPoint) -> DMatrix<f64> {
    let m = qp.num_constraints();
    let a = qp.weight0() * qp.tau[0]
        + pt.lambda.iter().zip(qp.tau.iter().skip(1)).map(|(l, t)| l * t).sum::<f64>();
    let mut h = DMatrix::zeros(m, m);
    for i in (0..qp.dim()).filter(|i| pt.free[*i]) {
        let y = pt.x[i] - qp.center[i];
        let w: Vec<f64> = (0..m).map(|j| qp.u[(j + 1, i)] + 2.0 * qp.tau[j + 1] * y).collect();
        for r in 0..m {
            for c in 0..=r {
                h[(r, c)] += w[r] * w[c];
            }
        }
    }
    for r in 0..m {
        for c in 0..r {
            h[(c, r)] = h[(r, c)];
        }
    }
    h / (2.0 * a)
}

fn finish(qp: &QuadraticSubproblem, pt: DualPoint, residual: f64, iterations: usize, status: QpStatus) -> DualSolution {
    let (nu, primal_value) = match qp.mode {
        QpMode::Objective => (f64::NAN, qp.eval_row(0, &pt.x)),
        QpMode::Feasibility => {
            let nu = pt.grad.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (nu, nu)
        }
    };
    DualSolution {
        lambda: pt.lambda,
        x_bar: pt.x,
        nu,
        primal_value,
        dual_value: pt.value,
        kkt_residual: residual,
        iterations,
        status,
    }
}

pub fn solve_objective_qp(qp: &QuadraticSubproblem, opts: &DualOptions) -> Result<DualSolution> {
    solve_objective_qp_from(qp, None, opts)
}

/// Objective subproblem, warm-started from `lambda0` when given.
pub fn solve_objective_qp_from(
    qp: &QuadraticSubproblem,
    lambda0: Option<&DVector<f64>>,
    opts: &DualOptions,
) -> Result<DualSolution> {
    if qp.mode != QpMode::Objective {
        return Err(ThpError::Solver("objective solve on a feasibility subproblem".into()));
    }
    let m = qp.num_constraints();
    let start = match lambda0 {
        Some(l) if l.len() == m => l.map(|v| if v.is_finite() { v.max(0.0) } else { 0.0 }),
        _ => DVector::zeros(m),
    };
    if m == 0 {
        let pt = dual_point(qp, start)?;
        return Ok(finish(qp, pt, 0.0, 0, QpStatus::Converged));
    }
    let (pt, res, it, status) = match opts.method {
        DualMethod::Newton => newton::ascend(qp, start, newton::DualSet::Orthant, opts)?,
        DualMethod::Subgradient => subgradient::ascend(qp, start, newton::DualSet::Orthant, opts)?,
    };
    Ok(finish(qp, pt, res, it, status))
}

pub fn solve_feasibility_qp(qp: &QuadraticSubproblem, opts: &DualOptions) -> Result<DualSolution> {
    solve_feasibility_qp_from(qp, None, opts)
}

pub fn solve_feasibility_qp_from(
    qp: &QuadraticSubproblem,
    lambda0: Option<&DVector<f64>>,
    opts: &DualOptions,
) -> Result<DualSolution> {
    if qp.mode != QpMode::Feasibility {
        return Err(ThpError::Solver("feasibility solve on an objective subproblem".into()));
    }
    let m = qp.num_constraints();
    if m == 0 {
        return Err(ThpError::Solver("feasibility subproblem without constraints".into()));
    }
    let start = match lambda0 {
        Some(l) if l.len() == m && l.iter().all(|v| v.is_finite()) => project_simplex(l),
        _ => DVector::from_element(m, 1.0 / m as f64),
    };
    let (pt, res, it, status) = match opts.method {
        DualMethod::Newton => newton::ascend(qp, start, newton::DualSet::Simplex, opts)?,
        DualMethod::Subgradient => subgradient::ascend(qp, start, newton::DualSet::Simplex, opts)?,
    };
    Ok(finish(qp, pt, res, it, status))
}

/// Same subproblem in the other mode.
pub fn with_mode(qp: &QuadraticSubproblem, mode: QpMode) -> QuadraticSubproblem {
    QuadraticSubproblem { mode, ..qp.clone() }
}
