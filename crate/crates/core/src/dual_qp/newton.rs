use nalgebra::{DMatrix, DVector};

use super::{dual_curvature, dual_point, project_simplex, DualOptions, DualPoint, QpStatus, QuadraticSubproblem};
use crate::error::Result;

/// Feasible set of the multipliers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum DualSet {
    Orthant,
    Simplex,
}

impl DualSet {
    pub fn project(self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            DualSet::Orthant => v.map(|x| x.max(0.0)),
            DualSet::Simplex => project_simplex(v),
        }
    }

    pub fn residual(self, pt: &DualPoint) -> f64 {
        (&pt.lambda - self.project(&(&pt.lambda + &pt.grad))).amax()
    }
}

const ARMIJO: f64 = 1e-4;

fn accept(qp: &QuadraticSubproblem, set: DualSet, pt: &DualPoint, res: f64, cand: DVector<f64>) -> Result<Option<(DualPoint, f64)>> {
    let step = &cand - &pt.lambda;
    if step.amax() == 0.0 {
        return Ok(None);
    }
    let next = dual_point(qp, cand)?;
    let r = set.residual(&next);
    let gain = next.value - pt.value;
    if gain >= ARMIJO * pt.grad.dot(&step) && gain > -1e-15 * pt.value.abs() || r <= 0.5 * res && gain >= -1e-12 * (1.0 + pt.value.abs()) {
        Ok(Some((next, r)))
    } else {
        Ok(None)
    }
}

/// Solves `(H + mu I) d = g` on the free coordinates, with `sum d = 0` on the simplex.
fn newton_direction(set: DualSet, pt: &DualPoint, h: &DMatrix<f64>, res: f64) -> Option<DVector<f64>> {
    let m = pt.lambda.len();
    let eps = res.min(1e-3);
    let free: Vec<usize> = match set {
        DualSet::Orthant => (0..m).filter(|j| pt.lambda[*j] > eps || pt.grad[*j] > 0.0).collect(),
        DualSet::Simplex => {
            let eta = pt.lambda.dot(&pt.grad);
            (0..m).filter(|j| pt.lambda[*j] > eps || pt.grad[*j] > eta).collect()
        }
    };
    let nf = free.len();
    if nf == 0 || (set == DualSet::Simplex && nf == 1) {
        return None;
    }
    let diag_max = free.iter().map(|j| h[(*j, *j)]).fold(0.0f64, f64::max);
    let mut mu = 1e-12 * (1.0 + diag_max);
    for _ in 0..6 {
        let sol = match set {
            DualSet::Orthant => {
                let a = DMatrix::from_fn(nf, nf, |r, c| h[(free[r], free[c])] + if r == c { mu } else { 0.0 });
                let b = DVector::from_fn(nf, |r, _| pt.grad[free[r]]);
                a.cholesky().map(|ch| ch.solve(&b))
            }
            DualSet::Simplex => {
                let a = DMatrix::from_fn(nf + 1, nf + 1, |r, c| match (r < nf, c < nf) {
                    (true, true) => h[(free[r], free[c])] + if r == c { mu } else { 0.0 },
                    (true, false) | (false, true) => 1.0,
                    (false, false) => 0.0,
                });
                let b = DVector::from_fn(nf + 1, |r, _| if r < nf { pt.grad[free[r]] } else { 0.0 });
                a.lu().solve(&b).map(|s| s.rows(0, nf).into_owned())
            }
        };
        if let Some(d) = sol.filter(|d| d.iter().all(|v| v.is_finite())) {
            let mut full = DVector::zeros(m);
            for (r, j) in free.iter().enumerate() {
                full[*j] = d[r];
            }
            if pt.grad.dot(&full) > 0.0 {
                return Some(full);
            }
            return None;
        }
        mu *= 100.0;
    }
    None
}

fn newton_step(qp: &QuadraticSubproblem, set: DualSet, pt: &DualPoint, res: f64, d: &DVector<f64>) -> Result<Option<(DualPoint, f64)>> {
    let mut t = 1.0;
    while t > 1e-14 {
        let cand = set.project(&(&pt.lambda + d * t));
        if let Some(next) = accept(qp, set, pt, res, cand)? {
            return Ok(Some(next));
        }
        t *= 0.5;
    }
    Ok(None)
}

fn gradient_step(qp: &QuadraticSubproblem, set: DualSet, pt: &DualPoint, res: f64, h: &DMatrix<f64>) -> Result<Option<(DualPoint, f64)>> {
    let tr = h.trace();
    let mut t = if tr > 1e-12 { 1.0 / tr } else { 1e6 };
    let mut best: Option<(DualPoint, f64)> = None;
    while t > 1e-16 {
        let cand = set.project(&(&pt.lambda + &pt.grad * t));
        if let Some(next) = accept(qp, set, pt, res, cand)? {
            best = Some(next);
            break;
        }
        t *= 0.5;
    }
    // expand while the value keeps growing, for the locally linear regime
    if let Some((mut cur, mut r)) = best {
        for _ in 0..40 {
            t *= 2.0;
            let cand = set.project(&(&pt.lambda + &pt.grad * t));
            let next = dual_point(qp, cand)?;
            if next.value > cur.value {
                r = set.residual(&next);
                cur = next;
            } else {
                break;
            }
        }
        return Ok(Some((cur, r)));
    }
    Ok(None)
}

/// Duality gap bound at a point where the line search stalls.
fn stall_gap(set: DualSet, pt: &DualPoint) -> f64 {
    let lg = pt.lambda.dot(&pt.grad);
    match set {
        DualSet::Simplex => pt.grad.max() - lg,
        DualSet::Orthant => pt.grad.max().max(0.0) + lg.abs(),
    }
}

pub(crate) fn ascend(
    qp: &QuadraticSubproblem,
    start: DVector<f64>,
    set: DualSet,
    opts: &DualOptions,
) -> Result<(DualPoint, f64, usize, QpStatus)> {
    let tol = opts.tolerance * qp.scale();
    let mut pt = dual_point(qp, set.project(&start))?;
    let mut res = set.residual(&pt);
    for it in 0..opts.max_iterations {
        if res <= tol {
            return Ok((pt, res, it, QpStatus::Converged));
        }
        if set == DualSet::Orthant && pt.lambda.amax() > opts.lambda_cap {
            return Ok((pt, res, it, QpStatus::Infeasible));
        }
        let h = dual_curvature(qp, &pt);
        let mut next = None;
        if let Some(d) = newton_direction(set, &pt, &h, res) {
            next = newton_step(qp, set, &pt, res, &d)?;
        }
        if next.is_none() {
            next = gradient_step(qp, set, &pt, res, &h)?;
        }
        match next {
            Some((p, r)) => {
                pt = p;
                res = r;
            }
            None => {
                // no ascent left: flat directions appear when symmetric rows tie
                let status = if stall_gap(set, &pt) <= tol { QpStatus::Converged } else { QpStatus::IterationLimit };
                return Ok((pt, res, it, status));
            }
        }
    }
    let status = if res <= tol { QpStatus::Converged } else { QpStatus::IterationLimit };
    Ok((pt, res, opts.max_iterations, status))
}
