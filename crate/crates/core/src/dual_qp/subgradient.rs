use nalgebra::DVector;

use super::newton::DualSet;
use super::{dual_point, DualOptions, DualPoint, QpStatus, QuadraticSubproblem};
use crate::error::Result;

/// Projected subgradient ascent with step `c / sqrt(t + 1)`, `c` set from the
/// initial gradient norm. Returns the iterate with the smallest residual.
pub(crate) fn ascend(
    qp: &QuadraticSubproblem,
    start: DVector<f64>,
    set: DualSet,
    opts: &DualOptions,
) -> Result<(DualPoint, f64, usize, QpStatus)> {
    let tol = opts.tolerance * qp.scale();
    let mut pt = dual_point(qp, set.project(&start))?;
    let mut res = set.residual(&pt);
    let c = (1.0 + pt.lambda.norm()) / (1.0 + pt.grad.norm());
    let mut best = (pt.clone(), res);
    for it in 0..opts.max_iterations {
        if res <= tol {
            return Ok((pt, res, it, QpStatus::Converged));
        }
        if set == DualSet::Orthant && pt.lambda.amax() > opts.lambda_cap {
            return Ok((pt, res, it, QpStatus::Infeasible));
        }
        let step = c / ((it + 1) as f64).sqrt();
        let cand = set.project(&(&pt.lambda + &pt.grad * step));
        pt = dual_point(qp, cand)?;
        res = set.residual(&pt);
        if res < best.1 {
            best = (pt.clone(), res);
        }
    }
    let status = if best.1 <= tol { QpStatus::Converged } else { QpStatus::IterationLimit };
    Ok((best.0, best.1, opts.max_iterations, status))
}
