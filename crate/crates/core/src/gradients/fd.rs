use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, Result};
use crate::precoding::BoxSet;

/// Default finite-difference step.
pub const FD_STEP: f64 = 1e-6;

/// Finite-difference Jacobian (`n x K`, row `i` holds `d f / d x_i`) of a vector map.
///
/// Central differences in the interior; within `step` of a bound the stencil is
/// clipped to the box, which turns it one-sided.
pub fn finite_diff_jacobian<F>(
    f: F,
    x: &DVector<f64>,
    bounds: Option<&BoxSet>,
    step: f64,
) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    if !(step > 0.0) {
        return Err(crate::ThpError::Domain(format!("step must be positive, got {step}")));
    }
    if let Some(b) = bounds {
        if b.len() != x.len() {
            return dim_err(format!("box has {} coordinates, x has {}", b.len(), x.len()));
        }
    }
    let n = x.len();
    let mut jac: Option<DMatrix<f64>> = None;
    let mut probe = x.clone();
    for i in 0..n {
        let (mut hi, mut lo) = (x[i] + step, x[i] - step);
        if let Some(b) = bounds {
            hi = hi.min(b.upper[i]);
            lo = lo.max(b.lower[i]);
        }
        if hi <= lo {
            continue;
        }
        probe[i] = hi;
        let fp = f(&probe)?;
        probe[i] = lo;
        let fm = f(&probe)?;
        probe[i] = x[i];
        let j = jac.get_or_insert_with(|| DMatrix::zeros(n, fp.len()));
        let row = (fp - fm) / (hi - lo);
        j.row_mut(i).copy_from(&row.transpose());
    }
    match jac {
        Some(j) => Ok(j),
        None => Ok(DMatrix::zeros(n, f(x)?.len())),
    }
}
