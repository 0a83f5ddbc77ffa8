//! Terminal projections onto the discrete RF feasible sets, and the smooth
//! cardinality surrogate used to keep the relaxed selection vector sparse.

use std::f64::consts::TAU;

use crate::error::{Result, ThpError};

/// Ties closer than this (in radians) are broken toward the smaller phase.
const TIE_TOL: f64 = 1e-12;

/// Maps each phase to the nearest of the `2^bits` grid phases `2 pi q / 2^bits`
/// under circular distance. Ties go to the smaller grid value.
pub fn project_phases(theta: &[f64], bits: u32) -> Vec<f64> {
    let levels = 1u64 << bits.clamp(1, 32);
    let step = TAU / levels as f64;
    theta
        .iter()
        .map(|&t| {
            let wrapped = t.rem_euclid(TAU);
            let lower = ((wrapped / step).floor() as u64).min(levels - 1);
            let upper = (lower + 1) % levels;
            let circ = |q: u64| {
                let d = (wrapped - q as f64 * step).abs();
                d.min(TAU - d)
            };
            let (dl, du) = (circ(lower), circ(upper));
            let q = if (dl - du).abs() <= TIE_TOL {
                lower.min(upper)
            } else if dl < du {
                lower
            } else {
                upper
            };
            q as f64 * step
        })
        .collect()
}

/// Binary vector with ones at the `s` largest entries of `d`; ties favor the lower index.
pub fn project_selection(d: &[f64], s: usize) -> Result<Vec<f64>> {
    if s > d.len() {
        return Err(ThpError::Domain(format!(
            "cannot select {s} entries from a vector of length {}",
            d.len()
        )));
    }
    let mut order: Vec<usize> = (0..d.len()).collect();
    // stable sort keeps lower indices first among equal values
    order.sort_by(|a, b| d[*b].total_cmp(&d[*a]));
    let mut out = vec![0.0; d.len()];
    for &i in &order[..s] {
        out[i] = 1.0;
    }
    Ok(out)
}

/// Per-block selection for the partially-connected codebook: one column per block.
pub fn project_selection_blocks(d: &[f64], block_len: usize) -> Result<Vec<f64>> {
    if block_len == 0 || d.len() % block_len != 0 {
        return Err(ThpError::Dimension(format!(
            "selection vector of length {} does not split into blocks of {block_len}",
            d.len()
        )));
    }
    let mut out = Vec::with_capacity(d.len());
    for block in d.chunks(block_len) {
        out.extend(project_selection(block, 1)?);
    }
    Ok(out)
}

/// `sum_i log(1 + d_i/eps) / log(1 + 1/eps)` and its gradient.
pub fn smooth_l0(d: &[f64], eps: f64) -> Result<(f64, Vec<f64>)> {
    if !(eps > 0.0) {
        return Err(ThpError::Domain(format!("smoothing eps must be > 0, got {eps}")));
    }
    let norm = (1.0 / eps).ln_1p();
    let value = d.iter().map(|x| (x / eps).ln_1p()).sum::<f64>() / norm;
    let grad = d.iter().map(|x| 1.0 / ((eps + x) * norm)).collect();
    Ok((value, grad))
}
