use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::precoding::{EffectiveChannel, Normalization, RateEval};
use crate::C64;

/// Derivatives of the rate vector at one `(H, F, alpha, p)`.
pub(crate) struct JacobianWorkspace {
    pub eval: RateEval,
    /// `dp[(i, k)] = d r_k / d p_i`.
    pub dp: DMatrix<f64>,
    pub dalpha: DVector<f64>,
    /// `d r_k / d conj(F)` per user, so that `dr_k = 2 Re tr(G_k^H dF)`.
    pub df: Vec<DMatrix<C64>>,
}

fn safe_pow(n: f64, e: f64) -> f64 {
    if n > 0.0 {
        n.powf(e)
    } else {
        0.0
    }
}

pub(crate) fn rate_derivatives(
    h: &DMatrix<C64>,
    f: &DMatrix<C64>,
    alpha: f64,
    p: &[f64],
    norm: Normalization,
) -> Result<JacobianWorkspace> {
    let k = h.nrows();
    let gram = f.adjoint() * f;
    let eff = EffectiveChannel::new(h, f, &gram, alpha, norm)?;
    let eval = eff.rates(p);
    let e = norm.exponent();
    let (t, b, v, n) = (&eff.t, &eff.b, &eff.v, &eff.n);
    let n_e: Vec<f64> = n.iter().map(|x| safe_pow(*x, -e)).collect();
    let n_e1: Vec<f64> = n.iter().map(|x| safe_pow(*x, -e - 1.0)).collect();

    // c[(k, i)] = 1/Gamma_k - [i != k]/Gamma_-k
    let c = DMatrix::from_fn(k, k, |kk, i| {
        let mut v = 1.0 / eval.gamma[kk];
        if i != kk {
            v -= 1.0 / eval.gamma_minus[kk];
        }
        v
    });
    let dp = DMatrix::from_fn(k, k, |i, kk| eff.w[(kk, i)] * c[(kk, i)]);

    let dt = -(b * t);
    let nb = v.adjoint() * &gram * v * b;
    let dn: Vec<f64> = (0..k).map(|i| -2.0 * nb[(i, i)].re).collect();
    let dalpha = DVector::from_fn(k, |kk, _| {
        (0..k)
            .map(|i| {
                let tki = t[(kk, i)];
                let dw = n_e[i] * 2.0 * (tki.conj() * dt[(kk, i)]).re
                    - e * tki.norm_sqr() * n_e1[i] * dn[i];
                p[i] * c[(kk, i)] * dw
            })
            .sum()
    });

    let r = b * h;
    let r_adj = r.adjoint();
    let rf = v.adjoint();
    let g_bar = f * v;
    let z = &eff.hf * (&gram * v);
    let qm = &g_bar - &r_adj * &z;
    let qf = &rf * &gram - z.adjoint() * &rf;
    let s_cols = f.ncols();
    let mut df = Vec::with_capacity(k);
    for kk in 0..k {
        let mut a_mat = DMatrix::<C64>::zeros(k, s_cols);
        let mut s_row = DMatrix::<C64>::zeros(1, s_cols);
        let mut qb = qm.clone();
        for i in 0..k {
            let coef = p[i] * c[(kk, i)];
            let tki = t[(kk, i)];
            let a = tki.conj() * (coef * alpha * n_e[i]);
            let bb = -coef * e * tki.norm_sqr() * n_e1[i];
            let mut row = a_mat.row_mut(i);
            row += rf.row(kk) * a + qf.row(i) * C64::new(bb, 0.0);
            s_row += rf.row(i) * a.conj();
            let mut col = qb.column_mut(i);
            col *= C64::new(bb, 0.0);
        }
        let g = &r_adj * a_mat + r.row(kk).adjoint() * s_row + qb * &rf;
        df.push(g);
    }
    Ok(JacobianWorkspace {
        eval,
        dp,
        dalpha,
        df,
    })
}
