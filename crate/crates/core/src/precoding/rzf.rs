use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSample;
use crate::error::{dim_err, Result, ThpError};
use crate::C64;

/// Column normalization of the RZF baseband precoder, `Lambda = Diag(||g_bar_k||^-2e)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `Lambda = Diag(||g_bar_k||^-2)`, so `||F g_k|| = 1` for every user.
    #[default]
    UnitColumns,
    /// `Lambda = Diag(||g_bar_k||^-1)`, leaving `||F g_k|| = ||g_bar_k||^(1/2)`.
    Literal,
}

impl Normalization {
    /// Exponent `e` in `Lambda_k = n_k^-e` with `n_k = ||g_bar_k||^2`.
    pub fn exponent(self) -> f64 {
        match self {
            Normalization::UnitColumns => 1.0,
            Normalization::Literal => 0.5,
        }
    }
}

/// Hybrid precoder for one channel realization.
#[derive(Debug, Clone)]
pub struct PrecoderPair {
    /// RF precoder, `M x S`.
    pub f: DMatrix<C64>,
    /// Baseband precoder, `S x K`.
    pub g: DMatrix<C64>,
    /// `(H F F^H H^H + alpha I)^-1`.
    pub b_reg: DMatrix<C64>,
    /// `F F^H H^H B_reg`, the unnormalized end-to-end precoder.
    pub g_bar: DMatrix<C64>,
    /// Diagonal of `Lambda`.
    pub lambda: DVector<f64>,
}

impl PrecoderPair {
    /// End-to-end precoding vector `F g_k`.
    pub fn beam(&self, k: usize) -> DVector<C64> {
        &self.f * self.g.column(k)
    }
}

/// Inverts the Hermitian positive-definite `q`, checking `||q q^-1 - I||_max <= 1e-8`.
pub(crate) fn hermitian_inverse(q: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let k = q.nrows();
    let inv = match q.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => return Err(ThpError::IllConditioned { residual: f64::INFINITY }),
    };
    let check = q * &inv - DMatrix::<C64>::identity(k, k);
    let residual = check.iter().fold(0.0f64, |acc, z| acc.max(z.norm()));
    if !(residual <= 1e-8) {
        return Err(ThpError::IllConditioned { residual });
    }
    Ok(inv)
}

fn check_shapes(h: &DMatrix<C64>, f: &DMatrix<C64>, alpha: f64) -> Result<()> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(ThpError::Domain(format!("alpha must be positive, got {alpha}")));
    }
    if h.ncols() != f.nrows() {
        return dim_err(format!(
            "channel has {} antennas but F has {} rows",
            h.ncols(),
            f.nrows()
        ));
    }
    Ok(())
}

/// RZF baseband precoder with unit-norm end-to-end columns.
pub fn rzf_baseband(sample: &ChannelSample, f: &DMatrix<C64>, alpha: f64) -> Result<PrecoderPair> {
    rzf_baseband_with(sample, f, alpha, Normalization::UnitColumns)
}

pub fn rzf_baseband_with(
    sample: &ChannelSample,
    f: &DMatrix<C64>,
    alpha: f64,
    norm: Normalization,
) -> Result<PrecoderPair> {
    let h = &sample.h;
    check_shapes(h, f, alpha)?;
    let k = h.nrows();
    let hf = h * f;
    let q = &hf * hf.adjoint() + DMatrix::<C64>::identity(k, k) * C64::new(alpha, 0.0);
    let b_reg = hermitian_inverse(&q)?;
    let v = hf.adjoint() * &b_reg;
    let g_bar = f * &v;
    let e = norm.exponent();
    let lambda = DVector::from_fn(k, |i, _| {
        let n = g_bar.column(i).norm_squared();
        if n > 0.0 {
            n.powf(-e)
        } else {
            0.0
        }
    });
    let mut g = v;
    for (i, mut col) in g.column_iter_mut().enumerate() {
        col *= C64::new(lambda[i].sqrt(), 0.0);
    }
    Ok(PrecoderPair {
        f: f.clone(),
        g,
        b_reg,
        g_bar,
        lambda,
    })
}

/// Instantaneous rates plus the SINR denominators reused by the gradients.
#[derive(Debug, Clone)]
pub struct RateEval {
    /// Natural-log rates (nats per channel use).
    pub rates: DVector<f64>,
    /// `Gamma_k = 1 + sum_i p_i |h_k^H F g_i|^2`.
    pub gamma: DVector<f64>,
    /// `Gamma_-k = 1 + sum_{i != k} p_i |h_k^H F g_i|^2`.
    pub gamma_minus: DVector<f64>,
}

impl RateEval {
    /// Builds the rates from the end-to-end gains `w[k][i] = |h_k^H F g_i|^2`.
    pub(crate) fn from_gains(w: &DMatrix<f64>, p: &[f64]) -> Self {
        let k = w.nrows();
        let mut gamma = DVector::zeros(k);
        let mut gamma_minus = DVector::zeros(k);
        let mut rates = DVector::zeros(k);
        for kk in 0..k {
            let interf: f64 = (0..k).filter(|i| *i != kk).map(|i| p[i] * w[(kk, i)]).sum();
            let own = p[kk] * w[(kk, kk)];
            gamma_minus[kk] = 1.0 + interf;
            gamma[kk] = 1.0 + interf + own;
            rates[kk] = (own / gamma_minus[kk]).ln_1p();
        }
        RateEval {
            rates,
            gamma,
            gamma_minus,
        }
    }
}

/// Per-user rates `log(1 + SINR_k)` under the hybrid precoder.
pub fn instantaneous_rate(
    sample: &ChannelSample,
    pair: &PrecoderPair,
    p: &[f64],
) -> Result<RateEval> {
    let k = sample.users();
    if p.len() != k || pair.g.ncols() != k {
        return dim_err(format!("expected {k} users, got power vector of {}", p.len()));
    }
    if let Some(bad) = p.iter().find(|v| !(**v >= 0.0)) {
        return Err(ThpError::Domain(format!("powers must be >= 0, got {bad}")));
    }
    let gains = &sample.h * &pair.f * &pair.g;
    let w = DMatrix::from_fn(k, k, |r, c| gains[(r, c)].norm_sqr());
    Ok(RateEval::from_gains(&w, p))
}

/// Shared per-sample quantities of the RZF pipeline at a fixed `(F, alpha)`.
///
/// `t = H F F^H H^H B` equals `H G_bar`, and `n_i = ||g_bar_i||^2`; the end-to-end
/// gains are `w_ki = |t_ki|^2 n_i^-e`.
#[derive(Debug, Clone)]
pub(crate) struct EffectiveChannel {
    pub hf: DMatrix<C64>,
    pub b: DMatrix<C64>,
    pub t: DMatrix<C64>,
    /// `(H F)^H B`, `S x K`; `g_bar_i = F v_i`.
    pub v: DMatrix<C64>,
    pub n: DVector<f64>,
    pub w: DMatrix<f64>,
}

impl EffectiveChannel {
    /// `gram` is `F^H F`, shared by every sample evaluated at the same `F`.
    pub fn new(
        h: &DMatrix<C64>,
        f: &DMatrix<C64>,
        gram: &DMatrix<C64>,
        alpha: f64,
        norm: Normalization,
    ) -> Result<Self> {
        check_shapes(h, f, alpha)?;
        let k = h.nrows();
        let hf = h * f;
        let hh = &hf * hf.adjoint();
        let q = &hh + DMatrix::<C64>::identity(k, k) * C64::new(alpha, 0.0);
        let b = hermitian_inverse(&q)?;
        let t = &hh * &b;
        let v = hf.adjoint() * &b;
        let wv = gram * &v;
        let n = DVector::from_fn(k, |i, _| v.column(i).dotc(&wv.column(i)).re.max(0.0));
        let e = norm.exponent();
        let w = DMatrix::from_fn(k, k, |r, c| {
            if n[c] > 0.0 {
                t[(r, c)].norm_sqr() * n[c].powf(-e)
            } else {
                0.0
            }
        });
        Ok(EffectiveChannel { hf, b, t, v, n, w })
    }

    pub fn rates(&self, p: &[f64]) -> RateEval {
        RateEval::from_gains(&self.w, p)
    }
}


/// `out = a * b` without the generic product's dispatch overhead.
fn small_mul(a: &DMatrix<C64>, b: &DMatrix<C64>, out: &mut DMatrix<C64>) {
    let (n, inner, m) = (a.nrows(), a.ncols(), b.ncols());
    for j in 0..m {
        let bj = b.column(j);
        for i in 0..n {
            let mut acc = C64::default();
            for t in 0..inner {
                acc += a[(i, t)] * bj[t];
            }
            out[(i, j)] = acc;
        }
    }
}

/// Reusable buffers for rate-only evaluation at a fixed `(F, alpha)`. Gives the
/// same gains as [`EffectiveChannel`] without per-sample allocation.
#[derive(Debug, Clone)]
pub(crate) struct GainScratch {
    hf: DMatrix<C64>,
    hfg: DMatrix<C64>,
    q: Vec<C64>,
    pm: Vec<C64>,
    l: Vec<C64>,
    b: Vec<C64>,
    pub w: DMatrix<f64>,
}

impl GainScratch {
    pub fn new(k: usize, s: usize) -> Self {
        GainScratch {
            hf: DMatrix::zeros(k, s),
            hfg: DMatrix::zeros(k, s),
            q: vec![C64::default(); k * k],
            pm: vec![C64::default(); k * k],
            l: vec![C64::default(); k * k],
            b: vec![C64::default(); k * k],
            w: DMatrix::zeros(k, k),
        }
    }

    /// Fills `self.w` with `w_ki = |t_ki|^2 n_i^-e`.
    pub fn gains(
        &mut self,
        h: &DMatrix<C64>,
        f: &DMatrix<C64>,
        gram: &DMatrix<C64>,
        alpha: f64,
        norm: Normalization,
    ) -> Result<()> {
        check_shapes(h, f, alpha)?;
        let k = h.nrows();
        let s = f.ncols();
        if self.hf.shape() != (k, s) {
            *self = GainScratch::new(k, s);
        }
        small_mul(h, f, &mut self.hf);
        small_mul(&self.hf, gram, &mut self.hfg);
        let (hf, hfg) = (&self.hf, &self.hfg);
        // q = HF (HF)^H + alpha I, pm = HF W (HF)^H, both row-major k x k
        for i in 0..k {
            for j in 0..k {
                let mut a = C64::default();
                let mut c = C64::default();
                for m in 0..s {
                    let y = hf[(j, m)].conj();
                    a += hf[(i, m)] * y;
                    c += hfg[(i, m)] * y;
                }
                self.q[i * k + j] = a;
                self.pm[i * k + j] = c;
            }
            self.q[i * k + i] += C64::new(alpha, 0.0);
        }
        // Cholesky q = L L^H, then B = q^-1 column by column
        let (q, l, b) = (&self.q, &mut self.l, &mut self.b);
        for j in 0..k {
            let mut d = q[j * k + j].re;
            for m in 0..j {
                d -= l[j * k + m].norm_sqr();
            }
            if !(d > 0.0) {
                return Err(ThpError::IllConditioned { residual: f64::INFINITY });
            }
            let d = d.sqrt();
            l[j * k + j] = C64::new(d, 0.0);
            for i in j + 1..k {
                let mut v = q[i * k + j];
                for m in 0..j {
                    v -= l[i * k + m] * l[j * k + m].conj();
                }
                l[i * k + j] = v / d;
            }
            for i in 0..j {
                l[i * k + j] = C64::default();
            }
        }
        for col in 0..k {
            // forward: L y = e_col, stored in b[.., col]
            for i in 0..k {
                let mut v = if i == col { C64::new(1.0, 0.0) } else { C64::default() };
                for m in 0..i {
                    v -= l[i * k + m] * b[m * k + col];
                }
                b[i * k + col] = v / l[i * k + i];
            }
            // backward: L^H x = y
            for i in (0..k).rev() {
                let mut v = b[i * k + col];
                for m in i + 1..k {
                    v -= l[m * k + i].conj() * b[m * k + col];
                }
                b[i * k + col] = v / l[i * k + i];
            }
        }
        let mut residual = 0.0f64;
        for i in 0..k {
            for j in 0..k {
                let mut v = if i == j { C64::new(-1.0, 0.0) } else { C64::default() };
                for m in 0..k {
                    v += q[i * k + m] * b[m * k + j];
                }
                residual = residual.max(v.norm());
            }
        }
        if !(residual <= 1e-8) {
            return Err(ThpError::IllConditioned { residual });
        }
        let e = norm.exponent();
        for c in 0..k {
            // n_c = b_c^H pm b_c
            let mut n = C64::default();
            for i in 0..k {
                let mut v = C64::default();
                for j in 0..k {
                    v += self.pm[i * k + j] * b[j * k + c];
                }
                n += b[i * k + c].conj() * v;
            }
            let n = n.re.max(0.0);
            let scale = if n > 0.0 { n.powf(-e) } else { 0.0 };
            for r in 0..k {
                // t = (q - alpha I) B
                let mut t = C64::default();
                for m in 0..k {
                    let qv = if m == r { q[r * k + m] - C64::new(alpha, 0.0) } else { q[r * k + m] };
                    t += qv * b[m * k + c];
                }
                self.w[(r, c)] = t.norm_sqr() * scale;
            }
        }
        Ok(())
    }

    /// Adds the rates for powers `p` to `acc`.
    pub fn accumulate_rates(&self, p: &[f64], acc: &mut DVector<f64>) {
        let w = &self.w;
        let k = w.nrows();
        for kk in 0..k {
            let interf: f64 = (0..k).filter(|i| *i != kk).map(|i| p[i] * w[(kk, i)]).sum();
            acc[kk] += (p[kk] * w[(kk, kk)] / (1.0 + interf)).ln_1p();
        }
    }
}
