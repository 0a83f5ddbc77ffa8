//! Jacobian of the instantaneous rate vector with respect to the flat THP
//! variable, in closed form where available and by finite differences otherwise.

mod analytic;
mod fd;

pub use fd::{finite_diff_jacobian, FD_STEP};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSample, SystemDims};
use crate::error::{dim_err, Result, ThpError};
use crate::precoding::{
    instantaneous_rate, rzf_baseband_with, BoxSet, Codebook, GainScratch, Normalization,
    RfMethod, RfStructure, StructureKind, ThpVariable, VariableSpace,
};
use analytic::{rate_derivatives, JacobianWorkspace};

/// Maps a flat variable and a random sample to the per-user rate vector.
///
/// Jacobians are `n x K` with `n = x.len()`; rows the rates do not depend on are zero.
pub trait RateModel: Sync {
    type Sample: Sync;

    fn num_users(&self) -> usize;

    fn rates(&self, x: &DVector<f64>, sample: &Self::Sample) -> Result<DVector<f64>>;

    fn rates_and_jacobian(
        &self,
        x: &DVector<f64>,
        sample: &Self::Sample,
    ) -> Result<(DVector<f64>, DMatrix<f64>)>;

    /// Sample average of the rates at a fixed `x`.
    fn average_rates(&self, x: &DVector<f64>, samples: &[Self::Sample]) -> Result<DVector<f64>> {
        let mut acc = DVector::zeros(self.num_users());
        for s in samples {
            acc += self.rates(x, s)?;
        }
        Ok(acc / samples.len().max(1) as f64)
    }

    /// Sample averages of the rates and of the Jacobian.
    fn average_rates_and_jacobian(
        &self,
        x: &DVector<f64>,
        samples: &[Self::Sample],
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let mut r = DVector::zeros(self.num_users());
        let mut j = DMatrix::zeros(x.len(), self.num_users());
        for s in samples {
            let (rs, js) = self.rates_and_jacobian(x, s)?;
            r += rs;
            j += js;
        }
        let count = samples.len().max(1) as f64;
        Ok((r / count, j / count))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMethod {
    /// Closed form where the structure has one, finite differences otherwise.
    Analytic,
    FiniteDifference { step: f64 },
}

/// Rates and Jacobian at one `(x, H)`.
#[derive(Debug, Clone)]
pub struct RateJacobian {
    pub rates: DVector<f64>,
    /// `n x K`, column `k` is the gradient of `r_k`.
    pub jacobian: DMatrix<f64>,
}

/// The hybrid RF + RZF rate map for one RF structure.
#[derive(Debug, Clone)]
pub struct HybridRateModel {
    structure: RfStructure,
    dims: SystemDims,
    norm: Normalization,
    method: JacobianMethod,
    /// Box over the rate coordinates `(phi, p, alpha)`, used to clip FD stencils.
    rate_box: BoxSet,
}

impl HybridRateModel {
    pub fn new(structure: RfStructure, dims: SystemDims, space: &VariableSpace) -> Result<Self> {
        structure.validate(&dims)?;
        if space.phi_len != structure.phi_len(&dims) || space.users != dims.users {
            return dim_err("variable space does not match the structure");
        }
        Ok(HybridRateModel {
            rate_box: space.bounds(&[])?,
            structure,
            dims,
            norm: Normalization::default(),
            method: JacobianMethod::Analytic,
        })
    }

    pub fn with_normalization(mut self, norm: Normalization) -> Self {
        self.norm = norm;
        self
    }

    pub fn with_method(mut self, method: JacobianMethod) -> Self {
        self.method = method;
        self
    }

    pub fn structure(&self) -> &RfStructure {
        &self.structure
    }

    pub fn dims(&self) -> &SystemDims {
        &self.dims
    }

    pub fn normalization(&self) -> Normalization {
        self.norm
    }

    pub fn phi_len(&self) -> usize {
        self.rate_box.len() - self.dims.users - 1
    }

    /// Number of leading coordinates of `x` the rates depend on.
    pub fn rate_dim(&self) -> usize {
        self.rate_box.len()
    }

    fn split<'a>(&self, x: &'a DVector<f64>) -> Result<(&'a [f64], &'a [f64], f64)> {
        let n = self.rate_dim();
        if x.len() < n {
            return dim_err(format!("x has {} entries, rates need {n}", x.len()));
        }
        let s = x.as_slice();
        let pl = self.phi_len();
        Ok((&s[..pl], &s[pl..pl + self.dims.users], s[n - 1]))
    }

    /// Rates through the public pipeline (`build_rf_precoder`, `rzf_baseband`,
    /// `instantaneous_rate`); used as the reference for the fast paths.
    pub fn reference_rates(&self, x: &DVector<f64>, sample: &ChannelSample) -> Result<DVector<f64>> {
        let (phi, p, alpha) = self.split(x)?;
        let f = crate::precoding::build_rf_precoder(phi, &self.structure, &self.dims)?;
        let pair = rzf_baseband_with(sample, &f, alpha, self.norm)?;
        Ok(instantaneous_rate(sample, &pair, p)?.rates)
    }

    /// Finite-difference Jacobian over the rate coordinates, padded with zero rows.
    pub fn finite_diff(
        &self,
        x: &DVector<f64>,
        sample: &ChannelSample,
        step: f64,
    ) -> Result<DMatrix<f64>> {
        let n = self.rate_dim();
        let head = x.rows(0, n).into_owned();
        let jr = finite_diff_jacobian(
            |y| self.reference_rates(y, sample),
            &head,
            Some(&self.rate_box),
            step,
        )?;
        let mut j = DMatrix::zeros(x.len(), self.dims.users);
        j.rows_mut(0, n).copy_from(&jr);
        Ok(j)
    }

    fn expect(&self, kind: StructureKind) -> Result<()> {
        if self.structure.kind() != kind {
            return Err(ThpError::StructureMismatch {
                expected: kind.to_string(),
                actual: self.structure.kind().to_string(),
            });
        }
        Ok(())
    }

    fn checked_flat(&self, x: &ThpVariable) -> Result<DVector<f64>> {
        if x.phi.len() != self.phi_len() || x.power.len() != self.dims.users {
            return dim_err("variable does not match the model structure");
        }
        Ok(x.to_vector())
    }

    pub fn jacobian_dps_full(&self, x: &ThpVariable, sample: &ChannelSample) -> Result<RateJacobian> {
        self.expect(StructureKind::DpsFull)?;
        self.analytic(&self.checked_flat(x)?, sample)
    }

    pub fn jacobian_codebook_full(
        &self,
        x: &ThpVariable,
        sample: &ChannelSample,
    ) -> Result<RateJacobian> {
        self.expect(StructureKind::CodebookFull)?;
        self.analytic(&self.checked_flat(x)?, sample)
    }

    pub fn jacobian_dps_partial(
        &self,
        x: &ThpVariable,
        sample: &ChannelSample,
    ) -> Result<RateJacobian> {
        self.expect(StructureKind::DpsPartial)?;
        self.analytic(&self.checked_flat(x)?, sample)
    }

    /// Closed-form Jacobian; the phi block of the partially-connected codebook
    /// falls back to finite differences.
    pub fn analytic(&self, x: &DVector<f64>, sample: &ChannelSample) -> Result<RateJacobian> {
        let (phi, p, alpha) = self.split(x)?;
        let f = self.structure.precoder(phi, &self.dims)?;
        let ws = rate_derivatives(&sample.h, &f, alpha, p, self.norm)?;
        let k = self.dims.users;
        let pl = self.phi_len();
        let mut j = DMatrix::zeros(x.len(), k);
        self.phi_block(&mut j, &f, &ws, x, sample)?;
        for kk in 0..k {
            for i in 0..k {
                j[(pl + i, kk)] = ws.dp[(i, kk)];
            }
            j[(pl + k, kk)] = ws.dalpha[kk];
        }
        Ok(RateJacobian {
            rates: ws.eval.rates,
            jacobian: j,
        })
    }

    fn phi_block(
        &self,
        j: &mut DMatrix<f64>,
        f: &DMatrix<crate::C64>,
        ws: &JacobianWorkspace,
        x: &DVector<f64>,
        sample: &ChannelSample,
    ) -> Result<()> {
        let m = self.dims.antennas;
        match (&self.structure.method, self.structure.kind()) {
            (_, StructureKind::DpsFull) => {
                for (kk, g) in ws.df.iter().enumerate() {
                    for col in 0..f.ncols() {
                        for row in 0..m {
                            j[(col * m + row, kk)] =
                                -2.0 * (g[(row, col)].conj() * f[(row, col)]).im;
                        }
                    }
                }
            }
            (_, StructureKind::DpsPartial) => {
                let block = self.dims.subarray_len();
                for (kk, g) in ws.df.iter().enumerate() {
                    for row in 0..m {
                        let col = row / block;
                        j[(row, kk)] = -2.0 * (g[(row, col)].conj() * f[(row, col)]).im;
                    }
                }
            }
            (RfMethod::Codebook(Codebook::Full(c)), _) => {
                for (kk, g) in ws.df.iter().enumerate() {
                    for col in 0..c.ncols() {
                        let s: f64 = (0..m).map(|row| (g[(row, col)].conj() * c[(row, col)]).re).sum();
                        j[(col, kk)] = 2.0 * s;
                    }
                }
            }
            _ => {
                let pl = self.phi_len();
                let head = x.rows(0, self.rate_dim()).into_owned();
                let step = match self.method {
                    JacobianMethod::FiniteDifference { step } => step,
                    JacobianMethod::Analytic => FD_STEP,
                };
                let mut probe = head.clone();
                for i in 0..pl {
                    let hi = (head[i] + step).min(self.rate_box.upper[i]);
                    let lo = (head[i] - step).max(self.rate_box.lower[i]);
                    if hi <= lo {
                        continue;
                    }
                    probe[i] = hi;
                    let fp = self.rates(&probe, sample)?;
                    probe[i] = lo;
                    let fm = self.rates(&probe, sample)?;
                    probe[i] = head[i];
                    for kk in 0..fp.len() {
                        j[(i, kk)] = (fp[kk] - fm[kk]) / (hi - lo);
                    }
                }
            }
        }
        Ok(())
    }
}

impl RateModel for HybridRateModel {
    type Sample = ChannelSample;

    fn num_users(&self) -> usize {
        self.dims.users
    }

    fn rates(&self, x: &DVector<f64>, sample: &ChannelSample) -> Result<DVector<f64>> {
        let (phi, p, alpha) = self.split(x)?;
        let f = self.structure.precoder(phi, &self.dims)?;
        let gram = f.adjoint() * &f;
        let mut scr = GainScratch::new(self.dims.users, f.ncols());
        scr.gains(&sample.h, &f, &gram, alpha, self.norm)?;
        let mut r = DVector::zeros(self.dims.users);
        scr.accumulate_rates(p, &mut r);
        Ok(r)
    }

    fn rates_and_jacobian(
        &self,
        x: &DVector<f64>,
        sample: &ChannelSample,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        match self.method {
            JacobianMethod::Analytic => {
                let rj = self.analytic(x, sample)?;
                Ok((rj.rates, rj.jacobian))
            }
            JacobianMethod::FiniteDifference { step } => {
                Ok((self.rates(x, sample)?, self.finite_diff(x, sample, step)?))
            }
        }
    }

    fn average_rates(&self, x: &DVector<f64>, samples: &[ChannelSample]) -> Result<DVector<f64>> {
        let (phi, p, alpha) = self.split(x)?;
        let f = self.structure.precoder(phi, &self.dims)?;
        let gram = f.adjoint() * &f;
        let k = self.dims.users;
        let per: Vec<Result<DVector<f64>>> = samples
            .par_iter()
            .map_init(
                || GainScratch::new(k, f.ncols()),
                |scr, s| {
                    scr.gains(&s.h, &f, &gram, alpha, self.norm)?;
                    let mut r = DVector::zeros(k);
                    scr.accumulate_rates(p, &mut r);
                    Ok(r)
                },
            )
            .collect();
        // summed in sample order so the result does not depend on the thread count
        let mut acc = DVector::zeros(k);
        for r in per {
            acc += r?;
        }
        Ok(acc / samples.len().max(1) as f64)
    }

    fn average_rates_and_jacobian(
        &self,
        x: &DVector<f64>,
        samples: &[ChannelSample],
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let per: Vec<Result<(DVector<f64>, DMatrix<f64>)>> = samples
            .par_iter()
            .map(|s| self.rates_and_jacobian(x, s))
            .collect();
        let mut r = DVector::zeros(self.dims.users);
        let mut j = DMatrix::zeros(x.len(), self.dims.users);
        for item in per {
            let (rs, js) = item?;
            r += rs;
            j += js;
        }
        let count = samples.len().max(1) as f64;
        Ok((r / count, j / count))
    }
}

/// Relative Jacobian error `max |a - b| / (1 + |b|)`.
pub fn relative_error(analytic: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    analytic
        .iter()
        .zip(reference.iter())
        .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs() / (1.0 + b.abs())))
}
