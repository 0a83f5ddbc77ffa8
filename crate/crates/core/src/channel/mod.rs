//! Geometry-based multipath channel for a half-wavelength uniform linear array.
//!
//! The channel of user `k` is `h_k = sum_i alpha_{k,i} a(phi_{k,i})` over `num_paths`
//! paths. Path angles and per-path variances are the channel *statistics*: they are
//! drawn once per [`GeometryChannel`] and stay fixed, while the complex path
//! coefficients are redrawn on every [`GeometryChannel::sample`] call.

pub mod dump;

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result, ThpError};
use crate::rng::{stream_rng, STREAM_STATISTICS};
use crate::C64;

/// Static system dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemDims {
    /// Antennas `M`.
    pub antennas: usize,
    /// RF chains `S`.
    pub rf_chains: usize,
    /// Single-antenna users `K`.
    pub users: usize,
    /// Codebook size `N`; only read by codebook structures.
    pub codebook_size: usize,
}

impl SystemDims {
    pub fn new(antennas: usize, rf_chains: usize, users: usize) -> Result<Self> {
        let dims = SystemDims {
            antennas,
            rf_chains,
            users,
            codebook_size: antennas,
        };
        dims.validate()?;
        Ok(dims)
    }

    pub fn with_codebook_size(mut self, n: usize) -> Self {
        self.codebook_size = n;
        self
    }

    /// Checks `1 <= K <= S <= M`.
    pub fn validate(&self) -> Result<()> {
        if self.antennas == 0 || self.users == 0 {
            return dim_err("need at least one antenna and one user");
        }
        if !(self.users <= self.rf_chains && self.rf_chains <= self.antennas) {
            return dim_err(format!(
                "need K <= S <= M, got K={} S={} M={}",
                self.users, self.rf_chains, self.antennas
            ));
        }
        Ok(())
    }

    /// Partially-connected structures additionally need `S | M`.
    pub fn validate_partial(&self) -> Result<()> {
        self.validate()?;
        if self.antennas % self.rf_chains != 0 {
            return dim_err(format!(
                "partially-connected structure needs S | M, got M={} S={}",
                self.antennas, self.rf_chains
            ));
        }
        Ok(())
    }

    /// Antennas per sub-array in the partially-connected structure.
    pub fn subarray_len(&self) -> usize {
        self.antennas / self.rf_chains
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub dims: SystemDims,
    pub num_paths: usize,
    /// Laplacian scale of the path angles around each user's center angle, in degrees.
    pub angle_spread_deg: f64,
    /// Range of the per-user large-scale gains, in dB.
    pub path_gain_db_range: (f64, f64),
    /// Linear per-user gains `g_k`. Empty means "draw from `path_gain_db_range`".
    pub per_user_gains: Vec<f64>,
    /// Seed of the statistics stream (gains, angles, path variances).
    pub rng_seed: u64,
}

impl ChannelConfig {
    pub fn new(dims: SystemDims, rng_seed: u64) -> Self {
        ChannelConfig {
            dims,
            num_paths: 6,
            angle_spread_deg: 10.0,
            path_gain_db_range: (-10.0, 10.0),
            per_user_gains: Vec::new(),
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if self.num_paths == 0 {
            return Err(ThpError::Config("num_paths must be >= 1".into()));
        }
        if !(self.angle_spread_deg > 0.0) {
            return Err(ThpError::Config("angle_spread_deg must be > 0".into()));
        }
        let (lo, hi) = self.path_gain_db_range;
        if !(lo <= hi) {
            return Err(ThpError::Config(format!(
                "path gain range needs low <= high, got ({lo}, {hi})"
            )));
        }
        if !self.per_user_gains.is_empty() {
            if self.per_user_gains.len() != self.dims.users {
                return Err(ThpError::Config(format!(
                    "{} user gains given for {} users",
                    self.per_user_gains.len(),
                    self.dims.users
                )));
            }
            if self.per_user_gains.iter().any(|g| !(*g > 0.0)) {
                return Err(ThpError::Config("user gains must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// One realization of the `K x M` composite downlink channel; row `k` is `h_k^H`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSample {
    pub h: DMatrix<C64>,
    pub frame_index: usize,
}

impl ChannelSample {
    pub fn users(&self) -> usize {
        self.h.nrows()
    }

    pub fn antennas(&self) -> usize {
        self.h.ncols()
    }

    /// `h_k` as a column vector.
    pub fn user_channel(&self, k: usize) -> DVector<C64> {
        self.h.row(k).adjoint()
    }

    pub fn is_finite(&self) -> bool {
        self.h.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// ULA response with half-wavelength spacing: element `m` is `exp(j pi m sin(angle))`.
pub fn array_response(angle_rad: f64, antennas: usize) -> Result<DVector<C64>> {
    if antennas == 0 {
        return dim_err("array response needs at least one antenna");
    }
    let phase = PI * angle_rad.sin();
    Ok(DVector::from_fn(antennas, |m, _| {
        C64::from_polar(1.0, phase * m as f64)
    }))
}

/// Draws `g_k = 10^(u/10)` with `u` uniform on the configured dB range.
pub fn draw_user_gains<R: Rng + ?Sized>(cfg: &ChannelConfig, rng: &mut R) -> Result<Vec<f64>> {
    let (lo, hi) = cfg.path_gain_db_range;
    if !(lo <= hi) {
        return Err(ThpError::Config(format!(
            "path gain range needs low <= high, got ({lo}, {hi})"
        )));
    }
    Ok((0..cfg.dims.users)
        .map(|_| {
            let db = if lo == hi {
                lo
            } else {
                lo + (hi - lo) * rng.random::<f64>()
            };
            10f64.powf(db / 10.0)
        })
        .collect())
}

/// Zero-mean Laplacian draw with scale `b` (density proportional to `exp(-|x|/b)`).
fn laplacian<R: Rng + ?Sized>(rng: &mut R, b: f64) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    -b * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
}

/// Circularly-symmetric complex Gaussian with variance `var`.
pub(crate) fn complex_normal<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(s * re, s * im)
}

/// Channel statistics for one super-frame plus the sampler for its realizations.
#[derive(Debug, Clone)]
pub struct GeometryChannel {
    dims: SystemDims,
    user_gains: Vec<f64>,
    center_angles: Vec<f64>,
    path_angles: Vec<Vec<f64>>,
    path_variances: Vec<Vec<f64>>,
    steering: Vec<Vec<DVector<C64>>>,
}

impl GeometryChannel {
    /// Fixes the channel statistics from the config's own seed.
    pub fn new(cfg: &ChannelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = stream_rng(cfg.rng_seed, STREAM_STATISTICS);
        let user_gains = if cfg.per_user_gains.is_empty() {
            draw_user_gains(cfg, &mut rng)?
        } else {
            cfg.per_user_gains.clone()
        };
        let scale = cfg.angle_spread_deg.to_radians();
        let k = cfg.dims.users;
        let mut center_angles = Vec::with_capacity(k);
        let mut path_angles = Vec::with_capacity(k);
        let mut path_variances = Vec::with_capacity(k);
        let mut steering = Vec::with_capacity(k);
        for &gain in &user_gains {
            let center = -FRAC_PI_2 + PI * rng.random::<f64>();
            let angles: Vec<f64> = (0..cfg.num_paths)
                .map(|_| center + laplacian(&mut rng, scale))
                .collect();
            let raw: Vec<f64> = (0..cfg.num_paths)
                .map(|_| {
                    let e: f64 = Exp1.sample(&mut rng);
                    e.max(1e-12)
                })
                .collect();
            let total: f64 = raw.iter().sum();
            let variances: Vec<f64> = raw.iter().map(|v| v / total * gain).collect();
            let vectors = angles
                .iter()
                .map(|&a| array_response(a, cfg.dims.antennas))
                .collect::<Result<Vec<_>>>()?;
            center_angles.push(center);
            path_angles.push(angles);
            path_variances.push(variances);
            steering.push(vectors);
        }
        Ok(GeometryChannel {
            dims: cfg.dims,
            user_gains,
            center_angles,
            path_angles,
            path_variances,
            steering,
        })
    }

    pub fn dims(&self) -> SystemDims {
        self.dims
    }

    pub fn user_gains(&self) -> &[f64] {
        &self.user_gains
    }

    pub fn center_angles(&self) -> &[f64] {
        &self.center_angles
    }

    pub fn path_angles(&self, user: usize) -> &[f64] {
        &self.path_angles[user]
    }

    /// `sigma_{k,i}^2`; sums to `g_k` over the paths of user `k`.
    pub fn path_variances(&self, user: usize) -> &[f64] {
        &self.path_variances[user]
    }

    /// Draws a fresh realization with new path coefficients.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, frame_index: usize) -> ChannelSample {
        let (k_users, m) = (self.dims.users, self.dims.antennas);
        let mut h = DMatrix::zeros(k_users, m);
        for k in 0..k_users {
            let mut row = DVector::<C64>::zeros(m);
            for (var, a) in self.path_variances[k].iter().zip(&self.steering[k]) {
                let coeff = complex_normal(rng, *var);
                row.axpy(coeff, a, C64::new(1.0, 0.0));
            }
            // row holds h_k; H stores h_k^H
            for j in 0..m {
                h[(k, j)] = row[j].conj();
            }
        }
        ChannelSample { h, frame_index }
    }
}
