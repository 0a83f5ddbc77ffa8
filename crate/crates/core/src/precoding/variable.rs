use std::f64::consts::PI;
use std::ops::Range;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::structure::RfStructure;
use crate::channel::SystemDims;
use crate::error::{dim_err, Result, ThpError};

/// Offsets of the blocks of the flat THP variable `x = [phi; p; alpha; beta]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableLayout {
    pub phi_len: usize,
    pub users: usize,
    pub beta_len: usize,
}

impl VariableLayout {
    pub fn new(phi_len: usize, users: usize, beta_len: usize) -> Self {
        VariableLayout {
            phi_len,
            users,
            beta_len,
        }
    }

    pub fn dim(&self) -> usize {
        self.phi_len + self.users + 1 + self.beta_len
    }

    pub fn phi_range(&self) -> Range<usize> {
        0..self.phi_len
    }

    pub fn power_range(&self) -> Range<usize> {
        self.phi_len..self.phi_len + self.users
    }

    pub fn alpha_index(&self) -> usize {
        self.phi_len + self.users
    }

    pub fn beta_range(&self) -> Range<usize> {
        let start = self.alpha_index() + 1;
        start..start + self.beta_len
    }

    /// Number of rows of a rate Jacobian that can be nonzero (`phi`, `p`, `alpha`).
    pub fn rate_dim(&self) -> usize {
        self.alpha_index() + 1
    }
}

/// The THP variable in structured form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThpVariable {
    /// `theta` (phase shifters) or `d` (codebook selection weights).
    pub phi: Vec<f64>,
    pub power: Vec<f64>,
    pub alpha: f64,
    /// Problem-specific auxiliaries.
    pub beta: Vec<f64>,
}

impl ThpVariable {
    pub fn layout(&self) -> VariableLayout {
        VariableLayout::new(self.phi.len(), self.power.len(), self.beta.len())
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let mut v = Vec::with_capacity(self.layout().dim());
        v.extend_from_slice(&self.phi);
        v.extend_from_slice(&self.power);
        v.push(self.alpha);
        v.extend_from_slice(&self.beta);
        DVector::from_vec(v)
    }

    pub fn from_vector(layout: &VariableLayout, x: &DVector<f64>) -> Result<Self> {
        if x.len() != layout.dim() {
            return dim_err(format!("expected {} entries, got {}", layout.dim(), x.len()));
        }
        let s = x.as_slice();
        Ok(ThpVariable {
            phi: s[layout.phi_range()].to_vec(),
            power: s[layout.power_range()].to_vec(),
            alpha: s[layout.alpha_index()],
            beta: s[layout.beta_range()].to_vec(),
        })
    }
}

/// Decoupled box `X = X_1 x ... x X_n` with finite bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return dim_err("box bounds have different lengths");
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(ThpError::Domain(format!(
                    "box interval {i} is [{lo}, {hi}]; need finite lo <= hi"
                )));
            }
        }
        Ok(BoxSet { lower, upper })
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn clamp_coord(&self, i: usize, v: f64) -> f64 {
        v.clamp(self.lower[i], self.upper[i])
    }

    pub fn clamp(&self, x: &mut DVector<f64>) {
        for i in 0..x.len() {
            x[i] = self.clamp_coord(i, x[i]);
        }
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.len()
            && x
                .iter()
                .enumerate()
                .all(|(i, v)| *v >= self.lower[i] && *v <= self.upper[i])
    }
}

/// Smallest admissible RZF regularization.
pub const ALPHA_MIN: f64 = 1e-6;
/// Largest admissible RZF regularization; keeps the box compact.
pub const ALPHA_MAX: f64 = 1e3;
/// Phase coordinates are boxed to `[-4 pi, 4 pi]`, wide enough that the
/// bounds never bind in practice.
pub const PHASE_BOUND: f64 = 4.0 * PI;

/// Box of the rate-relevant coordinates `(phi, p, alpha)` for a structure.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableSpace {
    pub phi_len: usize,
    pub users: usize,
    pub phi_bounds: (f64, f64),
    pub power_max: f64,
    pub alpha_bounds: (f64, f64),
}

impl VariableSpace {
    /// Uses `p_max = 4 P / K` for the power budget `P`.
    pub fn new(structure: &RfStructure, dims: &SystemDims, power_budget: f64) -> Result<Self> {
        if !(power_budget > 0.0) {
            return Err(ThpError::Config(format!(
                "power budget must be positive, got {power_budget}"
            )));
        }
        let phi_bounds = if structure.is_codebook() {
            (0.0, 1.0)
        } else {
            (-PHASE_BOUND, PHASE_BOUND)
        };
        Ok(VariableSpace {
            phi_len: structure.phi_len(dims),
            users: dims.users,
            phi_bounds,
            power_max: 4.0 * power_budget / dims.users as f64,
            alpha_bounds: (ALPHA_MIN, ALPHA_MAX),
        })
    }

    /// Box over `[phi; p; alpha; beta]` with the given auxiliary intervals.
    pub fn bounds(&self, beta_bounds: &[(f64, f64)]) -> Result<BoxSet> {
        let mut lo = vec![self.phi_bounds.0; self.phi_len];
        let mut hi = vec![self.phi_bounds.1; self.phi_len];
        lo.extend(std::iter::repeat_n(0.0, self.users));
        hi.extend(std::iter::repeat_n(self.power_max, self.users));
        lo.push(self.alpha_bounds.0);
        hi.push(self.alpha_bounds.1);
        for (l, h) in beta_bounds {
            lo.push(*l);
            hi.push(*h);
        }
        BoxSet::new(lo, hi)
    }

    pub fn layout(&self, beta_len: usize) -> VariableLayout {
        VariableLayout::new(self.phi_len, self.users, beta_len)
    }
}
