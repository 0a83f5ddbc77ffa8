//! Concrete instances of `min h_0(rbar, x)` s.t. `h_i(rbar, x) <= 0`, `x in X`.

use std::f64::consts::LN_2;
use std::ops::Range;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::channel::SystemDims;
use crate::error::{Result, ThpError};
use crate::precoding::{smooth_l0, BoxSet, RfStructure, StructureKind, VariableLayout, VariableSpace};

/// Upper end of the MWTM auxiliary `beta`, in nats.
pub const BETA_MAX: f64 = 50.0;

/// A problem in the general form: row 0 is the objective, rows `1..=m` the constraints.
pub trait Problem: Sync {
    fn num_constraints(&self) -> usize;
    fn dim(&self) -> usize;
    fn bounds(&self) -> &BoxSet;
    fn eval_h(&self, i: usize, r: &DVector<f64>, x: &DVector<f64>) -> f64;
    fn grad_h_r(&self, i: usize, r: &DVector<f64>, x: &DVector<f64>) -> DVector<f64>;
    fn grad_h_x(&self, i: usize, r: &DVector<f64>, x: &DVector<f64>) -> DVector<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProblemKind {
    #[serde(rename = "sum")]
    SumThroughput,
    #[serde(rename = "pfs")]
    Pfs,
    #[serde(rename = "powermin")]
    PowerMin,
    #[serde(rename = "mwtm")]
    Mwtm,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::SumThroughput => "sum",
            ProblemKind::Pfs => "pfs",
            ProblemKind::PowerMin => "powermin",
            ProblemKind::Mwtm => "mwtm",
        }
    }
}

/// One `h_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Row {
    /// `-sum_k rbar_k`
    NegSumRate,
    /// `-sum_k log(eps + rbar_k)`
    NegLogUtility { eps: f64 },
    /// `sum_k p_k`
    PowerSum,
    /// `sum_k p_k - P`
    PowerBudget { budget: f64 },
    /// `gamma_k - rbar_k`
    RateTarget { user: usize, target: f64 },
    /// `-beta`
    NegBeta,
    /// `w_k beta - rbar_k`
    WeightedRateFloor { user: usize, weight: f64 },
    /// `smooth_l0(d[range]) - rhs`, `range` indexing into `x`
    SmoothL0 { range: Range<usize>, eps: f64, rhs: f64 },
    /// `rhs - sum(d[range])`, keeps the selection weights from shrinking to zero
    SelectionMass { range: Range<usize>, rhs: f64 },
}

/// Targets and constants of the four formulations. Rates are in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTargets {
    pub gamma: Vec<f64>,
    pub weights: Vec<f64>,
    pub power_budget: f64,
    pub pfs_eps: f64,
}

impl RateTargets {
    /// Same target for every user, given in bps/Hz.
    pub fn uniform_bps(users: usize, gamma_bps: f64, power_budget: f64) -> Self {
        RateTargets {
            gamma: vec![gamma_bps * LN_2; users],
            weights: vec![1.0; users],
            power_budget,
            pfs_eps: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma.iter().any(|g| !(*g >= 0.0)) {
            return Err(ThpError::Config("rate targets must be >= 0".into()));
        }
        if self.weights.iter().any(|w| !(*w > 0.0)) {
            return Err(ThpError::Config("weights must be > 0".into()));
        }
        if !(self.power_budget > 0.0) {
            return Err(ThpError::Config("power budget must be > 0".into()));
        }
        if !(self.pfs_eps > 0.0) {
            return Err(ThpError::Config("pfs eps must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub rows: Vec<Row>,
    pub layout: VariableLayout,
    pub bounds: BoxSet,
}

impl ProblemSpec {
    fn build(kind: ProblemKind, rows: Vec<Row>, space: &VariableSpace, beta: &[(f64, f64)]) -> Result<Self> {
        Ok(ProblemSpec {
            kind,
            rows,
            layout: space.layout(beta.len()),
            bounds: space.bounds(beta)?,
        })
    }

    pub fn users(&self) -> usize {
        self.layout.users
    }

    /// Objective in the direction the user reads it: throughput or utility for
    /// the maximization problems, power for power minimization.
    pub fn reported_objective(&self, r: &DVector<f64>, x: &DVector<f64>) -> f64 {
        let h0 = self.eval_h(0, r, x);
        match self.kind {
            ProblemKind::PowerMin => h0,
            _ => -h0,
        }
    }

    fn power_sum(&self, x: &DVector<f64>) -> f64 {
        x.as_slice()[self.layout.power_range()].iter().sum()
    }

    fn beta(&self, x: &DVector<f64>) -> f64 {
        x[self.layout.beta_range().start]
    }
}

impl Problem for ProblemSpec {
    fn num_constraints(&self) -> usize {
        self.rows.len() - 1
    }

    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn bounds(&self) -> &BoxSet {
        &self.bounds
    }

    fn eval_h(&self, i: usize, r: &DVector<f64>, x: &DVector<f64>) -> f64 {
        match &self.rows[i] {
            Row::NegSumRate => -r.sum(),
            Row::NegLogUtility { eps } => -r.iter().map(|v| (eps + v).ln()).sum::<f64>(),
            Row::PowerSum => self.power_sum(x),
            Row::PowerBudget { budget } => self.power_sum(x) - budget,
            Row::RateTarget { user, target } => target - r[*user],
            Row::NegBeta => -self.beta(x),
            Row::WeightedRateFloor { user, weight } => weight * self.beta(x) - r[*user],
            Row::SmoothL0 { range, eps, rhs } => {
                // the box keeps d inside [0, 1], where smooth_l0 cannot fail
                let (v, _) = smooth_l0(&x.as_slice()[range.clone()], *eps).unwrap_or((f64::NAN, vec![]));
                v - rhs
            }
            Row::SelectionMass { range, rhs } => rhs - x.as_slice()[range.clone()].iter().sum::<f64>(),
        }
    }

    fn grad_h_r(&self, i: usize, r: &DVector<f64>, _x: &DVector<f64>) -> DVector<f64> {
        let k = r.len();
        match &self.rows[i] {
            Row::NegSumRate => DVector::from_element(k, -1.0),
            Row::NegLogUtility { eps } => r.map(|v| -1.0 / (eps + v)),
            Row::RateTarget { user, .. } | Row::WeightedRateFloor { user, .. } => {
                let mut g = DVector::zeros(k);
                g[*user] = -1.0;
                g
            }
            _ => DVector::zeros(k),
        }
    }

    fn grad_h_x(&self, i: usize, _r: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(x.len());
        match &self.rows[i] {
            Row::PowerSum | Row::PowerBudget { .. } => {
                for j in self.layout.power_range() {
                    g[j] = 1.0;
                }
            }
            Row::NegBeta => g[self.layout.beta_range().start] = -1.0,
            Row::WeightedRateFloor { weight, .. } => g[self.layout.beta_range().start] = *weight,
            Row::SmoothL0 { range, eps, .. } => {
                if let Ok((_, grad)) = smooth_l0(&x.as_slice()[range.clone()], *eps) {
                    for (j, v) in range.clone().zip(grad) {
                        g[j] = v;
                    }
                }
            }
            Row::SelectionMass { range, .. } => {
                for j in range.clone() {
                    g[j] = -1.0;
                }
            }
            _ => {}
        }
        g
    }
}

fn check_budget(p: f64) -> Result<()> {
    if !(p > 0.0) {
        return Err(ThpError::Config(format!("power budget must be > 0, got {p}")));
    }
    Ok(())
}

pub fn make_sum_throughput(space: &VariableSpace, budget: f64) -> Result<ProblemSpec> {
    check_budget(budget)?;
    ProblemSpec::build(
        ProblemKind::SumThroughput,
        vec![Row::NegSumRate, Row::PowerBudget { budget }],
        space,
        &[],
    )
}

pub fn make_pfs(space: &VariableSpace, budget: f64, eps: f64) -> Result<ProblemSpec> {
    check_budget(budget)?;
    if !(eps > 0.0) {
        return Err(ThpError::Config(format!("pfs eps must be > 0, got {eps}")));
    }
    ProblemSpec::build(
        ProblemKind::Pfs,
        vec![Row::NegLogUtility { eps }, Row::PowerBudget { budget }],
        space,
        &[],
    )
}

/// `gamma` in nats.
pub fn make_power_min(space: &VariableSpace, gamma: &[f64]) -> Result<ProblemSpec> {
    if gamma.len() != space.users {
        return Err(ThpError::Config(format!(
            "need {} rate targets, got {}",
            space.users,
            gamma.len()
        )));
    }
    if let Some(g) = gamma.iter().find(|g| !(**g >= 0.0)) {
        return Err(ThpError::Config(format!("rate targets must be >= 0, got {g}")));
    }
    let mut rows = vec![Row::PowerSum];
    rows.extend(
        gamma
            .iter()
            .enumerate()
            .map(|(user, target)| Row::RateTarget { user, target: *target }),
    );
    ProblemSpec::build(ProblemKind::PowerMin, rows, space, &[])
}

pub fn make_mwtm(space: &VariableSpace, budget: f64, weights: &[f64]) -> Result<ProblemSpec> {
    check_budget(budget)?;
    if weights.len() != space.users || weights.iter().any(|w| !(*w > 0.0)) {
        return Err(ThpError::Config(format!(
            "need {} positive weights, got {weights:?}",
            space.users
        )));
    }
    let mut rows = vec![Row::NegBeta];
    rows.extend(
        weights
            .iter()
            .enumerate()
            .map(|(user, weight)| Row::WeightedRateFloor { user, weight: *weight }),
    );
    rows.push(Row::PowerBudget { budget });
    ProblemSpec::build(ProblemKind::Mwtm, rows, space, &[(0.0, BETA_MAX)])
}

pub fn make_problem(kind: ProblemKind, space: &VariableSpace, targets: &RateTargets) -> Result<ProblemSpec> {
    targets.validate()?;
    match kind {
        ProblemKind::SumThroughput => make_sum_throughput(space, targets.power_budget),
        ProblemKind::Pfs => make_pfs(space, targets.power_budget, targets.pfs_eps),
        ProblemKind::PowerMin => make_power_min(space, &targets.gamma),
        ProblemKind::Mwtm => make_mwtm(space, targets.power_budget, &targets.weights),
    }
}

/// Appends the smoothed cardinality constraint on the selection weights: one
/// row `smooth_l0(d) <= S` for the fully-connected codebook, one row
/// `smooth_l0(d_s) <= 1` per RF chain for the partially-connected one. Each
/// is paired with a mass row `sum(d) >= S` (per block `>= 1`), otherwise the
/// cardinality row is met by scaling every weight towards zero.
pub fn attach_sparse_constraint(
    mut spec: ProblemSpec,
    structure: &RfStructure,
    dims: &SystemDims,
    eps: f64,
) -> Result<ProblemSpec> {
    if !(eps > 0.0) {
        return Err(ThpError::Config(format!("l0 eps must be > 0, got {eps}")));
    }
    let n = dims.codebook_size;
    match structure.kind() {
        StructureKind::CodebookFull => {
            let rhs = dims.rf_chains as f64;
            spec.rows.push(Row::SmoothL0 { range: 0..n, eps, rhs });
            spec.rows.push(Row::SelectionMass { range: 0..n, rhs });
        }
        StructureKind::CodebookPartial => {
            for s in 0..dims.rf_chains {
                spec.rows.push(Row::SmoothL0 {
                    range: s * n..(s + 1) * n,
                    eps,
                    rhs: 1.0,
                });
                spec.rows.push(Row::SelectionMass {
                    range: s * n..(s + 1) * n,
                    rhs: 1.0,
                });
            }
        }
        other => {
            return Err(ThpError::StructureMismatch {
                expected: "a codebook structure".into(),
                actual: other.to_string(),
            })
        }
    }
    Ok(spec)
}
