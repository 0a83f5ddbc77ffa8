//! Oracle suites behind the `gradcheck` and `qpcheck` verbs.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelConfig, GeometryChannel, SystemDims};
use crate::dual_qp::oracle::{random_subproblem, solve_primal};
use crate::dual_qp::{solve_feasibility_qp, solve_objective_qp, DualOptions, QpMode, QpStatus};
use crate::error::Result;
use crate::gradients::{relative_error, HybridRateModel, RateModel, FD_STEP};
use crate::precoding::{Connectivity, RfStructure, StructureKind, VariableSpace};
use crate::rng::{indexed_rng, SimRng, STREAM_ORACLE};

pub const GRADCHECK_TOL: f64 = 1e-4;
pub const QPCHECK_TOL: f64 = 1e-6;

/// Structures with a closed-form Jacobian.
pub const ANALYTIC_STRUCTURES: [StructureKind; 3] = [
    StructureKind::DpsFull,
    StructureKind::CodebookFull,
    StructureKind::DpsPartial,
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradcheckLine {
    pub structure: StructureKind,
    pub instances: usize,
    pub max_rel_err: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QpcheckLine {
    pub mode: QpMode,
    pub instances: usize,
    pub max_value_gap: f64,
    pub max_duality_gap: f64,
    pub non_converged: usize,
    pub passed: bool,
}

pub fn default_structure(kind: StructureKind, dims: &SystemDims) -> RfStructure {
    match kind {
        StructureKind::DpsFull => RfStructure::dps(Connectivity::Full, 3),
        StructureKind::DpsPartial => RfStructure::dps(Connectivity::Partial, 3),
        StructureKind::CodebookFull => RfStructure::dft_codebook(Connectivity::Full, dims),
        StructureKind::CodebookPartial => RfStructure::dft_codebook(Connectivity::Partial, dims),
    }
}

/// `K <= S <= 4`, `M <= 16`; partial structures get at least two antennas per chain.
pub fn random_dims(rng: &mut SimRng, kind: StructureKind) -> SystemDims {
    let k = rng.random_range(1..=4);
    let s = rng.random_range(k..=4);
    let m = match kind {
        StructureKind::DpsPartial | StructureKind::CodebookPartial => s * rng.random_range(2..=16 / s),
        _ => rng.random_range(s.max(4)..=16),
    };
    let dims = SystemDims {
        antennas: m,
        rf_chains: s,
        users: k,
        codebook_size: m,
    };
    match kind {
        StructureKind::CodebookFull => dims.with_codebook_size(rng.random_range(s..=m)),
        StructureKind::CodebookPartial => dims.with_codebook_size(m / s),
        _ => dims,
    }
}

/// Worst analytic-vs-central-difference error over `count` random instances.
pub fn gradcheck_structure(kind: StructureKind, count: usize, seed: u64) -> Result<GradcheckLine> {
    let mut worst = 0.0f64;
    for i in 0..count {
        let mut rng = indexed_rng(seed, STREAM_ORACLE, (kind as u64) << 32 | i as u64);
        let dims = random_dims(&mut rng, kind);
        let structure = default_structure(kind, &dims);
        let space = VariableSpace::new(&structure, &dims, 10.0)?;
        let model = HybridRateModel::new(structure.clone(), dims, &space)?;
        let mut cfg = ChannelConfig::new(dims, rng.random());
        cfg.num_paths = rng.random_range(1..=6);
        let sample = GeometryChannel::new(&cfg)?.sample(&mut rng, 0);
        let mut x = Vec::with_capacity(space.phi_len + dims.users + 1);
        for _ in 0..space.phi_len {
            x.push(if structure.is_codebook() {
                rng.random_range(0.05..0.95)
            } else {
                rng.random_range(0.0..std::f64::consts::TAU)
            });
        }
        for _ in 0..dims.users {
            x.push(rng.random_range(0.1..2.0));
        }
        x.push(10f64.powf(rng.random_range(-1.3..0.7)));
        let x = DVector::from_vec(x);
        let (_, j) = model.rates_and_jacobian(&x, &sample)?;
        let fd = model.finite_diff(&x, &sample, FD_STEP)?;
        worst = worst.max(relative_error(&j, &fd));
    }
    Ok(GradcheckLine {
        structure: kind,
        instances: count,
        max_rel_err: worst,
        passed: worst <= GRADCHECK_TOL,
    })
}

pub fn gradcheck(count: usize, seed: u64) -> Result<Vec<GradcheckLine>> {
    ANALYTIC_STRUCTURES
        .iter()
        .map(|k| gradcheck_structure(*k, count, seed))
        .collect()
}

/// Dual solver against the primal barrier oracle on random subproblems with
/// `n <= 20`, `m <= 3`. Objective-mode draws are kept only when the oracle
/// finds them strictly feasible.
pub fn qpcheck_mode(mode: QpMode, count: usize, seed: u64) -> Result<QpcheckLine> {
    let opts = DualOptions::default();
    let mut rng = indexed_rng(seed, STREAM_ORACLE, 1 << 40 | mode as u64);
    let (mut vgap, mut dgap, mut bad) = (0.0f64, 0.0f64, 0);
    let mut done = 0;
    while done < count {
        let n = rng.random_range(1..=20);
        let m = rng.random_range(1..=3);
        let qp = random_subproblem(&mut rng, n, m, mode);
        let orc = solve_primal(&qp)?;
        match mode {
            QpMode::Objective => {
                if orc.nu >= -1e-3 {
                    continue;
                }
                let sol = solve_objective_qp(&qp, &opts)?;
                vgap = vgap.max((sol.primal_value - orc.value).abs());
                dgap = dgap.max(sol.duality_gap().abs() / (1.0 + sol.primal_value.abs()));
                bad += usize::from(sol.status != QpStatus::Converged);
            }
            QpMode::Feasibility => {
                let sol = solve_feasibility_qp(&qp, &opts)?;
                vgap = vgap.max((sol.nu - orc.nu).abs());
                dgap = dgap.max(sol.duality_gap().abs() / (1.0 + sol.nu.abs()));
                bad += usize::from(sol.status != QpStatus::Converged);
            }
        }
        done += 1;
    }
    Ok(QpcheckLine {
        mode,
        instances: count,
        max_value_gap: vgap,
        max_duality_gap: dgap,
        non_converged: bad,
        passed: vgap <= QPCHECK_TOL && dgap <= QPCHECK_TOL && bad == 0,
    })
}

pub fn qpcheck(count: usize, seed: u64) -> Result<Vec<QpcheckLine>> {
    [QpMode::Objective, QpMode::Feasibility]
        .iter()
        .map(|m| qpcheck_mode(*m, count, seed))
        .collect()
}
