mod common;

use common::{instance_with_dims, random_instance};
use nalgebra::DVector;
use thp_core::channel::{ChannelSample, SystemDims};
use thp_core::gradients::{relative_error, HybridRateModel, RateModel, FD_STEP};
use thp_core::precoding::{
    dft_codebook, Codebook, Connectivity, Normalization, RfMethod, RfStructure, StructureKind,
    ThpVariable, VariableLayout, VariableSpace,
};
use thp_core::{ThpError, C64};

fn check_structure(kind: StructureKind, count: u64) -> f64 {
    let mut worst = 0.0f64;
    let mut informative = 0;
    for seed in 0..count {
        let inst = random_instance(kind, 1000 + seed);
        let (_, j) = inst.model.rates_and_jacobian(&inst.x, &inst.sample).unwrap();
        let fd = inst.model.finite_diff(&inst.x, &inst.sample, FD_STEP).unwrap();
        // one antenna per chain or a single codebook column leave the rates
        // invariant to phi, so a few instances are legitimately flat
        if j.rows(0, inst.model.phi_len()).amax() > 1e-4 {
            informative += 1;
        }
        worst = worst.max(relative_error(&j, &fd));
    }
    assert!(informative * 10 >= count * 9, "only {informative} informative instances");
    worst
}

#[test]
fn dps_full_matches_finite_differences() {
    let err = check_structure(StructureKind::DpsFull, 100);
    assert!(err <= 1e-4, "max relative error {err:.3e}");
}

#[test]
fn codebook_full_matches_finite_differences() {
    let err = check_structure(StructureKind::CodebookFull, 100);
    assert!(err <= 1e-4, "max relative error {err:.3e}");
}

#[test]
fn dps_partial_matches_finite_differences() {
    let err = check_structure(StructureKind::DpsPartial, 100);
    assert!(err <= 1e-4, "max relative error {err:.3e}");
}

#[test]
fn codebook_partial_fallback_matches_finite_differences() {
    let err = check_structure(StructureKind::CodebookPartial, 20);
    assert!(err <= 1e-4, "max relative error {err:.3e}");
}

#[test]
fn literal_normalization_gradient_matches_finite_differences() {
    for seed in 0..20 {
        let inst = random_instance(StructureKind::DpsFull, 3000 + seed);
        let model = inst.model.clone().with_normalization(Normalization::Literal);
        let (_, j) = model.rates_and_jacobian(&inst.x, &inst.sample).unwrap();
        let fd = model.finite_diff(&inst.x, &inst.sample, FD_STEP).unwrap();
        assert!(relative_error(&j, &fd) <= 1e-4);
    }
}

#[test]
fn beta_rows_are_zero_and_own_power_slope_nonnegative() {
    for seed in 0..30 {
        let inst = random_instance(StructureKind::DpsFull, 5000 + seed);
        let mut x = inst.x.clone().data.as_vec().clone();
        x.extend([0.7, 1.3]);
        let x = DVector::from_vec(x);
        let (_, j) = inst.model.rates_and_jacobian(&x, &inst.sample).unwrap();
        let n = x.len();
        let k = inst.model.num_users();
        assert!(j.rows(n - 2, 2).iter().all(|v| *v == 0.0));
        let pl = inst.model.phi_len();
        for kk in 0..k {
            assert!(j[(pl + kk, kk)] >= 0.0);
        }
    }
}

#[test]
fn single_user_power_slope_has_closed_form() {
    let dims = SystemDims::new(8, 2, 1).unwrap();
    let inst = instance_with_dims(StructureKind::DpsFull, dims, 17);
    let pl = inst.model.phi_len();
    let (r, j) = inst.model.rates_and_jacobian(&inst.x, &inst.sample).unwrap();
    let p1 = inst.x[pl];
    let gain = r[0].exp_m1() / p1;
    let expected = gain / (1.0 + p1 * gain);
    assert!((j[(pl, 0)] - expected).abs() < 1e-12);
    let fd = inst.model.finite_diff(&inst.x, &inst.sample, FD_STEP).unwrap();
    assert!((fd[(pl, 0)] - expected).abs() < 1e-6);
}

#[test]
fn halving_the_step_does_not_increase_the_error_beyond_noise() {
    for seed in 0..10 {
        let inst = random_instance(StructureKind::DpsFull, 7000 + seed);
        let (_, j) = inst.model.rates_and_jacobian(&inst.x, &inst.sample).unwrap();
        let coarse = inst.model.finite_diff(&inst.x, &inst.sample, 1e-5).unwrap();
        let fine = inst.model.finite_diff(&inst.x, &inst.sample, 5e-6).unwrap();
        let (ec, ef) = (relative_error(&j, &coarse), relative_error(&j, &fine));
        assert!(ef <= ec.max(1e-8), "{ef:.3e} > {ec:.3e}");
    }
}

#[test]
fn single_block_partial_equals_fully_connected() {
    let dims = SystemDims::new(8, 1, 1).unwrap();
    let full = instance_with_dims(StructureKind::DpsFull, dims, 3);
    let st = RfStructure::dps(Connectivity::Partial, 3);
    let space = VariableSpace::new(&st, &dims, 10.0).unwrap();
    let partial = HybridRateModel::new(st, dims, &space).unwrap();
    let (ra, ja) = full.model.rates_and_jacobian(&full.x, &full.sample).unwrap();
    let (rb, jb) = partial.rates_and_jacobian(&full.x, &full.sample).unwrap();
    assert!((ra - rb).amax() < 1e-14);
    assert!((ja - jb).amax() < 1e-12);
}

#[test]
fn orthogonal_unselected_column_has_zero_gradient() {
    // users see only antennas 0..4, codebook column 3 lives on antennas 4..8
    let dims = SystemDims::new(8, 2, 2).unwrap().with_codebook_size(4);
    let mut c = dft_codebook(8, 3).resize(8, 4, C64::new(0.0, 0.0));
    for r in 0..8 {
        c[(r, 3)] = if r >= 4 { C64::new(0.5, 0.0) } else { C64::new(0.0, 0.0) };
        if r >= 4 {
            for col in 0..3 {
                c[(r, col)] = C64::new(0.0, 0.0);
            }
        }
    }
    let st = RfStructure {
        connectivity: Connectivity::Full,
        method: RfMethod::Codebook(Codebook::Full(c)),
    };
    let space = VariableSpace::new(&st, &dims, 10.0).unwrap();
    let model = HybridRateModel::new(st, dims, &space).unwrap();
    let h = nalgebra::DMatrix::from_fn(2, 8, |k, m| {
        if m < 4 {
            C64::from_polar(1.0 + k as f64, 0.3 * (m * (k + 1)) as f64)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let sample = ChannelSample { h, frame_index: 0 };
    for d3 in [0.0, 0.6] {
        let x = ThpVariable {
            phi: vec![1.0, 0.0, 1.0, d3],
            power: vec![1.0, 0.5],
            alpha: 0.4,
            beta: vec![],
        };
        let rj = model.jacobian_codebook_full(&x, &sample).unwrap();
        assert!(rj.jacobian.row(3).amax() < 1e-12);
        let fd = model.finite_diff(&x.to_vector(), &sample, FD_STEP).unwrap();
        assert!(fd.row(3).amax() < 1e-8);
    }
}

#[test]
fn wrong_structure_is_rejected() {
    let inst = random_instance(StructureKind::DpsFull, 1);
    let layout = VariableLayout::new(inst.model.phi_len(), inst.model.num_users(), 0);
    let x = ThpVariable::from_vector(&layout, &inst.x).unwrap();
    assert!(matches!(
        inst.model.jacobian_codebook_full(&x, &inst.sample),
        Err(ThpError::StructureMismatch { .. })
    ));
    assert!(inst.model.jacobian_dps_full(&x, &inst.sample).is_ok());
}

#[test]
fn fast_rates_agree_with_public_pipeline() {
    for kind in [StructureKind::DpsFull, StructureKind::CodebookFull, StructureKind::DpsPartial] {
        for seed in 0..10 {
            let inst = random_instance(kind, 9000 + seed);
            let fast = inst.model.rates(&inst.x, &inst.sample).unwrap();
            let slow = inst.model.reference_rates(&inst.x, &inst.sample).unwrap();
            assert!((fast - slow).amax() < 1e-12);
            let avg = inst.model.average_rates(&inst.x, std::slice::from_ref(&inst.sample)).unwrap();
            assert!((avg - inst.model.rates(&inst.x, &inst.sample).unwrap()).amax() == 0.0);
        }
    }
}
