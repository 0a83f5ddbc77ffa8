mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use thp_core::dual_qp::QpMode;
use thp_core::gradients::{HybridRateModel, RateModel};
use thp_core::precoding::{BoxSet, Connectivity, RfStructure, VariableSpace};
use thp_core::problems::{make_power_min, make_sum_throughput, Problem, ProblemSpec};
use thp_core::rng::stream_rng;
use thp_core::channel::{ChannelConfig, ChannelSample, GeometryChannel, SystemDims};
use thp_core::surrogate::{
    run_saa, surrogate_gradient, PowerLaw, RateAverage, SaaOptions, SolverOptions, Ssca, StepSchedule, Trajectory,
    UpdateKind, TRAJECTORY_COLUMNS,
};
use thp_core::ThpError;

/// `r(x; xi) = x[..2] + xi`, so the average rates equal the first two coordinates.
struct IdentityRates;

impl RateModel for IdentityRates {
    type Sample = [f64; 2];

    fn num_users(&self) -> usize {
        2
    }

    fn rates(&self, x: &DVector<f64>, s: &[f64; 2]) -> thp_core::Result<DVector<f64>> {
        Ok(DVector::from_vec(vec![x[0] + s[0], x[1] + s[1]]))
    }

    fn rates_and_jacobian(&self, x: &DVector<f64>, s: &[f64; 2]) -> thp_core::Result<(DVector<f64>, DMatrix<f64>)> {
        let mut j = DMatrix::zeros(x.len(), 2);
        j[(0, 0)] = 1.0;
        j[(1, 1)] = 1.0;
        Ok((self.rates(x, s)?, j))
    }
}

/// `min (r_1 - 1)^2 + (r_2 - 1)^2 + (x_3 - 0.3)^2` s.t. `r_1 + r_2 <= 1`; optimum `(0.5, 0.5, 0.3)`.
struct Quadratic {
    bounds: BoxSet,
}

impl Quadratic {
    fn new() -> Self {
        Quadratic {
            bounds: BoxSet::new(vec![-2.0; 3], vec![2.0; 3]).unwrap(),
        }
    }
}

impl Problem for Quadratic {
    fn num_constraints(&self) -> usize {
        1
    }
    fn dim(&self) -> usize {
        3
    }
    fn bounds(&self) -> &BoxSet {
        &self.bounds
    }
    fn eval_h(&self, i: usize, r: &DVector<f64>, x: &DVector<f64>) -> f64 {
        match i {
            0 => (r[0] - 1.0).powi(2) + (r[1] - 1.0).powi(2) + (x[2] - 0.3).powi(2),
            _ => r[0] + r[1] - 1.0,
        }
    }
    fn grad_h_r(&self, i: usize, r: &DVector<f64>, _x: &DVector<f64>) -> DVector<f64> {
        match i {
            0 => DVector::from_vec(vec![2.0 * (r[0] - 1.0), 2.0 * (r[1] - 1.0)]),
            _ => DVector::from_vec(vec![1.0, 1.0]),
        }
    }
    fn grad_h_x(&self, i: usize, _r: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        match i {
            0 => DVector::from_vec(vec![0.0, 0.0, 2.0 * (x[2] - 0.3)]),
            _ => DVector::zeros(3),
        }
    }
}

fn noise(seed: u64, n: usize, sd: f64) -> Vec<[f64; 2]> {
    let mut rng = stream_rng(seed, 0);
    let d = Normal::new(0.0, sd).unwrap();
    (0..n).map(|_| [d.sample(&mut rng), d.sample(&mut rng)]).collect()
}

#[test]
fn synthetic_problem_converges_to_its_optimum() {
    let (model, problem) = (IdentityRates, Quadratic::new());
    let x0 = DVector::from_vec(vec![-1.5, 1.8, 2.0]);
    let mut ssca = Ssca::new(&model, &problem, StepSchedule::default(), SolverOptions::default(), x0).unwrap();
    ssca.run(noise(3, 500, 0.01)).unwrap();
    let x = &ssca.state.x;
    let target = DVector::from_vec(vec![0.5, 0.5, 0.3]);
    assert!((x - &target).amax() <= 1e-3, "{x}");
    let res = ssca.stationarity_residual().unwrap();
    assert!(res <= 1e-2, "stationarity residual {res}");
}

#[test]
fn synthetic_problem_starting_infeasible_uses_feasibility_updates() {
    let (model, problem) = (IdentityRates, Quadratic::new());
    let x0 = DVector::from_vec(vec![2.0, 2.0, 0.0]);
    let mut ssca = Ssca::new(&model, &problem, StepSchedule::default(), SolverOptions::default(), x0).unwrap();
    ssca.run(noise(4, 300, 0.0)).unwrap();
    assert_eq!(ssca.trajectory.records[0].kind, UpdateKind::Feasibility);
    assert!(ssca.trajectory.records.iter().any(|r| r.kind == UpdateKind::Objective));
    assert!(ssca.state.x[0] + ssca.state.x[1] <= 1.0 + 1e-3);
}

#[test]
fn recursive_average_with_unit_rho_is_the_latest_rate() {
    let (model, problem) = (IdentityRates, Quadratic::new());
    let opts = SolverOptions {
        rate_average: RateAverage::Recursive,
        ..SolverOptions::default()
    };
    let mut sched = StepSchedule::default();
    sched.rho = PowerLaw { scale: 1.0, exponent: 0.0 };
    let x0 = DVector::from_vec(vec![0.1, 0.2, 0.3]);
    let mut ssca = Ssca::new(&model, &problem, sched, opts, x0).unwrap();
    for s in noise(5, 5, 0.3) {
        let x = ssca.state.x.clone();
        ssca.step(s).unwrap();
        assert!((ssca.state.r_hat[0] - (x[0] + s[0])).abs() < 1e-15);
        assert!((ssca.state.r_hat[1] - (x[1] + s[1])).abs() < 1e-15);
    }
}

#[test]
fn exact_average_uses_every_stored_sample_then_a_window() {
    let (model, problem) = (IdentityRates, Quadratic::new());
    let opts = SolverOptions {
        sample_cap: 5,
        ..SolverOptions::default()
    };
    let samples = noise(6, 9, 0.5);
    let x0 = DVector::from_vec(vec![0.1, 0.2, 0.3]);
    let mut ssca = Ssca::new(&model, &problem, StepSchedule::default(), opts, x0).unwrap();
    for (l, s) in samples.iter().enumerate() {
        let x = ssca.state.x.clone();
        ssca.step(*s).unwrap();
        let from = (l + 1).saturating_sub(5);
        let mean0 = samples[from..=l].iter().map(|v| v[0]).sum::<f64>() / (l + 1 - from) as f64;
        assert!((ssca.state.r_hat[0] - (x[0] + mean0)).abs() < 1e-12, "l = {l}");
    }
    assert_eq!(ssca.state.sample_store.len(), 5);
    assert_eq!(ssca.trajectory.window_from, Some(5));
}

fn hybrid_setup(power_min: bool, seed: u64) -> (HybridRateModel, ProblemSpec, GeometryChannel, DVector<f64>) {
    let dims = SystemDims::new(8, 2, 2).unwrap();
    let structure = RfStructure::dps(Connectivity::Full, 3);
    let space = VariableSpace::new(&structure, &dims, 4.0).unwrap();
    let model = HybridRateModel::new(structure, dims, &space).unwrap();
    let problem = if power_min {
        make_power_min(&space, &[0.3, 0.3]).unwrap()
    } else {
        make_sum_throughput(&space, 4.0).unwrap()
    };
    let channel = GeometryChannel::new(&ChannelConfig::new(dims, seed)).unwrap();
    let mut rng = stream_rng(seed, 9);
    let mut x: Vec<f64> = (0..space.phi_len).map(|_| rng.random_range(0.0..6.28)).collect();
    x.extend([2.0, 2.0, 2.0]);
    (model, problem, channel, DVector::from_vec(x))
}

fn frames(channel: &GeometryChannel, seed: u64, n: usize) -> Vec<ChannelSample> {
    let mut rng = stream_rng(seed, 1);
    (0..n).map(|i| channel.sample(&mut rng, i)).collect()
}

#[test]
fn surrogate_touches_the_estimates_at_every_iterate() {
    for power_min in [false, true] {
        let (model, problem, channel, x0) = hybrid_setup(power_min, 21);
        let mut ssca = Ssca::new(&model, &problem, StepSchedule::default(), SolverOptions::default(), x0).unwrap();
        for s in frames(&channel, 21, 40) {
            ssca.step(s).unwrap();
            let qp = ssca.build_subproblem(QpMode::Objective).unwrap();
            let x = &ssca.state.x;
            for j in 0..=problem.num_constraints() {
                let h = problem.eval_h(j, &ssca.state.r_hat, x);
                assert!((qp.eval_row(j, x) - h).abs() <= 1e-14 * (1.0 + h.abs()));
                let g = qp.grad_row(j, x);
                assert_eq!(g, ssca.state.u.row(j).transpose());
            }
        }
    }
}

#[test]
fn unit_rho_tracks_the_newest_surrogate_gradient() {
    let (model, problem, channel, x0) = hybrid_setup(false, 22);
    let mut sched = StepSchedule::default();
    sched.rho = PowerLaw { scale: 1.0, exponent: 0.0 };
    let mut ssca = Ssca::new(&model, &problem, sched, SolverOptions::default(), x0).unwrap();
    for s in frames(&channel, 22, 10) {
        let x = ssca.state.x.clone();
        ssca.step(s.clone()).unwrap();
        let (_, j) = model.rates_and_jacobian(&x, &s).unwrap();
        let u_hat = surrogate_gradient(&problem, &j, &ssca.state.r_hat, &x);
        assert!((&ssca.state.u - u_hat).amax() <= 1e-12);
    }
}

#[test]
fn unit_gamma_jumps_to_the_subproblem_solution() {
    let (model, problem, channel, x0) = hybrid_setup(false, 23);
    let mut sched = StepSchedule::default();
    sched.gamma = PowerLaw { scale: 1.0, exponent: 0.0 };
    let mut ssca = Ssca::new(&model, &problem, sched, SolverOptions::default(), x0).unwrap();
    for s in frames(&channel, 23, 10) {
        let x = ssca.state.x.clone();
        let rec = ssca.step(s).unwrap();
        assert!(((&ssca.state.x - &x).norm() - rec.x_move_norm).abs() <= 1e-12);
    }
}

#[test]
fn single_frame_gives_single_record() {
    let (model, problem, channel, x0) = hybrid_setup(true, 24);
    let mut ssca = Ssca::new(&model, &problem, StepSchedule::default(), SolverOptions::default(), x0).unwrap();
    ssca.run(frames(&channel, 24, 1)).unwrap();
    assert_eq!(ssca.trajectory.len(), 1);
    assert_eq!(ssca.trajectory.records[0].iter, 0);
    assert_eq!(ssca.trajectory.records[0].step_gamma, 1.0);
}

#[test]
fn replay_is_deterministic() {
    let run = || {
        let (model, problem, channel, x0) = hybrid_setup(true, 25);
        let mut ssca = Ssca::new(&model, &problem, StepSchedule::default(), SolverOptions::default(), x0).unwrap();
        ssca.run(frames(&channel, 25, 30)).unwrap();
        let mut buf = Vec::new();
        ssca.trajectory.write_csv(&mut buf).unwrap();
        (buf, ssca.state.x.clone())
    };
    let (a, xa) = run();
    let (b, xb) = run();
    assert_eq!(a, b);
    assert_eq!(xa, xb);
}

#[test]
fn trajectory_csv_round_trips() {
    let (model, problem, channel, x0) = hybrid_setup(true, 26);
    let mut ssca = Ssca::new(&model, &problem, StepSchedule::default(), SolverOptions::default(), x0).unwrap();
    ssca.run(frames(&channel, 26, 12)).unwrap();
    let mut buf = Vec::new();
    ssca.trajectory.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert_eq!(text.lines().next().unwrap(), TRAJECTORY_COLUMNS.join(","));
    let back = Trajectory::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.records, ssca.trajectory.records);
    assert!(Trajectory::read_csv("a,b\n1,2\n".as_bytes()).is_err());
}

#[test]
fn saa_accepts_a_single_sample_and_rejects_none() {
    let (model, problem, channel, x0) = hybrid_setup(false, 27);
    let one = frames(&channel, 27, 1);
    let res = run_saa(&model, &problem, &one, x0.clone(), &SaaOptions::default()).unwrap();
    assert!(problem.bounds().contains(&res.x));
    assert!(!res.trajectory.is_empty());
    assert!(matches!(
        run_saa(&model, &problem, &[], x0, &SaaOptions::default()),
        Err(ThpError::Config(_))
    ));
}

#[test]
fn saa_on_the_synthetic_problem_reaches_the_optimum() {
    let (model, problem) = (IdentityRates, Quadratic::new());
    let x0 = DVector::from_vec(vec![-1.0, 1.0, 0.0]);
    let opts = SaaOptions {
        gamma: PowerLaw { scale: 1.0, exponent: 0.0 },
        ..SaaOptions::default()
    };
    let res = run_saa(&model, &problem, &[[0.0, 0.0]], x0, &opts).unwrap();
    assert!(res.converged);
    let target = DVector::from_vec(vec![0.5, 0.5, 0.3]);
    assert!((&res.x - target).amax() <= 1e-4, "{}", res.x);
}

#[test]
fn rejects_points_outside_the_box() {
    let (model, problem, _, mut x0) = hybrid_setup(false, 28);
    x0[0] = 100.0;
    assert!(Ssca::new(&model, &problem, StepSchedule::default(), SolverOptions::default(), x0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn iterates_stay_in_the_box(seed in 0u64..1000, power_min in any::<bool>()) {
        let (model, problem, channel, x0) = hybrid_setup(power_min, seed);
        let mut ssca = Ssca::new(&model, &problem, StepSchedule::default(), SolverOptions::default(), x0).unwrap();
        for s in frames(&channel, seed, 15) {
            ssca.step(s).unwrap();
            prop_assert!(problem.bounds().contains(&ssca.state.x));
        }
    }
}
