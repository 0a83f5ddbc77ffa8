use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::engine::{average_into, max_constraint, row_values, surrogate_gradient};
use super::{IterationRecord, PowerLaw, SolverOptions, StepSchedule, SubproblemSolver, Trajectory, UpdateKind};
use crate::dual_qp::{QpMode, QuadraticSubproblem};
use crate::error::{Result, ThpError};
use crate::gradients::RateModel;
use crate::problems::Problem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaaOptions {
    pub max_iterations: usize,
    /// Stop once `||xbar - x|| <= stop_tol`.
    pub stop_tol: f64,
    pub gamma: PowerLaw,
    pub solver: SolverOptions,
}

impl Default for SaaOptions {
    fn default() -> Self {
        SaaOptions {
            max_iterations: 200,
            stop_tol: 1e-5,
            gamma: StepSchedule::default().gamma,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SaaResult {
    pub x: DVector<f64>,
    pub trajectory: Trajectory,
    pub iteration_ms: Vec<f64>,
    pub converged: bool,
}

/// Deterministic successive convex approximation of the sample-average problem
/// over a fixed sample set, with full-batch rates and Jacobians.
pub fn run_saa<M: RateModel, P: Problem>(
    model: &M,
    problem: &P,
    samples: &[M::Sample],
    x0: DVector<f64>,
    opts: &SaaOptions,
) -> Result<SaaResult> {
    if samples.is_empty() {
        return Err(ThpError::Config("the sample-average baseline needs at least one sample".into()));
    }
    if !problem.bounds().contains(&x0) {
        return Err(ThpError::Domain("initial point lies outside the box".into()));
    }
    let tau = opts.solver.tau_for(problem.num_constraints() + 1)?;
    let mut solver = SubproblemSolver::new(opts.solver.dual, opts.solver.feasibility_tol);
    let mut x = x0;
    let mut traj = Trajectory::default();
    let mut times = Vec::new();
    let mut skips = 0;
    let mut converged = false;
    for it in 0..opts.max_iterations {
        let t0 = Instant::now();
        let gamma = opts.gamma.at(it);
        let (r, j) = model.average_rates_and_jacobian(&x, samples)?;
        let u = surrogate_gradient(problem, &j, &r, &x);
        let values = row_values(problem, &r, &x);
        let qp = QuadraticSubproblem::new(x.clone(), tau.clone(), u, values.clone(), problem.bounds().clone(), QpMode::Objective)?;
        let (kind, nu, moved) = match solver.solve(&qp)? {
            Some(d) => {
                skips = 0;
                let moved = (&d.x_bar - &x).norm();
                if moved <= opts.stop_tol {
                    converged = true;
                } else {
                    average_into(&mut x, &d.x_bar, gamma, problem.bounds());
                }
                (d.kind, d.nu, moved)
            }
            None => {
                skips += 1;
                if skips >= opts.solver.max_skips {
                    return Err(ThpError::Aborted(skips));
                }
                (UpdateKind::Skipped, f64::NAN, f64::NAN)
            }
        };
        let ms = t0.elapsed().as_secs_f64() * 1e3;
        times.push(ms);
        traj.push(IterationRecord {
            iter: it,
            kind,
            objective_est: values[0],
            max_constraint_est: max_constraint(&values),
            nu,
            step_gamma: gamma,
            step_rho: 1.0,
            x_move_norm: moved,
            wall_ms: if opts.solver.record_wall_time { ms } else { 0.0 },
        });
        if converged {
            break;
        }
    }
    Ok(SaaResult {
        x,
        trajectory: traj,
        iteration_ms: times,
        converged,
    })
}
