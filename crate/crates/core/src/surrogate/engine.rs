use std::collections::VecDeque;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{IterationRecord, StepSchedule, Trajectory, UpdateKind};
use crate::dual_qp::{
    solve_feasibility_qp_from, solve_objective_qp_from, DualOptions, QpMode, QpStatus,
    QuadraticSubproblem,
};
use crate::error::{dim_err, Result, ThpError};
use crate::gradients::RateModel;
use crate::precoding::BoxSet;
use crate::problems::Problem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateAverage {
    /// Recompute the rates of every stored sample at the current iterate.
    #[default]
    Exact,
    /// `rhat = (1 - rho) rhat + rho r(x; H)`.
    Recursive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Proximal weights per row; empty means 1 for every row.
    pub tau: Vec<f64>,
    pub dual: DualOptions,
    /// `nu <= feasibility_tol` selects the objective update.
    pub feasibility_tol: f64,
    pub sample_cap: usize,
    pub rate_average: RateAverage,
    pub max_skips: usize,
    pub record_wall_time: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tau: Vec::new(),
            dual: DualOptions::default(),
            feasibility_tol: 1e-9,
            sample_cap: 2000,
            rate_average: RateAverage::Exact,
            max_skips: 3,
            record_wall_time: false,
        }
    }
}

impl SolverOptions {
    pub(crate) fn tau_for(&self, rows: usize) -> Result<DVector<f64>> {
        if self.tau.is_empty() {
            return Ok(DVector::from_element(rows, 1.0));
        }
        if self.tau.len() != rows {
            return Err(ThpError::Config(format!(
                "tau needs {rows} entries (objective plus constraints), got {}",
                self.tau.len()
            )));
        }
        if self.tau.iter().any(|t| !(*t > 0.0)) {
            return Err(ThpError::Config("tau entries must be > 0".into()));
        }
        Ok(DVector::from_vec(self.tau.clone()))
    }
}

/// Solution of one round of subproblems.
#[derive(Debug, Clone)]
pub struct Direction {
    pub x_bar: DVector<f64>,
    pub kind: UpdateKind,
    pub nu: f64,
    pub lambda: DVector<f64>,
}

/// Solves the feasibility subproblem, then the objective one when the former
/// reports `nu <= tol`. Keeps multipliers between calls as warm starts.
#[derive(Debug, Clone)]
pub struct SubproblemSolver {
    pub dual: DualOptions,
    pub feasibility_tol: f64,
    lambda_obj: Option<DVector<f64>>,
    lambda_feas: Option<DVector<f64>>,
}

impl SubproblemSolver {
    pub fn new(dual: DualOptions, feasibility_tol: f64) -> Self {
        SubproblemSolver {
            dual,
            feasibility_tol,
            lambda_obj: None,
            lambda_feas: None,
        }
    }

    /// `None` when a subproblem failed to converge.
    pub fn solve(&mut self, qp: &QuadraticSubproblem) -> Result<Option<Direction>> {
        let mut qp = qp.clone();
        if qp.num_constraints() > 0 {
            qp.mode = QpMode::Feasibility;
            let feas = solve_feasibility_qp_from(&qp, self.lambda_feas.as_ref(), &self.dual)?;
            if !feas.converged() {
                return Ok(None);
            }
            self.lambda_feas = Some(feas.lambda.clone());
            if feas.nu > self.feasibility_tol {
                return Ok(Some(Direction {
                    x_bar: feas.x_bar,
                    kind: UpdateKind::Feasibility,
                    nu: feas.nu,
                    lambda: feas.lambda,
                }));
            }
            qp.mode = QpMode::Objective;
            let obj = solve_objective_qp_from(&qp, self.lambda_obj.as_ref(), &self.dual)?;
            return Ok(match obj.status {
                QpStatus::Converged => {
                    self.lambda_obj = Some(obj.lambda.clone());
                    Some(Direction {
                        x_bar: obj.x_bar,
                        kind: UpdateKind::Objective,
                        nu: feas.nu,
                        lambda: obj.lambda,
                    })
                }
                // the surrogate constraints are only marginally satisfiable
                QpStatus::Infeasible => {
                    self.lambda_obj = None;
                    Some(Direction {
                        x_bar: feas.x_bar,
                        kind: UpdateKind::Feasibility,
                        nu: feas.nu,
                        lambda: feas.lambda,
                    })
                }
                QpStatus::IterationLimit => None,
            });
        }
        qp.mode = QpMode::Objective;
        let obj = solve_objective_qp_from(&qp, None, &self.dual)?;
        Ok(obj.converged().then_some(Direction {
            x_bar: obj.x_bar,
            kind: UpdateKind::Objective,
            nu: f64::NEG_INFINITY,
            lambda: obj.lambda,
        }))
    }
}

/// `uhat_i = J grad_r h_i(rhat, x) + grad_x h_i(rhat, x)`, one row per `i`.
pub fn surrogate_gradient<P: Problem + ?Sized>(
    problem: &P,
    jacobian: &DMatrix<f64>,
    r_hat: &DVector<f64>,
    x: &DVector<f64>,
) -> DMatrix<f64> {
    let rows = problem.num_constraints() + 1;
    let mut u = DMatrix::zeros(rows, x.len());
    for i in 0..rows {
        let g = jacobian * problem.grad_h_r(i, r_hat, x) + problem.grad_h_x(i, r_hat, x);
        u.row_mut(i).copy_from(&g.transpose());
    }
    u
}

pub(crate) fn row_values<P: Problem + ?Sized>(problem: &P, r: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(problem.num_constraints() + 1, |i, _| problem.eval_h(i, r, x))
}

pub(crate) fn max_constraint(values: &DVector<f64>) -> f64 {
    values.iter().skip(1).copied().fold(f64::NAN, f64::max)
}

/// Convex combination `(1 - gamma) x + gamma xbar`, clamped against rounding.
pub(crate) fn average_into(x: &mut DVector<f64>, x_bar: &DVector<f64>, gamma: f64, bounds: &BoxSet) {
    for i in 0..x.len() {
        x[i] = bounds.clamp_coord(i, (1.0 - gamma) * x[i] + gamma * x_bar[i]);
    }
}

#[derive(Debug, Clone)]
pub struct SurrogateState<S> {
    pub l: usize,
    pub x: DVector<f64>,
    /// `(m + 1) x n` tracked gradients.
    pub u: DMatrix<f64>,
    pub r_hat: DVector<f64>,
    pub sample_store: VecDeque<S>,
    pub tau: DVector<f64>,
    pub consecutive_skips: usize,
}

/// The online optimizer for one problem and rate model.
pub struct Ssca<'a, M: RateModel, P: Problem> {
    model: &'a M,
    problem: &'a P,
    schedule: StepSchedule,
    opts: SolverOptions,
    solver: SubproblemSolver,
    pub state: SurrogateState<M::Sample>,
    pub trajectory: Trajectory,
    /// Wall time per step in milliseconds, kept even when not written out.
    pub step_ms: Vec<f64>,
}

impl<'a, M: RateModel, P: Problem> Ssca<'a, M, P>
where
    M::Sample: Clone,
{
    pub fn new(model: &'a M, problem: &'a P, schedule: StepSchedule, opts: SolverOptions, x0: DVector<f64>) -> Result<Self> {
        schedule.validate()?;
        let n = problem.dim();
        if x0.len() != n {
            return dim_err(format!("initial point has {} entries, problem has {n}", x0.len()));
        }
        if !problem.bounds().contains(&x0) {
            return Err(ThpError::Domain("initial point lies outside the box".into()));
        }
        let rows = problem.num_constraints() + 1;
        let tau = opts.tau_for(rows)?;
        Ok(Ssca {
            model,
            problem,
            schedule,
            solver: SubproblemSolver::new(opts.dual, opts.feasibility_tol),
            opts,
            state: SurrogateState {
                l: 0,
                x: x0,
                u: DMatrix::zeros(rows, n),
                r_hat: DVector::zeros(model.num_users()),
                sample_store: VecDeque::new(),
                tau,
                consecutive_skips: 0,
            },
            trajectory: Trajectory::default(),
            step_ms: Vec::new(),
        })
    }

    pub fn schedule(&self) -> &StepSchedule {
        &self.schedule
    }

    /// Appends `sample` and refreshes `rhat` at the current iterate.
    /// `latest` is `r(x; sample)` when already known.
    pub fn update_rate_average(&mut self, sample: &M::Sample, latest: Option<&DVector<f64>>) -> Result<()> {
        let st = &mut self.state;
        match self.opts.rate_average {
            RateAverage::Exact => {
                st.sample_store.push_back(sample.clone());
                if st.sample_store.len() > self.opts.sample_cap {
                    st.sample_store.pop_front();
                    self.trajectory.window_from.get_or_insert(st.l);
                }
                let all = st.sample_store.make_contiguous();
                st.r_hat = self.model.average_rates(&st.x, all)?;
            }
            RateAverage::Recursive => {
                let rho = self.schedule.rho(st.l);
                let r = match latest {
                    Some(r) => r.clone(),
                    None => self.model.rates(&st.x, sample)?,
                };
                st.r_hat = &st.r_hat * (1.0 - rho) + r * rho;
            }
        }
        Ok(())
    }

    /// `uhat` from the Jacobian at the newest sample and the current `rhat`.
    pub fn surrogate_gradient_sample(&self, jacobian: &DMatrix<f64>) -> DMatrix<f64> {
        surrogate_gradient(self.problem, jacobian, &self.state.r_hat, &self.state.x)
    }

    pub fn update_tracked_gradients(&mut self, u_hat: &DMatrix<f64>, rho: f64) {
        self.state.u = &self.state.u * (1.0 - rho) + u_hat * rho;
    }

    pub fn build_subproblem(&self, mode: QpMode) -> Result<QuadraticSubproblem> {
        let st = &self.state;
        QuadraticSubproblem::new(
            st.x.clone(),
            st.tau.clone(),
            st.u.clone(),
            row_values(self.problem, &st.r_hat, &st.x),
            self.problem.bounds().clone(),
            mode,
        )
    }

    pub fn step(&mut self, sample: M::Sample) -> Result<IterationRecord> {
        let t0 = Instant::now();
        let l = self.state.l;
        let (rho, gamma) = (self.schedule.rho(l), self.schedule.gamma(l));
        let (r_new, jac) = self.model.rates_and_jacobian(&self.state.x, &sample)?;
        self.update_rate_average(&sample, Some(&r_new))?;
        let u_hat = self.surrogate_gradient_sample(&jac);
        self.update_tracked_gradients(&u_hat, rho);
        let qp = self.build_subproblem(QpMode::Objective)?;
        let values = qp.values.clone();
        let dir = self.solver.solve(&qp)?;
        let (kind, nu, moved) = match dir {
            Some(d) => {
                let moved = (&d.x_bar - &self.state.x).norm();
                average_into(&mut self.state.x, &d.x_bar, gamma, self.problem.bounds());
                self.state.consecutive_skips = 0;
                (d.kind, d.nu, moved)
            }
            None => {
                self.state.consecutive_skips += 1;
                if self.state.consecutive_skips >= self.opts.max_skips {
                    return Err(ThpError::Aborted(self.state.consecutive_skips));
                }
                (UpdateKind::Skipped, f64::NAN, f64::NAN)
            }
        };
        self.state.l += 1;
        let ms = t0.elapsed().as_secs_f64() * 1e3;
        self.step_ms.push(ms);
        let rec = IterationRecord {
            iter: l,
            kind,
            objective_est: values[0],
            max_constraint_est: max_constraint(&values),
            nu,
            step_gamma: gamma,
            step_rho: rho,
            x_move_norm: moved,
            wall_ms: if self.opts.record_wall_time { ms } else { 0.0 },
        };
        self.trajectory.push(rec.clone());
        Ok(rec)
    }

    pub fn run<I: IntoIterator<Item = M::Sample>>(&mut self, samples: I) -> Result<&Trajectory> {
        for s in samples {
            self.step(s)?;
        }
        Ok(&self.trajectory)
    }

    /// KKT residual of the current surrogate problem at the current iterate:
    /// projected-gradient stationarity, constraint violation and complementarity.
    pub fn stationarity_residual(&self) -> Result<f64> {
        let qp = self.build_subproblem(QpMode::Objective)?;
        let sol = solve_objective_qp_from(&qp, None, &self.opts.dual)?;
        if !sol.converged() {
            return Ok(f64::INFINITY);
        }
        let x = &self.state.x;
        let mut g = qp.u.row(0).transpose();
        for (j, l) in sol.lambda.iter().enumerate() {
            g += qp.u.row(j + 1).transpose() * *l;
        }
        let b = self.problem.bounds();
        let stat = (0..x.len())
            .map(|i| (x[i] - b.clamp_coord(i, x[i] - g[i])).abs())
            .fold(0.0f64, f64::max);
        let viol = qp.values.iter().skip(1).fold(0.0f64, |a, v| a.max(*v));
        let comp = sol
            .lambda
            .iter()
            .zip(qp.values.iter().skip(1))
            .fold(0.0f64, |a, (l, v)| a.max((l * v).abs()));
        Ok(stat.max(viol).max(comp))
    }
}
