//! Experiment configuration, orchestration, held-out evaluation and outputs.

mod config;
mod eval;
mod reference;
pub mod suites;

pub use config::{
    locate_key, ChannelSection, ConnectivityTag, ExperimentConfig, JacobianTag, MethodTag, OutputSection,
    ProblemSection, ScheduleSection, SolverSection, StructureSection, SystemSection,
};
pub use eval::{
    eval_sample, evaluate_average_rates, sample_rates, summarize, EvalSummary, RateEstimate, RateSamples,
    THREADS_ENV,
};
pub use reference::config_reference;

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{dump::write_dump, ChannelConfig, ChannelSample, GeometryChannel, SystemDims};
use crate::error::{Result, ThpError};
use crate::gradients::HybridRateModel;
use crate::precoding::{project_rf, RfStructure, StructureKind, ThpVariable, VariableSpace};
use crate::problems::{attach_sparse_constraint, make_problem, ProblemKind, ProblemSpec, RateTargets};
use crate::rng::{stream_rng, SimRng, STREAM_FRAMES, STREAM_INIT};
use crate::surrogate::{run_saa, SaaOptions, Ssca, Trajectory, UpdateKind};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const REPORT_FILE: &str = "report.json";
pub const VARIABLE_FILE: &str = "variable.json";
pub const DUMP_FILE: &str = "frames.thpc";

/// Everything a run needs, assembled from a validated config.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub dims: SystemDims,
    pub channel: GeometryChannel,
    pub structure: RfStructure,
    pub space: VariableSpace,
    pub problem: ProblemSpec,
    pub model: HybridRateModel,
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let s = &cfg.system;
        let mut dims = SystemDims::new(s.antennas, s.rf_chains, s.users)?;
        if let Some(n) = s.codebook_size {
            dims = dims.with_codebook_size(n);
        }
        let mut ch = ChannelConfig::new(dims, cfg.seed);
        ch.num_paths = cfg.channel.num_paths;
        ch.angle_spread_deg = cfg.channel.angle_spread_deg;
        ch.path_gain_db_range = (cfg.channel.path_gain_db[0], cfg.channel.path_gain_db[1]);
        ch.per_user_gains = cfg.channel.user_gains.clone();
        let channel = GeometryChannel::new(&ch)?;
        let structure = cfg.rf_structure(&dims);
        structure.validate(&dims)?;
        let p = &cfg.problem;
        let space = VariableSpace::new(&structure, &dims, p.power_budget)?;
        let weights = if p.weights.is_empty() { vec![1.0; dims.users] } else { p.weights.clone() };
        let targets = RateTargets {
            gamma: cfg.gamma_nats(),
            weights,
            power_budget: p.power_budget,
            pfs_eps: p.pfs_eps,
        };
        let mut problem = make_problem(p.kind, &space, &targets)?;
        if structure.is_codebook() {
            problem = attach_sparse_constraint(problem, &structure, &dims, p.l0_eps)?;
        }
        let model = HybridRateModel::new(structure.clone(), dims, &space)?
            .with_normalization(cfg.structure.normalization)
            .with_method(cfg.jacobian_method());
        Ok(Experiment {
            cfg,
            dims,
            channel,
            structure,
            space,
            problem,
            model,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(ExperimentConfig::load(path)?)
    }

    /// Random phases on `[0, 2 pi)` or uniform selection weights, equal power
    /// `P / K`, `alpha = K` and zero auxiliaries.
    pub fn initial_point(&self) -> DVector<f64> {
        let mut rng = stream_rng(self.cfg.seed, STREAM_INIT);
        let dims = &self.dims;
        let phi: Vec<f64> = match self.structure.kind() {
            StructureKind::DpsFull | StructureKind::DpsPartial => (0..self.space.phi_len)
                .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
                .collect(),
            StructureKind::CodebookFull => selection_weights(&mut rng, dims.codebook_size, 1, dims.rf_chains as f64),
            StructureKind::CodebookPartial => selection_weights(&mut rng, dims.codebook_size, dims.rf_chains, 1.0),
        };
        let k = dims.users as f64;
        let v = ThpVariable {
            phi,
            power: vec![self.cfg.problem.power_budget / k; dims.users],
            alpha: k,
            beta: vec![0.0; self.problem.layout.beta_range().len()],
        };
        let mut x = v.to_vector();
        self.problem.bounds.clamp(&mut x);
        x
    }

    /// Channel samples of frames `0..count`, in order.
    pub fn frames(&self, count: usize) -> Vec<ChannelSample> {
        let mut rng = stream_rng(self.cfg.seed, STREAM_FRAMES);
        (0..count).map(|i| self.channel.sample(&mut rng, i)).collect()
    }

    /// Replaces the RF parameters by their discrete projection.
    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let range = self.problem.layout.phi_range();
        let phi = project_rf(&self.structure, &self.dims, &x.as_slice()[range.clone()])?;
        let mut out = x.clone();
        for (i, v) in range.zip(phi) {
            out[i] = v;
        }
        Ok(out)
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> Result<EvalSummary> {
        let rs = sample_rates(&self.model, &self.channel, x, self.cfg.seed, self.cfg.eval_samples)?;
        Ok(summarize(&self.problem, x, &rs))
    }

    pub fn saved_variable(&self, x: &DVector<f64>) -> Result<SavedVariable> {
        let layout = self.problem.layout;
        Ok(SavedVariable {
            structure: self.structure.kind(),
            phase_bits: self.structure.phase_bits(),
            dims: self.dims,
            problem: self.problem.kind,
            relaxed: ThpVariable::from_vector(&layout, x)?,
            projected: ThpVariable::from_vector(&layout, &self.project(x)?)?,
        })
    }

    /// Runs the online optimizer over `frames` fresh samples.
    pub fn run_ssca(&self) -> Result<RunOutcome> {
        let frames = self.frames(self.cfg.frames);
        let mut ssca = Ssca::new(
            &self.model,
            &self.problem,
            self.cfg.step_schedule(),
            self.cfg.solver_options(),
            self.initial_point(),
        )?;
        ssca.run(frames)?;
        let stationarity = ssca.stationarity_residual().ok().filter(|v| v.is_finite());
        Ok(RunOutcome {
            x: ssca.state.x.clone(),
            trajectory: ssca.trajectory.clone(),
            step_ms: ssca.step_ms.clone(),
            stationarity,
            converged: true,
        })
    }

    /// Sample-average baseline over the first `collection_frames` frames.
    pub fn run_saa(&self) -> Result<RunOutcome> {
        let samples = self.frames(self.cfg.collection_frames);
        let opts = SaaOptions {
            max_iterations: self.cfg.solver.saa_iterations,
            stop_tol: self.cfg.solver.saa_stop_tol,
            gamma: self.cfg.step_schedule().gamma,
            solver: self.cfg.solver_options(),
        };
        let res = run_saa(&self.model, &self.problem, &samples, self.initial_point(), &opts)?;
        Ok(RunOutcome {
            x: res.x,
            trajectory: res.trajectory,
            step_ms: res.iteration_ms,
            stationarity: None,
            converged: res.converged,
        })
    }

    pub fn report(&self, verb: &str, outcome: &RunOutcome) -> Result<RunReport> {
        let relaxed = self.evaluate(&outcome.x)?;
        let projected = self.evaluate(&self.project(&outcome.x)?)?;
        let counts = |k: UpdateKind| outcome.trajectory.records.iter().filter(|r| r.kind == k).count();
        Ok(RunReport {
            verb: verb.to_string(),
            problem: self.problem.kind,
            structure: self.structure.kind(),
            seed: self.cfg.seed,
            frames: self.cfg.frames,
            eval_samples: self.cfg.eval_samples,
            projection_delta: ProjectionDelta {
                objective: projected.objective - relaxed.objective,
                rates_nats: projected
                    .rates_nats
                    .iter()
                    .zip(&relaxed.rates_nats)
                    .map(|(a, b)| a - b)
                    .collect(),
            },
            projected,
            relaxed,
            timing: TimingSummary::from_ms(&outcome.step_ms),
            updates: UpdateCounts {
                objective: counts(UpdateKind::Objective),
                feasibility: counts(UpdateKind::Feasibility),
                skipped: counts(UpdateKind::Skipped),
            },
            stationarity_residual: outcome.stationarity,
            converged: outcome.converged,
            window_from: outcome.trajectory.window_from,
        })
    }

    /// Runs `verb` (`run` or `saa`) and writes the trajectory, report and
    /// variable files into `out`.
    pub fn execute(&self, verb: &str, out: &Path) -> Result<RunReport> {
        let outcome = match verb {
            "run" => self.run_ssca()?,
            "saa" => self.run_saa()?,
            other => return Err(ThpError::Config(format!("unknown run verb {other:?}"))),
        };
        let report = self.report(verb, &outcome)?;
        std::fs::create_dir_all(out)?;
        outcome.trajectory.write_csv(BufWriter::new(File::create(out.join(TRAJECTORY_FILE))?))?;
        write_json(&out.join(REPORT_FILE), &report)?;
        write_json(&out.join(VARIABLE_FILE), &self.saved_variable(&outcome.x)?)?;
        if self.cfg.channel.dump {
            let n = if verb == "saa" { self.cfg.collection_frames } else { self.cfg.frames };
            write_dump(BufWriter::new(File::create(out.join(DUMP_FILE))?), &self.frames(n))?;
        }
        Ok(report)
    }

    /// Held-out evaluation of a saved variable; `relaxed` selects the
    /// pre-projection copy.
    pub fn evaluate_saved(&self, saved: &SavedVariable, relaxed: bool) -> Result<EvalSummary> {
        if saved.structure != self.structure.kind() || saved.dims != self.dims {
            return Err(ThpError::StructureMismatch {
                expected: format!("{} with {:?}", self.structure.kind(), self.dims),
                actual: format!("{} with {:?}", saved.structure, saved.dims),
            });
        }
        let v = if relaxed { &saved.relaxed } else { &saved.projected };
        if v.layout() != self.problem.layout {
            return Err(ThpError::Dimension(format!(
                "saved variable layout {:?} does not match {:?}",
                v.layout(),
                self.problem.layout
            )));
        }
        self.evaluate(&v.to_vector())
    }
}

/// `blocks` groups of `n` weights, each summing to `mass`. A uniform start is a
/// fixed point of the linearized cardinality row, so the weights are jittered.
fn selection_weights(rng: &mut SimRng, n: usize, blocks: usize, mass: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * blocks);
    for _ in 0..blocks {
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
        let total: f64 = raw.iter().sum();
        out.extend(raw.iter().map(|v| (v * mass / total).min(1.0)));
    }
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    use std::io::Write;
    writeln!(w)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub x: DVector<f64>,
    pub trajectory: Trajectory,
    pub step_ms: Vec<f64>,
    pub stationarity: Option<f64>,
    pub converged: bool,
}

/// On-disk form of a solution: structure tag, dimensions, and the relaxed and
/// projected copies of the variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedVariable {
    pub structure: StructureKind,
    pub phase_bits: Option<u32>,
    pub dims: SystemDims,
    pub problem: ProblemKind,
    pub relaxed: ThpVariable,
    pub projected: ThpVariable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionDelta {
    pub objective: f64,
    pub rates_nats: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub iterations: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub max_ms: f64,
    pub total_ms: f64,
}

impl TimingSummary {
    pub fn from_ms(ms: &[f64]) -> Self {
        let mut sorted = ms.to_vec();
        sorted.sort_by(f64::total_cmp);
        let total: f64 = ms.iter().sum();
        let n = ms.len();
        TimingSummary {
            iterations: n,
            mean_ms: if n > 0 { total / n as f64 } else { 0.0 },
            median_ms: if n > 0 { sorted[n / 2] } else { 0.0 },
            max_ms: sorted.last().copied().unwrap_or(0.0),
            total_ms: total,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateCounts {
    pub objective: usize,
    pub feasibility: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub verb: String,
    pub problem: ProblemKind,
    pub structure: StructureKind,
    pub seed: u64,
    pub frames: usize,
    pub eval_samples: usize,
    /// After projecting the RF parameters onto their discrete set.
    pub projected: EvalSummary,
    pub relaxed: EvalSummary,
    /// `projected - relaxed`.
    pub projection_delta: ProjectionDelta,
    pub timing: TimingSummary,
    pub updates: UpdateCounts,
    pub stationarity_residual: Option<f64>,
    pub converged: bool,
    pub window_from: Option<usize>,
}
