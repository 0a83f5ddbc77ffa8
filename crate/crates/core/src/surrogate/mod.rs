//! The online stochastic successive convex approximation loop and the
//! sample-average baseline.

mod engine;
mod saa;
mod schedule;

pub use engine::{
    surrogate_gradient, Direction, RateAverage, SolverOptions, Ssca, SubproblemSolver,
    SurrogateState,
};
pub use saa::{run_saa, SaaOptions, SaaResult};
pub use schedule::{PowerLaw, StepSchedule};

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateKind {
    Objective,
    Feasibility,
    Skipped,
}

impl UpdateKind {
    pub fn as_str(self) -> &'static str {
        match self {
            UpdateKind::Objective => "objective",
            UpdateKind::Feasibility => "feasibility",
            UpdateKind::Skipped => "skipped",
        }
    }
}

/// One row of `trajectory.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub kind: UpdateKind,
    /// `h_0(rhat, x)` at the iterate the step started from.
    pub objective_est: f64,
    pub max_constraint_est: f64,
    pub nu: f64,
    pub step_gamma: f64,
    pub step_rho: f64,
    /// `||xbar - x||_2`.
    pub x_move_norm: f64,
    pub wall_ms: f64,
}

pub const TRAJECTORY_COLUMNS: [&str; 9] = [
    "iter",
    "kind",
    "objective_est",
    "max_constraint_est",
    "nu",
    "step_gamma",
    "step_rho",
    "x_move_norm",
    "wall_ms",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<IterationRecord>,
    /// First iteration whose rate average ran on a sliding window, if any.
    pub window_from: Option<usize>,
}

impl Trajectory {
    pub fn push(&mut self, r: IterationRecord) {
        self.records.push(r);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRAJECTORY_COLUMNS)?;
        for r in &self.records {
            w.write_record([
                r.iter.to_string(),
                r.kind.as_str().to_string(),
                fmt(r.objective_est),
                fmt(r.max_constraint_est),
                fmt(r.nu),
                fmt(r.step_gamma),
                fmt(r.step_rho),
                fmt(r.x_move_norm),
                fmt(r.wall_ms),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let headers = rd.headers()?.clone();
        if headers.iter().ne(TRAJECTORY_COLUMNS) {
            return Err(crate::ThpError::Format(format!("unexpected trajectory header {headers:?}")));
        }
        let mut t = Trajectory::default();
        for row in rd.deserialize() {
            t.push(row?);
        }
        Ok(t)
    }

    /// Mean of `x_move_norm` over the iteration range `[from, to)`, skipped steps excluded.
    pub fn mean_move(&self, from: usize, to: usize) -> f64 {
        let s = &self.records[from.min(self.len())..to.min(self.len())];
        let moves: Vec<f64> = s.iter().map(|r| r.x_move_norm).filter(|v| v.is_finite()).collect();
        moves.iter().sum::<f64>() / moves.len().max(1) as f64
    }
}

/// Shortest round-trip representation; `NaN` stays readable by the csv reader.
fn fmt(v: f64) -> String {
    format!("{v:?}")
}
