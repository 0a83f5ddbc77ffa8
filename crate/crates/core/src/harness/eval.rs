use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSample, GeometryChannel};
use crate::error::{Result, ThpError};
use crate::gradients::RateModel;
use crate::problems::{Problem, ProblemSpec};
use crate::rng::{indexed_rng, STREAM_EVAL};

/// Environment variable capping the evaluation thread count.
pub const THREADS_ENV: &str = "THP_THREADS";

/// Held-out Monte-Carlo rates: one row per sample, one column per user.
#[derive(Debug, Clone)]
pub struct RateSamples {
    pub rates: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub samples: usize,
}

impl RateSamples {
    pub fn estimate(&self) -> RateEstimate {
        let n = self.rates.nrows();
        let mean: Vec<f64> = (0..self.rates.ncols()).map(|k| self.rates.column(k).mean()).collect();
        let stderr = (0..self.rates.ncols())
            .map(|k| stderr_of(self.rates.column(k).iter().copied(), mean[k], n))
            .collect();
        RateEstimate { mean, stderr, samples: n }
    }

    /// Standard error of `w . r` across samples.
    pub fn linear_stderr(&self, w: &DVector<f64>) -> f64 {
        let vals = &self.rates * w;
        stderr_of(vals.iter().copied(), vals.mean(), vals.len())
    }
}

fn stderr_of(vals: impl Iterator<Item = f64>, mean: f64, n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let ss: f64 = vals.map(|v| (v - mean) * (v - mean)).sum();
    (ss / (n - 1) as f64 / n as f64).sqrt()
}

fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|n: &usize| *n > 0)
}

/// Fresh draws from the evaluation stream; sample `i` depends only on `(seed, i)`.
pub fn eval_sample(channel: &GeometryChannel, seed: u64, i: usize) -> ChannelSample {
    let mut rng = indexed_rng(seed, STREAM_EVAL, i as u64);
    channel.sample(&mut rng, i)
}

/// Instantaneous rates at a fixed `x` over `n` held-out channel draws.
pub fn sample_rates<M>(model: &M, channel: &GeometryChannel, x: &DVector<f64>, seed: u64, n: usize) -> Result<RateSamples>
where
    M: RateModel<Sample = ChannelSample>,
{
    if n < 2 {
        return Err(ThpError::Config(format!("need at least 2 evaluation samples, got {n}")));
    }
    let work = || {
        (0..n)
            .into_par_iter()
            .map(|i| model.rates(x, &eval_sample(channel, seed, i)))
            .collect::<Result<Vec<_>>>()
    };
    let rows = match thread_cap() {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| ThpError::Config(format!("{THREADS_ENV}: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let k = model.num_users();
    Ok(RateSamples {
        rates: DMatrix::from_fn(n, k, |i, j| rows[i][j]),
    })
}

pub fn evaluate_average_rates<M>(
    model: &M,
    channel: &GeometryChannel,
    x: &DVector<f64>,
    seed: u64,
    n: usize,
) -> Result<RateEstimate>
where
    M: RateModel<Sample = ChannelSample>,
{
    Ok(sample_rates(model, channel, x, seed, n)?.estimate())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    /// Throughput, utility, power or min weighted rate, by problem.
    pub objective: f64,
    /// Delta-method standard error through `h_0` at the mean rates.
    pub objective_stderr: f64,
    pub rates_nats: Vec<f64>,
    pub rates_stderr: Vec<f64>,
    pub rates_bps: Vec<f64>,
    /// `-h_i` for each constraint row; negative means violated.
    pub constraint_margins: Vec<f64>,
    pub max_violation: f64,
    pub samples: usize,
}

pub fn summarize(problem: &ProblemSpec, x: &DVector<f64>, rs: &RateSamples) -> EvalSummary {
    let est = rs.estimate();
    let r = DVector::from_vec(est.mean.clone());
    let sign = if problem.kind == crate::problems::ProblemKind::PowerMin { 1.0 } else { -1.0 };
    let g = problem.grad_h_r(0, &r, x) * sign;
    let margins: Vec<f64> = (1..=problem.num_constraints())
        .map(|i| -problem.eval_h(i, &r, x))
        .collect();
    let max_violation = margins.iter().fold(0.0f64, |a, m| a.max(-m));
    EvalSummary {
        objective: problem.reported_objective(&r, x),
        objective_stderr: rs.linear_stderr(&g),
        rates_bps: est.mean.iter().map(|v| v / std::f64::consts::LN_2).collect(),
        rates_nats: est.mean,
        rates_stderr: est.stderr,
        constraint_margins: margins,
        max_violation,
        samples: est.samples,
    }
}
