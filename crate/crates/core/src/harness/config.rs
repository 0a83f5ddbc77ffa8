use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dual_qp::{DualMethod, DualOptions};
use crate::error::{Result, ThpError};
use crate::gradients::{JacobianMethod, FD_STEP};
use crate::precoding::{Connectivity, Normalization, RfStructure};
use crate::problems::ProblemKind;
use crate::surrogate::{PowerLaw, RateAverage, SolverOptions, StepSchedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    pub antennas: usize,
    pub rf_chains: usize,
    pub users: usize,
    /// Defaults to the antenna count.
    pub codebook_size: Option<usize>,
}

impl Default for SystemSection {
    fn default() -> Self {
        SystemSection {
            antennas: 16,
            rf_chains: 4,
            users: 2,
            codebook_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub num_paths: usize,
    pub angle_spread_deg: f64,
    pub path_gain_db: [f64; 2],
    /// Explicit linear user gains; drawn from `path_gain_db` when empty.
    pub user_gains: Vec<f64>,
    pub dump: bool,
}

impl Default for ChannelSection {
    fn default() -> Self {
        ChannelSection {
            num_paths: 6,
            angle_spread_deg: 10.0,
            path_gain_db: [-10.0, 10.0],
            user_gains: Vec::new(),
            dump: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectivityTag {
    Full,
    Partial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodTag {
    Dps,
    Codebook,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianTag {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StructureSection {
    pub connectivity: ConnectivityTag,
    pub method: MethodTag,
    pub phase_bits: u32,
    pub normalization: Normalization,
    pub jacobian: JacobianTag,
    pub fd_step: f64,
}

impl Default for StructureSection {
    fn default() -> Self {
        StructureSection {
            connectivity: ConnectivityTag::Full,
            method: MethodTag::Dps,
            phase_bits: 3,
            normalization: Normalization::UnitColumns,
            jacobian: JacobianTag::Analytic,
            fd_step: FD_STEP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSection {
    pub kind: ProblemKind,
    pub power_budget: f64,
    /// Rate targets in bps/Hz; one entry applies to every user.
    pub gamma_bps: Vec<f64>,
    /// MWTM weights; empty means all ones.
    pub weights: Vec<f64>,
    pub pfs_eps: f64,
    pub l0_eps: f64,
}

impl Default for ProblemSection {
    fn default() -> Self {
        ProblemSection {
            kind: ProblemKind::SumThroughput,
            power_budget: 10.0,
            gamma_bps: vec![2.0],
            weights: Vec::new(),
            pfs_eps: 0.01,
            l0_eps: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub rho_scale: f64,
    pub rho_exponent: f64,
    pub gamma_scale: f64,
    pub gamma_exponent: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        let s = StepSchedule::default();
        ScheduleSection {
            rho_scale: s.rho.scale,
            rho_exponent: s.rho.exponent,
            gamma_scale: s.gamma.scale,
            gamma_exponent: s.gamma.exponent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub tau: Vec<f64>,
    pub dual_method: DualMethod,
    pub dual_tolerance: f64,
    pub dual_max_iterations: usize,
    pub feasibility_tol: f64,
    pub sample_cap: usize,
    pub rate_average: RateAverage,
    pub max_skips: usize,
    pub saa_iterations: usize,
    pub saa_stop_tol: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let o = SolverOptions::default();
        SolverSection {
            tau: o.tau,
            dual_method: o.dual.method,
            dual_tolerance: o.dual.tolerance,
            dual_max_iterations: o.dual.max_iterations,
            feasibility_tol: o.feasibility_tol,
            sample_cap: o.sample_cap,
            rate_average: o.rate_average,
            max_skips: o.max_skips,
            saa_iterations: 200,
            saa_stop_tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
    /// Writes measured step times into `wall_ms`; otherwise the column is 0 so
    /// reruns produce identical files.
    pub record_wall_time: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: "out".into(),
            record_wall_time: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub frames: usize,
    pub collection_frames: usize,
    pub eval_samples: usize,
    /// Recorded only; the optimizer updates once per frame.
    pub slots_per_frame: usize,
    pub system: SystemSection,
    pub channel: ChannelSection,
    pub structure: StructureSection,
    pub problem: ProblemSection,
    pub schedule: ScheduleSection,
    pub solver: SolverSection,
    pub output: OutputSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            frames: 300,
            collection_frames: 200,
            eval_samples: 2000,
            slots_per_frame: 10,
            system: SystemSection::default(),
            channel: ChannelSection::default(),
            structure: StructureSection::default(),
            problem: ProblemSection::default(),
            schedule: ScheduleSection::default(),
            solver: SolverSection::default(),
            output: OutputSection::default(),
        }
    }
}

/// Line (1-based) of `key = ...` inside `[section]`, or of a top-level key.
pub fn locate_key(text: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = Some(line.trim_matches(|c| c == '[' || c == ']').trim().to_string());
            continue;
        }
        let Some((k, _)) = line.split_once('=') else { continue };
        if k.trim() == key && current.as_deref() == section {
            return Some(i + 1);
        }
    }
    None
}

fn bad(text: &str, origin: &str, section: Option<&str>, key: &str, msg: String) -> ThpError {
    let at = match locate_key(text, section, key) {
        Some(line) => format!("{origin}:{line}"),
        None => origin.to_string(),
    };
    let name = match section {
        Some(s) => format!("{s}.{key}"),
        None => key.to_string(),
    };
    ThpError::Config(format!("{at}: {name}: {msg}"))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            let at = match line {
                Some(l) => format!("{origin}:{l}"),
                None => origin.to_string(),
            };
            ThpError::Config(format!("{at}: {}", e.message()))
        })?;
        cfg.check(text, origin)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.check("", "config")
    }

    fn check(&self, text: &str, origin: &str) -> Result<()> {
        let err = |s: Option<&str>, k: &str, m: String| Err(bad(text, origin, s, k, m));
        if self.frames == 0 {
            return err(None, "frames", "must be >= 1".into());
        }
        if self.eval_samples < 100 {
            return err(None, "eval_samples", format!("must be >= 100, got {}", self.eval_samples));
        }
        if self.collection_frames == 0 {
            return err(None, "collection_frames", "must be >= 1".into());
        }
        let sys = Some("system");
        let s = &self.system;
        if s.antennas == 0 || s.users == 0 || s.users > s.rf_chains || s.rf_chains > s.antennas {
            return err(sys, "users", format!(
                "need 1 <= users <= rf_chains <= antennas, got K={} S={} M={}",
                s.users, s.rf_chains, s.antennas
            ));
        }
        if self.structure.connectivity == ConnectivityTag::Partial && s.antennas % s.rf_chains != 0 {
            return err(sys, "rf_chains", "partial connectivity needs rf_chains to divide antennas".into());
        }
        if let Some(n) = s.codebook_size {
            if n == 0 || (self.structure.connectivity == ConnectivityTag::Full && n < s.rf_chains) {
                return err(sys, "codebook_size", format!("{n} is too small"));
            }
        }
        let ch = Some("channel");
        if self.channel.num_paths == 0 {
            return err(ch, "num_paths", "must be >= 1".into());
        }
        if !(self.channel.angle_spread_deg > 0.0) {
            return err(ch, "angle_spread_deg", "must be > 0".into());
        }
        if self.channel.path_gain_db[0] > self.channel.path_gain_db[1] {
            return err(ch, "path_gain_db", "low end exceeds high end".into());
        }
        if !self.channel.user_gains.is_empty()
            && (self.channel.user_gains.len() != s.users || self.channel.user_gains.iter().any(|g| !(*g > 0.0)))
        {
            return err(ch, "user_gains", format!("need {} positive gains", s.users));
        }
        let st = Some("structure");
        if self.structure.method == MethodTag::Dps && self.structure.phase_bits == 0 {
            return err(st, "phase_bits", "must be >= 1".into());
        }
        if !(self.structure.fd_step > 0.0) {
            return err(st, "fd_step", "must be > 0".into());
        }
        let pr = Some("problem");
        let p = &self.problem;
        if !(p.power_budget > 0.0) {
            return err(pr, "power_budget", "must be > 0".into());
        }
        if p.kind == ProblemKind::PowerMin {
            if !(p.gamma_bps.len() == 1 || p.gamma_bps.len() == s.users) {
                return err(pr, "gamma_bps", format!("need 1 or {} targets", s.users));
            }
            if p.gamma_bps.iter().any(|g| !(*g >= 0.0)) {
                return err(pr, "gamma_bps", "targets must be >= 0".into());
            }
        }
        if !p.weights.is_empty() && (p.weights.len() != s.users || p.weights.iter().any(|w| !(*w > 0.0))) {
            return err(pr, "weights", format!("need {} positive weights", s.users));
        }
        if !(p.pfs_eps > 0.0) {
            return err(pr, "pfs_eps", "must be > 0".into());
        }
        if !(p.l0_eps > 0.0) {
            return err(pr, "l0_eps", "must be > 0".into());
        }
        let sc = self.step_schedule();
        if sc.validate().is_err() {
            return err(Some("schedule"), "rho_scale", "scales must be > 0 and exponents >= 0".into());
        }
        let so = Some("solver");
        if !(self.solver.dual_tolerance > 0.0) {
            return err(so, "dual_tolerance", "must be > 0".into());
        }
        if self.solver.sample_cap == 0 {
            return err(so, "sample_cap", "must be >= 1".into());
        }
        if self.solver.max_skips == 0 {
            return err(so, "max_skips", "must be >= 1".into());
        }
        if self.solver.tau.iter().any(|t| !(*t > 0.0)) {
            return err(so, "tau", "entries must be > 0".into());
        }
        Ok(())
    }

    pub fn step_schedule(&self) -> StepSchedule {
        StepSchedule {
            rho: PowerLaw {
                scale: self.schedule.rho_scale,
                exponent: self.schedule.rho_exponent,
            },
            gamma: PowerLaw {
                scale: self.schedule.gamma_scale,
                exponent: self.schedule.gamma_exponent,
            },
        }
    }

    /// Step-size conditions the configured schedule fails over the run length.
    /// The `rho / sqrt(l)` bound is only required of the defaults.
    pub fn schedule_warnings(&self) -> Vec<String> {
        self.step_schedule()
            .prefix_violations(self.frames.max(self.solver.saa_iterations).max(1000))
            .into_iter()
            .filter(|v| !v.contains("sqrt"))
            .collect()
    }

    pub fn solver_options(&self) -> SolverOptions {
        let s = &self.solver;
        SolverOptions {
            tau: s.tau.clone(),
            dual: DualOptions {
                method: s.dual_method,
                tolerance: s.dual_tolerance,
                max_iterations: s.dual_max_iterations,
                ..DualOptions::default()
            },
            feasibility_tol: s.feasibility_tol,
            sample_cap: s.sample_cap,
            rate_average: s.rate_average,
            max_skips: s.max_skips,
            record_wall_time: self.output.record_wall_time,
        }
    }

    pub fn jacobian_method(&self) -> JacobianMethod {
        match self.structure.jacobian {
            JacobianTag::Analytic => JacobianMethod::Analytic,
            JacobianTag::FiniteDifference => JacobianMethod::FiniteDifference {
                step: self.structure.fd_step,
            },
        }
    }

    pub fn connectivity(&self) -> Connectivity {
        match self.structure.connectivity {
            ConnectivityTag::Full => Connectivity::Full,
            ConnectivityTag::Partial => Connectivity::Partial,
        }
    }

    pub fn rf_structure(&self, dims: &crate::channel::SystemDims) -> RfStructure {
        match self.structure.method {
            MethodTag::Dps => RfStructure::dps(self.connectivity(), self.structure.phase_bits),
            MethodTag::Codebook => RfStructure::dft_codebook(self.connectivity(), dims),
        }
    }

    /// Rate targets in nats, one per user.
    pub fn gamma_nats(&self) -> Vec<f64> {
        let k = self.system.users;
        let g = &self.problem.gamma_bps;
        (0..k)
            .map(|i| g[if g.len() == 1 { 0 } else { i }] * std::f64::consts::LN_2)
            .collect()
    }

    pub fn is_dps(&self) -> bool {
        matches!(self.structure.method, MethodTag::Dps)
    }
}
