use super::ExperimentConfig;

/// `(section, key, description)`; an empty section means top level.
pub(crate) const KEYS: &[(&str, &str, &str)] = &[
    ("", "seed", "Master seed for every random stream."),
    ("", "frames", "Frames processed by the online optimizer; one update per frame."),
    ("", "collection_frames", "Stored samples used by the sample-average baseline."),
    ("", "eval_samples", "Held-out channel draws for the final evaluation (>= 100)."),
    ("", "slots_per_frame", "Recorded in the config only; the optimizer ignores it."),
    ("system", "antennas", "Antennas M."),
    ("system", "rf_chains", "RF chains S."),
    ("system", "users", "Single-antenna users K."),
    ("system", "codebook_size", "Codebook size N; unset means M."),
    ("channel", "num_paths", "Propagation paths per user."),
    ("channel", "angle_spread_deg", "Laplacian angle spread around each user's center angle."),
    ("channel", "path_gain_db", "Range [low, high] of the per-user gains in dB."),
    ("channel", "user_gains", "Explicit linear per-user gains; empty draws them from path_gain_db."),
    ("channel", "dump", "Write the frame samples to frames.thpc next to the outputs."),
    ("structure", "connectivity", "full or partial."),
    ("structure", "method", "dps (phase shifters) or codebook (column selection)."),
    ("structure", "phase_bits", "Phase resolution B of the terminal projection."),
    ("structure", "normalization", "unit_columns or literal column scaling of the baseband precoder."),
    ("structure", "jacobian", "analytic or finite_difference."),
    ("structure", "fd_step", "Central-difference step when jacobian = finite_difference."),
    ("problem", "kind", "sum, pfs, powermin or mwtm."),
    ("problem", "power_budget", "Total power P; the per-user box is [0, 4P/K]."),
    ("problem", "gamma_bps", "Power-min rate targets in bps/Hz; one value applies to all users."),
    ("problem", "weights", "MWTM weights; empty means all ones."),
    ("problem", "pfs_eps", "Offset inside the log utility."),
    ("problem", "l0_eps", "Smoothing of the cardinality constraint for codebook structures."),
    ("schedule", "rho_scale", "rho = min(1, rho_scale (1 + l)^-rho_exponent)."),
    ("schedule", "rho_exponent", "See rho_scale."),
    ("schedule", "gamma_scale", "gamma = min(1, gamma_scale (1 + l)^-gamma_exponent)."),
    ("schedule", "gamma_exponent", "See gamma_scale."),
    ("solver", "tau", "Proximal weights, objective row first then one per constraint; empty means 1."),
    ("solver", "dual_method", "newton or subgradient."),
    ("solver", "dual_tolerance", "Natural-residual tolerance of the dual solver."),
    ("solver", "dual_max_iterations", "Dual iteration cap."),
    ("solver", "feasibility_tol", "Largest nu accepted as feasible."),
    ("solver", "sample_cap", "Stored samples before the rate average becomes a sliding window."),
    ("solver", "rate_average", "exact (recompute over stored samples) or recursive."),
    ("solver", "max_skips", "Consecutive failed subproblems before the run aborts."),
    ("solver", "saa_iterations", "Iteration cap of the sample-average baseline."),
    ("solver", "saa_stop_tol", "Baseline stops once the step length falls below this."),
    ("output", "dir", "Output directory when --out is not given."),
    ("output", "record_wall_time", "Write measured step times into wall_ms instead of 0."),
];

fn default_of(value: &toml::Value, section: &str, key: &str) -> String {
    let node = if section.is_empty() { Some(value) } else { value.get(section) };
    match node.and_then(|n| n.get(key)) {
        Some(v) => v.to_string(),
        None => "(unset)".into(),
    }
}

/// Markdown reference of every config key with its default.
pub fn config_reference() -> String {
    let defaults = toml::Value::try_from(ExperimentConfig::default()).expect("defaults serialize");
    let mut out = String::from("# Configuration reference\n\nGenerated by `thp-sim config-reference`.\n");
    let mut current = None;
    for (section, key, doc) in KEYS {
        if current != Some(*section) {
            current = Some(*section);
            let title = if section.is_empty() { "top level".to_string() } else { format!("[{section}]") };
            out.push_str(&format!("\n## {title}\n\n| key | default | meaning |\n|---|---|---|\n"));
        }
        out.push_str(&format!("| `{key}` | `{}` | {doc} |\n", default_of(&defaults, section, key)));
    }
    out
}
