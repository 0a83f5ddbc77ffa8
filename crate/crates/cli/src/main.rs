use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thp_core::harness::{
    config_reference, read_json, suites, write_json, EvalSummary, Experiment, ExperimentConfig, SavedVariable,
    VARIABLE_FILE,
};
use thp_core::ThpError;

/// Two-timescale hybrid precoding simulator.
#[derive(Parser)]
#[command(name = "thp-sim", version)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Run the online optimizer and write trajectory.csv, report.json and variable.json.
    Run(RunArgs),
    /// Run the sample-average baseline with the same outputs.
    Saa(RunArgs),
    /// Compare analytic rate Jacobians with central differences.
    Gradcheck(CheckArgs),
    /// Compare the dual subproblem solver with a primal barrier oracle.
    Qpcheck(CheckArgs),
    /// Evaluate a saved variable on held-out channel draws.
    Eval(EvalArgs),
    /// Print the configuration reference in markdown.
    ConfigReference,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Random instances per structure or mode.
    #[arg(long)]
    instances: Option<usize>,
    /// Also write the results as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory holding variable.json; also receives eval.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Explicit path of the saved variable.
    #[arg(long)]
    variable: Option<PathBuf>,
    /// Evaluate the pre-projection copy.
    #[arg(long)]
    relaxed: bool,
}

enum Failure {
    Breach(String),
    Runtime(ThpError),
}

impl From<ThpError> for Failure {
    fn from(e: ThpError) -> Self {
        Failure::Runtime(e)
    }
}

fn exit_code(e: &ThpError) -> u8 {
    match e {
        ThpError::Config(_) | ThpError::Io(_) | ThpError::Json(_) | ThpError::StructureMismatch { .. } => 2,
        _ => 1,
    }
}

fn load(config: &Path, seed: Option<u64>) -> Result<ExperimentConfig, ThpError> {
    let mut cfg = ExperimentConfig::load(config).map_err(|e| match e {
        ThpError::Io(io) => ThpError::Config(format!("{}: {io}", config.display())),
        other => other,
    })?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| PathBuf::from(&cfg.output.dir))
}

fn print_summary(label: &str, s: &EvalSummary) {
    println!(
        "{label}: objective {:.6} +- {:.6}, rates [{}] nats, max violation {:.3e}",
        s.objective,
        s.objective_stderr,
        s.rates_nats.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>().join(", "),
        s.max_violation
    );
}

fn run(verb: &str, args: RunArgs) -> Result<(), Failure> {
    let cfg = load(&args.config, args.seed)?;
    for w in cfg.schedule_warnings() {
        eprintln!("thp-sim: warning: schedule: {w}");
    }
    let out = out_dir(&cfg, args.out);
    let exp = Experiment::new(cfg)?;
    let report = exp.execute(verb, &out)?;
    println!(
        "{verb}: {} on {}, {} iterations, {:.3} ms/iteration",
        report.problem.name(),
        report.structure,
        report.timing.iterations,
        report.timing.mean_ms
    );
    print_summary("projected", &report.projected);
    print_summary("relaxed", &report.relaxed);
    println!("outputs in {}", out.display());
    Ok(())
}

fn gradcheck(args: CheckArgs) -> Result<(), Failure> {
    let lines = suites::gradcheck(args.instances.unwrap_or(100), args.seed)?;
    for l in &lines {
        println!(
            "{:<30} instances {:>4}  max rel err {:.3e}  {}",
            l.structure.to_string(),
            l.instances,
            l.max_rel_err,
            if l.passed { "ok" } else { "FAIL" }
        );
    }
    if let Some(p) = args.out {
        write_json(&p, &lines)?;
    }
    match lines.iter().find(|l| !l.passed) {
        Some(l) => Err(Failure::Breach(format!(
            "{}: {:.3e} exceeds {:.0e}",
            l.structure,
            l.max_rel_err,
            suites::GRADCHECK_TOL
        ))),
        None => Ok(()),
    }
}

fn qpcheck(args: CheckArgs) -> Result<(), Failure> {
    let lines = suites::qpcheck(args.instances.unwrap_or(50), args.seed)?;
    for l in &lines {
        println!(
            "{:<12} instances {:>4}  value gap {:.3e}  duality gap {:.3e}  unconverged {}  {}",
            format!("{:?}", l.mode).to_lowercase(),
            l.instances,
            l.max_value_gap,
            l.max_duality_gap,
            l.non_converged,
            if l.passed { "ok" } else { "FAIL" }
        );
    }
    if let Some(p) = args.out {
        write_json(&p, &lines)?;
    }
    if lines.iter().any(|l| !l.passed) {
        return Err(Failure::Breach(format!("gaps exceed {:.0e}", suites::QPCHECK_TOL)));
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<(), Failure> {
    let cfg = load(&args.config, args.seed)?;
    let out = out_dir(&cfg, args.out);
    let path = args.variable.unwrap_or_else(|| out.join(VARIABLE_FILE));
    let saved: SavedVariable = read_json(&path).map_err(|e| match e {
        ThpError::Io(io) => ThpError::Config(format!("{}: {io}", path.display())),
        other => other,
    })?;
    let exp = Experiment::new(cfg)?;
    let summary = exp.evaluate_saved(&saved, args.relaxed)?;
    print_summary(if args.relaxed { "relaxed" } else { "projected" }, &summary);
    if out.is_dir() {
        write_json(&out.join("eval.json"), &summary)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.verb {
        Verb::Run(a) => run("run", a),
        Verb::Saa(a) => run("saa", a),
        Verb::Gradcheck(a) => gradcheck(a),
        Verb::Qpcheck(a) => qpcheck(a),
        Verb::Eval(a) => eval(a),
        Verb::ConfigReference => {
            print!("{}", config_reference());
            Ok(())
        }
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Breach(msg)) => {
            eprintln!("thp-sim: tolerance breach: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("thp-sim: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
