//! Acceptance suite. Runs every criterion, prints one line each and exits
//! nonzero when any of them fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DVector;
use thp_core::harness::{suites, Experiment, ExperimentConfig, RunOutcome};
use thp_core::precoding::{build_rf_precoder, rzf_baseband, with_phase_bits};
use thp_core::problems::Problem;
use thp_core::dual_qp::QpMode;
use thp_core::surrogate::Ssca;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn config(name: &str, seed: u64) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    let mut cfg = ExperimentConfig::load(&path).unwrap();
    cfg.seed = seed;
    cfg
}

fn ac1() -> Verdict {
    let lines = suites::gradcheck(100, 1).unwrap();
    let worst = lines.iter().map(|l| l.max_rel_err).fold(0.0, f64::max);
    let per: Vec<String> = lines.iter().map(|l| format!("{} {:.1e}", l.structure, l.max_rel_err)).collect();
    verdict(
        lines.iter().all(|l| l.passed) && worst <= 1e-4,
        format!("max rel err {worst:.2e} <= 1e-4 ({})", per.join(", ")),
    )
}

fn ac2() -> Verdict {
    let lines = suites::qpcheck(50, 1).unwrap();
    let value = lines.iter().map(|l| l.max_value_gap).fold(0.0, f64::max);
    let dual = lines.iter().map(|l| l.max_duality_gap).fold(0.0, f64::max);
    let n: usize = lines.iter().map(|l| l.instances).sum();
    verdict(
        lines.iter().all(|l| l.passed),
        format!("{n} instances, value gap {value:.2e}, duality gap {dual:.2e} (<= 1e-6)"),
    )
}

struct PowerRun {
    violation: f64,
    power_range: f64,
    move_ratio: f64,
}

fn powermin_runs() -> Vec<PowerRun> {
    (7..12)
        .map(|seed| {
            let exp = Experiment::new(config("powermin.toml", seed)).unwrap();
            let out = exp.run_ssca().unwrap();
            let summary = exp.evaluate(&out.x).unwrap();
            let recs = &out.trajectory.records;
            let tail: Vec<f64> = recs[recs.len() - 50..].iter().map(|r| r.objective_est).collect();
            let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
            let mean = tail.iter().sum::<f64>() / tail.len() as f64;
            let tenth = recs.len() / 10;
            let first = out.trajectory.mean_move(0, tenth);
            let last = out.trajectory.mean_move(recs.len() - tenth, recs.len());
            PowerRun {
                violation: summary.max_violation,
                power_range: (hi - lo) / mean,
                move_ratio: last / first,
            }
        })
        .collect()
}

fn ac3(runs: &[PowerRun]) -> Verdict {
    let ok = runs.iter().filter(|r| r.violation <= 0.05).count();
    let flat = runs.iter().all(|r| r.power_range <= 0.10);
    let v: Vec<String> = runs.iter().map(|r| format!("{:.3}", r.violation)).collect();
    let p = runs.iter().map(|r| r.power_range).fold(0.0, f64::max);
    verdict(
        ok >= 4 && flat,
        format!(
            "{ok}/5 seeds with violation <= 0.05 nats [{}], worst last-50 power range {:.1}% <= 10%",
            v.join(", "),
            100.0 * p
        ),
    )
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) }
}

fn ac4() -> Verdict {
    let exp = Experiment::new(config("sum.toml", 1)).unwrap();
    let ssca = exp.run_ssca().unwrap();
    let saa = exp.run_saa().unwrap();
    let a = exp.evaluate(&ssca.x).unwrap().rates_nats.iter().sum::<f64>();
    let b = exp.evaluate(&saa.x).unwrap().rates_nats.iter().sum::<f64>();
    let diff = (a - b).abs() / b.abs();
    // medians, so a stray scheduler pause does not decide the verdict
    let ratio = median(&ssca.step_ms) / median(&saa.step_ms);
    verdict(
        diff <= 0.05 && ratio <= 0.1,
        format!(
            "sum rate ssca {a:.4} vs saa {b:.4} nats ({:.2}% <= 5%), median iteration {:.3} ms vs {:.3} ms (ratio {ratio:.3} <= 0.1, means {:.3} / {:.3})",
            100.0 * diff,
            median(&ssca.step_ms),
            median(&saa.step_ms),
            mean(&ssca.step_ms),
            mean(&saa.step_ms)
        ),
    )
}

fn sum_rate(exp: &Experiment, x: &DVector<f64>) -> f64 {
    exp.evaluate(x).unwrap().rates_nats.iter().sum()
}

fn ac5() -> Verdict {
    let mut worst3 = 0.0f64;
    let mut b1_worse = 0;
    for seed in 1..=10 {
        let mut cfg = config("sum.toml", seed);
        cfg.frames = 300;
        let exp = Experiment::new(cfg).unwrap();
        let out = exp.run_ssca().unwrap();
        let relaxed = sum_rate(&exp, &out.x);
        let loss = |bits: u32| {
            let mut cfg = exp.cfg.clone();
            cfg.structure.phase_bits = bits;
            let e = Experiment::new(cfg).unwrap();
            assert_eq!(e.structure, with_phase_bits(&exp.structure, bits));
            (relaxed - sum_rate(&e, &e.project(&out.x).unwrap())) / relaxed
        };
        let (l3, l1) = (loss(3), loss(1));
        worst3 = worst3.max(l3);
        if l1 > l3 {
            b1_worse += 1;
        }
    }
    verdict(
        worst3 <= 0.05 && b1_worse >= 8,
        format!("worst 3-bit loss {:.2}% <= 5%, 1-bit loses more in {b1_worse}/10 runs (>= 8)", 100.0 * worst3),
    )
}

fn ac6() -> Verdict {
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_owned());
        }
    };
    let mut cfg = config("powermin.toml", 3);
    cfg.frames = 60;
    let exp = Experiment::new(cfg).unwrap();
    let frames = exp.frames(exp.cfg.frames);
    let mut ssca = Ssca::new(
        &exp.model,
        &exp.problem,
        exp.cfg.step_schedule(),
        exp.cfg.solver_options(),
        exp.initial_point(),
    )
    .unwrap();
    let m = exp.dims.antennas as f64;
    let (mut boxed, mut touch, mut modulus, mut unit) = (true, true, true, true);
    for s in frames.iter().cloned() {
        ssca.step(s.clone()).unwrap();
        let x = ssca.state.x.clone();
        boxed &= exp.problem.bounds.contains(&x);
        let qp = ssca.build_subproblem(QpMode::Objective).unwrap();
        for j in 0..=exp.problem.num_constraints() {
            let h = exp.problem.eval_h(j, &ssca.state.r_hat, &x);
            touch &= (qp.eval_row(j, &x) - h).abs() <= 1e-12 * (1.0 + h.abs());
            touch &= qp.grad_row(j, &x) == ssca.state.u.row(j).transpose();
        }
        let phi = &x.as_slice()[exp.problem.layout.phi_range()];
        let f = build_rf_precoder(phi, &exp.structure, &exp.dims).unwrap();
        modulus &= f.iter().all(|v| (v.norm() - 1.0 / m.sqrt()).abs() <= 1e-12);
        let pair = rzf_baseband(&s, &f, x[exp.problem.layout.alpha_index()]).unwrap();
        let fg = &f * &pair.g;
        unit &= fg.column_iter().all(|c| (c.norm() - 1.0).abs() <= 1e-10);
    }
    check("box preservation", boxed);
    check("surrogate touch", touch);
    check("constant-modulus F", modulus);
    check("unit end-to-end columns", unit);
    let p = exp.project(&ssca.state.x).unwrap();
    check("projection idempotence", exp.project(&p).unwrap() == p);
    let csv = |o: &RunOutcome| {
        let mut buf = Vec::new();
        o.trajectory.write_csv(&mut buf).unwrap();
        buf
    };
    let a = exp.run_ssca().unwrap();
    let b = exp.run_ssca().unwrap();
    check("deterministic replay", csv(&a) == csv(&b) && a.x == b.x);
    let detail = if failures.is_empty() {
        "box, touch, constant-modulus F, unit columns, projection idempotence, replay".to_owned()
    } else {
        format!("violated: {}", failures.join(", "))
    };
    verdict(failures.is_empty(), detail)
}

fn ac7(runs: &[PowerRun]) -> Verdict {
    let worst = runs.iter().map(|r| r.move_ratio).fold(0.0, f64::max);
    let r: Vec<String> = runs.iter().map(|r| format!("{:.3}", r.move_ratio)).collect();
    verdict(worst <= 0.25, format!("last/first 10% mean move ratios [{}] <= 0.25", r.join(", ")))
}

fn main() -> ExitCode {
    let mut all = true;
    let mut report = |id: &str, f: &mut dyn FnMut() -> Verdict| {
        let t0 = Instant::now();
        let v = f();
        all &= v.passed;
        println!(
            "{id} {} {} [{:.1} s]",
            if v.passed { "PASS" } else { "FAIL" },
            v.detail,
            t0.elapsed().as_secs_f64()
        );
    };
    report("AC-1", &mut ac1);
    report("AC-2", &mut ac2);
    let runs = powermin_runs();
    report("AC-3", &mut || ac3(&runs));
    report("AC-4", &mut ac4);
    report("AC-5", &mut ac5);
    report("AC-6", &mut ac6);
    report("AC-7", &mut || ac7(&runs));
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
