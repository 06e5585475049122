//! Command implementations behind the CLI entry points.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::config::{build_scenario, BuiltScenario, ScenarioConfig};
use crate::io::presets::preset_config;
use crate::io::report::{design_report, AcceptanceSummary, DesignReport, Summary};
use crate::io::trace::{write_csv_file, write_iterations_csv_file};
use crate::sim::{fit_rate, run, SimTrace};

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    ScenarioConfig::from_json(&text)
}

/// Fit window for the summary: skip the start-up transient and stop
/// before the error underflows (zeros would break the log fit).
fn default_fit_window(trace: &SimTrace, t_period: f64) -> (f64, f64) {
    let t_end = trace.times.last().copied().unwrap_or(0.0);
    let t_lo = (2.0 * t_period).min(0.25 * t_end);
    let mut t_hi = t_end;
    for s in 0..trace.sample_count() {
        let t = trace.times[s];
        if t <= t_lo {
            continue;
        }
        let v = trace.max_err_at(s);
        if !(v > 1e-200) {
            t_hi = trace.times[s.saturating_sub(1)];
            break;
        }
    }
    (t_lo, t_hi)
}

fn summarize(built: &BuiltScenario, trace: &SimTrace) -> Summary {
    let (t_lo, t_hi) = default_fit_window(trace, built.params.t_period);
    let fit = fit_rate(trace, t_lo, t_hi);
    let final_max_err = trace.max_err_at(trace.sample_count() - 1).max(0.0);
    Summary {
        fitted_rate: (!fit.degenerate).then_some(fit.rate),
        lambda_certified: built.certification.lambda,
        final_max_err,
        events: trace.events.len(),
    }
}

/// Run synthesis and certification; write the report; fail with the
/// first violated assumption so the process exits non-zero.
pub fn cmd_design(config: &ScenarioConfig, report_path: Option<&Path>) -> Result<DesignReport> {
    let built = build_scenario(config)?;
    let report = design_report(&built)?;
    let text = serde_json::to_string_pretty(&report)?;
    if let Some(path) = report_path {
        std::fs::write(path, &text)?;
    }
    println!("{text}");
    if let Some(name) = built.assumptions.first_failure() {
        return Err(Error::Assumption(name.to_string()));
    }
    Ok(report)
}

/// Certification numbers only.
pub fn cmd_analyze(config: &ScenarioConfig) -> Result<serde_json::Value> {
    let built = build_scenario(config)?;
    let report = design_report(&built)?;
    let value = serde_json::json!({
        "schema": 1,
        "certification": report.certification,
        "assumptions": report.assumptions,
        "warnings": report.warnings,
    });
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(value)
}

/// Simulate a built scenario, optionally writing the trace CSV, and
/// compute the fixed-key summary. Structural assumptions must hold; a
/// missing rate certificate only warns (the run is still well-defined,
/// just not covered by the certificate).
pub fn simulate_scenario(built: &BuiltScenario, csv: Option<&Path>) -> Result<Summary> {
    if !built.assumptions.jointly_observable
        || !built.assumptions.graphs_strongly_connected
        || !built.assumptions.residual_observability
    {
        return Err(Error::Assumption(
            built
                .assumptions
                .first_failure()
                .unwrap_or("structural assumption")
                .to_string(),
        ));
    }
    if !built.assumptions.rate_certified {
        eprintln!("warning: no certified convergence rate for this configuration");
    }
    let trace = run(&built.sim)?;
    if let Some(path) = csv {
        write_csv_file(&trace, path)?;
        if built.sim.log_iterations {
            write_iterations_csv_file(&trace, &iterations_path(path))?;
        }
    }
    Ok(summarize(built, &trace))
}

/// `trace.csv` -> `trace_iterations.csv` next to it.
fn iterations_path(csv: &Path) -> std::path::PathBuf {
    let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    csv.with_file_name(format!("{stem}_iterations.csv"))
}

/// Simulate from a configuration and write the trace CSV; the summary
/// goes to standard output as a single JSON object.
pub fn cmd_simulate(
    config: &ScenarioConfig,
    out: &Path,
    log_iterations: bool,
) -> Result<Summary> {
    let mut config = config.clone();
    if log_iterations {
        config.sim.log_iterations = true;
    }
    let built = build_scenario(&config)?;
    let summary = simulate_scenario(&built, Some(out))?;
    println!("{}", serde_json::to_string(&summary)?);
    Ok(summary)
}

fn max_err_at_time(trace: &SimTrace, t: f64) -> f64 {
    let mut best = f64::NAN;
    let mut best_gap = f64::INFINITY;
    for s in 0..trace.sample_count() {
        let gap = (trace.times[s] - t).abs();
        if gap < best_gap {
            best_gap = gap;
            best = trace.max_err_at(s);
        }
    }
    best
}

fn check_paper_example(built: &BuiltScenario, trace: &SimTrace, acc: &mut AcceptanceSummary) {
    let cert = &built.certification;
    acc.push(
        "zeta",
        (cert.zeta - 0.2).abs() <= 1e-9,
        cert.zeta,
        "|zeta - 0.2| <= 1e-9".into(),
    );
    acc.push(
        "gamma",
        (cert.cert.gamma - 0.975).abs() <= 0.005,
        cert.cert.gamma,
        "|gamma - 0.975| <= 0.005".into(),
    );
    acc.push(
        "q_min",
        cert.q_min == 45,
        cert.q_min as f64,
        "q_min == 45".into(),
    );
    acc.push("r", cert.r == 9, cert.r as f64, "r == 9".into());
    let lambda = cert.lambda.unwrap_or(f64::NAN);
    acc.push(
        "lambda",
        (0.024..=0.030).contains(&lambda),
        lambda,
        "0.024 <= lambda <= 0.030".into(),
    );

    let (t_lo, t_hi) = default_fit_window(trace, built.params.t_period);
    let fit = fit_rate(trace, t_lo, t_hi);
    acc.push(
        "fitted_rate",
        !fit.degenerate && fit.rate >= lambda - 0.005,
        if fit.degenerate { f64::NAN } else { fit.rate },
        format!("fitted rate >= lambda - 0.005 over [{t_lo:.2}, {t_hi:.2}]"),
    );

    let final_err = trace.max_err_at(trace.sample_count() - 1).max(0.0);
    acc.push(
        "final_error",
        final_err <= 1e-3 * trace.initial_max_err,
        final_err,
        format!("final max error <= 1e-3 * {:.6}", trace.initial_max_err),
    );

    // decay envelope e^{-(lambda - 0.005) t} (delta_x + 10 delta_mu) over
    // every resolvable sample
    let coeff = built.delta_x + 10.0 * built.delta_mu;
    let rate = lambda - 0.005;
    let mut worst = 0.0f64;
    for s in 0..trace.sample_count() {
        let v = trace.max_err_at(s);
        if v > 1e-250 {
            let bound = coeff * (-rate * trace.times[s]).exp();
            worst = worst.max(v / bound);
        }
    }
    acc.push(
        "envelope",
        worst <= 1.0,
        worst,
        "max_i err_i(t) <= (delta_x + 10 delta_mu) e^{-(lambda-0.005) t}".into(),
    );
}

fn check_paper_noise(trace: &SimTrace, acc: &mut AcceptanceSummary) {
    let at_100 = max_err_at_time(trace, 100.0);
    let mut sup = 0.0f64;
    let mut finite = true;
    for s in 0..trace.sample_count() {
        let t = trace.times[s];
        if (100.0..=200.0).contains(&t) {
            let v = trace.max_err_at(s);
            finite &= v.is_finite();
            sup = sup.max(v);
        }
    }
    acc.push(
        "bounded",
        finite && sup.is_finite(),
        sup,
        "sup of max_i err_i over [100, 200] is finite".into(),
    );
    acc.push(
        "graceful_degradation",
        sup <= 10.0 * at_100,
        sup / at_100,
        "sup over [100, 200] <= 10 x value at t = 100".into(),
    );
}

fn check_resilience(built: &BuiltScenario, trace: &SimTrace, acc: &mut AcceptanceSummary) {
    acc.push(
        "residual_strong_connectivity",
        built.assumptions.graphs_strongly_connected,
        built.assumptions.graphs_strongly_connected as u8 as f64,
        "residual graph strongly connected after the dropout".into(),
    );
    acc.push(
        "residual_joint_observability",
        built.assumptions.residual_observability,
        built.assumptions.residual_observability as u8 as f64,
        "residual channels jointly observable".into(),
    );
    let drop_time = built.schedule.dropouts().first().map(|&(t, _)| t).unwrap_or(50.0);
    let at_drop = max_err_at_time(trace, drop_time);
    let final_err = trace.max_err_at(trace.sample_count() - 1).max(0.0);
    acc.push(
        "post_drop_decay",
        final_err <= 1e-3 * at_drop,
        final_err,
        format!("final max error <= 1e-3 x error at the drop time ({at_drop:.3e})"),
    );
}

/// Run a bundled scenario end to end and write every artifact into
/// `outdir`. The evaluated checks (pass or fail) come back in the
/// summary; only infrastructure failures are errors.
pub fn reproduce_to_dir(preset: &str, outdir: &Path) -> Result<AcceptanceSummary> {
    let config = preset_config(preset)?;
    std::fs::create_dir_all(outdir)?;
    std::fs::write(outdir.join("config.json"), config.to_json()?)?;

    let built = build_scenario(&config)?;
    let report = design_report(&built)?;
    std::fs::write(
        outdir.join("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;

    let trace = run(&built.sim)?;
    write_csv_file(&trace, &outdir.join("trace.csv"))?;
    let summary = summarize(&built, &trace);
    std::fs::write(outdir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;

    let mut acc = AcceptanceSummary::new(preset);
    match preset {
        "paper-example" => check_paper_example(&built, &trace, &mut acc),
        "paper-noise" => check_paper_noise(&trace, &mut acc),
        "resilience4" => check_resilience(&built, &trace, &mut acc),
        _ => unreachable!("preset_config validated the name"),
    }
    std::fs::write(
        outdir.join("acceptance.json"),
        serde_json::to_string_pretty(&acc)?,
    )?;
    Ok(acc)
}

fn acceptance_failure(acc: &AcceptanceSummary) -> Error {
    let failed: Vec<&str> = acc
        .checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.name.as_str())
        .collect();
    Error::Acceptance(format!(
        "preset {}: failed checks: {}",
        acc.preset,
        failed.join(", ")
    ))
}

/// `reproduce_to_dir` plus the CLI contract: print the acceptance
/// summary and exit non-zero when a check fails.
pub fn cmd_reproduce(preset: &str, outdir: &Path) -> Result<AcceptanceSummary> {
    let acc = reproduce_to_dir(preset, outdir)?;
    println!("{}", serde_json::to_string_pretty(&acc)?);
    if !acc.pass {
        return Err(acceptance_failure(&acc));
    }
    Ok(acc)
}
