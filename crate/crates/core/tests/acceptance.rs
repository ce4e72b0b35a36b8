//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use delaysgd::analysis::{neighborhood_radius, MetricKind};
use delaysgd::checks::{check_quartic_mean, check_source_bias, run_checks, CheckOptions};
use delaysgd::config::{parse_config, ExperimentSpec};
use delaysgd::delays::DelayMode;
use delaysgd::engine::run_ensemble;
use delaysgd::estimators::{EstimatorKind, GradientSource};
use delaysgd::experiment::{run_built, run_experiment, Outcome};
use delaysgd::objectives::ObjectiveSuite;
use delaysgd::schedules::{SmoothingSchedule, StepSizeSchedule};
use delaysgd::sets::FeasibleSet;
use delaysgd::Result;

const SLOPE_RANGE: (f64, f64) = (-1.2, -0.8);
const RATE_RUNTIME_LIMIT_S: f64 = 60.0;
const CONVEX_MAX_SLOPE: f64 = -0.35;
const GRAD_MAP_FACTOR: f64 = 3.0;
const GRAD_MAP_HORIZONS: [u64; 3] = [100, 1_000, 10_000];
const NEIGHBORHOOD_SE_FACTOR: f64 = 5.0;
const BURN_IN_FACTOR: f64 = 5.0;
const QUARTIC_SAMPLES: usize = 1_000_000;
const BIAS_SAMPLES: usize = 20_000;

const STRONGLY_CONVEX: &str = include_str!("../configs/strongly-convex-rate.json");
const BIASED: &str = include_str!("../configs/biased-strongly-convex-rate.json");
const CONVEX: &str = include_str!("../configs/convex-average-rate.json");
const NONCONVEX: &str = include_str!("../configs/nonconvex-bounded.json");
const NEIGHBORHOOD: &str = include_str!("../configs/constant-step-neighborhood.json");

struct Gate {
    root: tempfile::TempDir,
    engine_steps: u64,
    engine_violations: u64,
}

impl Gate {
    fn spec(&self, text: &str, subdir: &str) -> Result<ExperimentSpec> {
        let mut spec = parse_config(text)?;
        spec.output_dir = self.root.path().join(subdir);
        Ok(spec)
    }

    fn run(&mut self, spec: &ExperimentSpec) -> Result<Outcome> {
        let out = run_experiment(spec)?;
        for r in &out.summary.runs {
            self.engine_steps += r.steps;
            self.engine_violations += r.sum_bound_violations;
        }
        Ok(out)
    }
}

fn errors_of(out: &Outcome) -> Option<String> {
    out.summary
        .runs
        .iter()
        .find_map(|r| r.error.as_ref().map(|e| format!("seed {}: {e}", r.seed)))
}

fn rate(gate: &mut Gate, text: &str) -> Result<(bool, String)> {
    let spec = gate.spec(text, "rate")?;
    let start = Instant::now();
    let out = gate.run(&spec)?;
    let elapsed = start.elapsed().as_secs_f64();
    if let Some(e) = errors_of(&out) {
        return Ok((false, e));
    }
    let fit = out.summary.fit.as_ref().expect("config has a fit");
    let ok = fit.slope >= SLOPE_RANGE.0 && fit.slope <= SLOPE_RANGE.1 && elapsed < RATE_RUNTIME_LIMIT_S && out.passed();
    Ok((
        ok,
        format!(
            "dist-sq slope {:.4} on [{}, {}] (need [{}, {}]), r^2 {:.4}, {} seeds, {:.1}s (limit {}s)",
            fit.slope, fit.window[0], fit.window[1], SLOPE_RANGE.0, SLOPE_RANGE.1, fit.r_squared, fit.n_seeds, elapsed, RATE_RUNTIME_LIMIT_S
        ),
    ))
}

fn convex_rate(gate: &mut Gate) -> Result<(bool, String)> {
    let spec = gate.spec(CONVEX, "convex")?;
    let out = gate.run(&spec)?;
    if let Some(e) = errors_of(&out) {
        return Ok((false, e));
    }
    let fit = out.summary.fit.as_ref().expect("config has a fit");
    Ok((
        fit.slope <= CONVEX_MAX_SLOPE && out.passed(),
        format!(
            "suboptimality of the weighted average: slope {:.4} on [{}, {}] (need <= {CONVEX_MAX_SLOPE}), r^2 {:.4}",
            fit.slope, fit.window[0], fit.window[1], fit.r_squared
        ),
    ))
}

fn bounded_grad_map(gate: &mut Gate) -> Result<(bool, String)> {
    let spec = gate.spec(NONCONVEX, "nonconvex")?;
    let exp = spec.build()?;
    let g = exp.second_moment_g.expect("bounded set certifies G");
    let n = exp.run.suite.agents() as f64;
    let bound = GRAD_MAP_FACTOR * n * n * g;
    let trajs = run_ensemble(&exp.run, &exp.seeds)
        .into_iter()
        .map(|r| r.map_err(|f| f.error))
        .collect::<Result<Vec<_>>>()?;
    for t in &trajs {
        gate.engine_steps += t.diagnostics.steps;
        gate.engine_violations += t.diagnostics.sum_bound_violations;
    }
    let mut ok = true;
    let mut parts = Vec::new();
    for horizon in GRAD_MAP_HORIZONS {
        let m = trajs
            .iter()
            .map(|t| t.record(horizon).expect("dense trajectory").grad_map_sq_running_mean)
            .sum::<f64>()
            / trajs.len() as f64;
        ok &= m <= bound;
        parts.push(format!("M({horizon}) = {m:.4}"));
    }
    Ok((ok, format!("{} vs {GRAD_MAP_FACTOR} n^2 G = {bound:.4e} (G = {g:.4e})", parts.join(", "))))
}

fn neighborhood(gate: &mut Gate) -> Result<(bool, String)> {
    let spec = gate.spec(NEIGHBORHOOD, "neighborhood")?;
    let exp = spec.build()?;
    let out = run_built(&exp)?;
    for r in &out.summary.runs {
        gate.engine_steps += r.steps;
        gate.engine_violations += r.sum_bound_violations;
    }
    if let Some(e) = errors_of(&out) {
        return Ok((false, e));
    }
    let StepSizeSchedule::Constant { eta } = exp.run.step else {
        return Ok((false, "config must use a constant step".into()));
    };
    let suite = &exp.run.suite;
    let mu = suite.strong_convexity();
    let q = exp.run.source.bias_bound(0);
    let r = neighborhood_radius(
        suite.agents(),
        exp.second_moment_g.expect("bounded set certifies G"),
        exp.run.delay.declared_c(),
        suite.smoothness(),
        mu,
        eta,
        Some(q),
    )?;
    let burn_in = (BURN_IN_FACTOR / (mu * eta)).ceil() as u64;
    let series = out.series.iter().find(|s| s.kind == MetricKind::DistSq).expect("dist-sq recorded");
    let mut checked = 0;
    let mut worst_ratio = 0.0_f64;
    let mut ok = true;
    for k in 0..series.len() {
        if series.times[k] < burn_in {
            continue;
        }
        let mean = series.values[k];
        let rel_se = series.standard_errors[k] / mean;
        ok &= mean <= r * (1.0 + NEIGHBORHOOD_SE_FACTOR * rel_se);
        worst_ratio = worst_ratio.max(mean / r);
        checked += 1;
    }
    ok &= checked > 0;
    Ok((
        ok,
        format!("{checked} checkpoints with t >= {burn_in}, radius {r:.4e} (q = {q}), max mean dist-sq / radius {worst_ratio:.3e}"),
    ))
}

fn structural(gate: &mut Gate) -> Result<(bool, String)> {
    let reports = run_checks("all", &CheckOptions::default())?;
    let violations: u64 = reports.iter().map(|r| r.violations).sum();
    let cases: u64 = reports.iter().map(|r| r.cases).sum();
    let first = reports.iter().find(|r| !r.passed()).map(|r| format!("; first failure: {r}"));
    Ok((
        violations == 0 && gate.engine_violations == 0 && gate.engine_steps > 0,
        format!(
            "{} properties, {cases} cases, {violations} violations; aggregation bound at {} engine steps, {} violations{}",
            reports.len(),
            gate.engine_steps,
            gate.engine_violations,
            first.unwrap_or_default()
        ),
    ))
}

fn bias(seed: u64) -> Result<(bool, String)> {
    let quartic = check_quartic_mean(QUARTIC_SAMPLES, seed)?;
    let mut ok = quartic.passed();
    let mut parts = vec![format!("x^4 mean within 3 SE of 4.12: {}", quartic.passed())];
    let suites = [
        ObjectiveSuite::sine_quadratic(3, 4, 1.0, 0.5, 3.0, seed, FeasibleSet::cube(4, -2.0, 2.0)?)?,
        ObjectiveSuite::huber(3, nalgebra::DVector::from_element(4, 0.5), 0.3, FeasibleSet::l2_ball(nalgebra::DVector::zeros(4), 2.0)?)?,
    ];
    for suite in &suites {
        for kind in [
            EstimatorKind::GaussianTwoPoint { smoothing: SmoothingSchedule::Constant { u: 0.2 } },
            EstimatorKind::SphereTwoPoint { smoothing: SmoothingSchedule::Constant { u: 0.2 } },
        ] {
            let source = GradientSource::for_suite(kind, suite)?;
            let report = check_source_bias(&source, suite, 0, 3, BIAS_SAMPLES, seed)?;
            ok &= report.passed();
            parts.push(format!("{} on {:?}: {}/{} within bound", source.kind_name(), suite.class(), report.cases - report.violations, report.cases));
        }
    }
    Ok((ok, parts.join("; ")))
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "csv") {
            out.push(path);
        }
    }
    Ok(())
}

fn determinism(gate: &mut Gate) -> Result<(bool, String)> {
    let mut compared = 0;
    let mut mismatched = Vec::new();
    for (k, (text, mode)) in [(STRONGLY_CONVEX, DelayMode::Direct), (NONCONVEX, DelayMode::Buffered)].into_iter().enumerate() {
        let mut dirs = Vec::new();
        for run in 0..2 {
            let mut spec = gate.spec(text, &format!("determinism-{k}-{run}"))?;
            spec.delay.mode = mode;
            let out = gate.run(&spec)?;
            dirs.push(out.dir);
        }
        let mut files = Vec::new();
        collect_files(&dirs[0], &mut files).map_err(|e| delaysgd::Error::Invariant(e.to_string()))?;
        files.sort();
        for file in files {
            let twin = dirs[1].join(file.strip_prefix(&dirs[0]).expect("inside run dir"));
            compared += 1;
            if fs::read(&file).ok() != fs::read(&twin).ok() {
                mismatched.push(twin.display().to_string());
            }
        }
    }
    Ok((
        compared > 0 && mismatched.is_empty(),
        format!("{compared} CSV files compared across direct and buffered reruns, {} differ {:?}", mismatched.len(), mismatched),
    ))
}

fn main() -> ExitCode {
    let mut gate = Gate {
        root: tempfile::tempdir().expect("temporary directory"),
        engine_steps: 0,
        engine_violations: 0,
    };
    let mut results = vec![
        (1, "strongly convex rate, unbiased noise", rate(&mut gate, STRONGLY_CONVEX)),
        (2, "strongly convex rate, decaying bias", rate(&mut gate, BIASED)),
        (3, "convex weighted-average rate", convex_rate(&mut gate)),
        (4, "nonconvex gradient-mapping bound", bounded_grad_map(&mut gate)),
        (5, "constant-step neighborhood", neighborhood(&mut gate)),
        (7, "estimator bias certification", bias(CheckOptions::default().seed)),
        (8, "byte-identical reruns", determinism(&mut gate)),
        (6, "structural inequality suites", structural(&mut gate)),
    ];
    results.sort_by_key(|r| r.0);

    let mut all = true;
    for (id, name, result) in results {
        let (ok, detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
        all &= ok;
        println!("criterion {id} {}: {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
