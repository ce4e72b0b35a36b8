//! Multi-seed experiment execution and file output.
//!
//! Layout under `<output_dir>/<name>/`:
//! `<seed>/trajectory.csv`, `metrics/<metric>.csv`, `fit.json`, `summary.json`.
//! Every CSV starts with `#` lines echoing the constants of the run.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::analysis::{ensemble_mean, fit_rate, metric_series, MetricKind, MetricSeries, RateFit};
use crate::config::{Experiment, ExperimentSpec};
use crate::delays::DelayMode;
use crate::engine::{run_ensemble, Trajectory, CHECKPOINTS_PER_DECADE};
use crate::error::{Error, Result};
use crate::objectives::ObjectiveSuite;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Constants {
    pub n: usize,
    pub d: usize,
    #[serde(rename = "L")]
    pub l: f64,
    pub mu: f64,
    #[serde(rename = "G")]
    pub g: Option<f64>,
    #[serde(rename = "C")]
    pub c: f64,
    pub kappa: String,
}

impl Constants {
    pub fn of(exp: &Experiment) -> Self {
        Constants {
            n: exp.run.suite.agents(),
            d: exp.run.suite.dim(),
            l: exp.run.suite.smoothness(),
            mu: exp.run.suite.strong_convexity(),
            g: exp.second_moment_g,
            c: exp.run.delay.declared_c(),
            kappa: exp.run.delay.kappa().to_string(),
        }
    }

    fn header(&self) -> String {
        let g = self.g.map_or("uncertified".to_string(), |g| g.to_string());
        format!(
            "# n={} d={} L={} mu={} G={} C={} kappa={}\n",
            self.n, self.d, self.l, self.mu, g, self.c, self.kappa
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub metric: MetricKind,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: [u64; 2],
    pub samples: usize,
    pub n_seeds: usize,
    pub expected_slope: Option<f64>,
    pub tolerance: Option<f64>,
    pub passed: bool,
}

impl FitReport {
    fn new(fit: RateFit, metric: MetricKind, n_seeds: usize, expected: Option<f64>, tolerance: Option<f64>) -> Self {
        let passed = match (expected, tolerance) {
            (Some(e), Some(tol)) => (fit.slope - e).abs() <= tol,
            _ => true,
        };
        FitReport {
            metric,
            slope: fit.slope,
            intercept: fit.intercept,
            r_squared: fit.r_squared,
            window: [fit.t_min, fit.t_max],
            samples: fit.samples,
            n_seeds,
            expected_slope: expected,
            tolerance,
            passed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub steps: u64,
    pub sum_bound_violations: u64,
    pub never_heard: u64,
    pub max_staleness: u64,
    /// Largest recorded `|x(t) - x*|^2`, when the minimizer is known.
    pub max_dist_sq: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub name: String,
    pub constants: Constants,
    pub horizon: u64,
    pub seeds: Vec<u64>,
    pub delay_mode: DelayMode,
    /// Which randomness key the stale estimates used.
    pub estimate_randomness: &'static str,
    pub runs: Vec<SeedSummary>,
    pub fit: Option<FitReport>,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub dir: PathBuf,
    pub summary: Summary,
    /// Ensemble series for each configured metric, in config order.
    pub series: Vec<MetricSeries>,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.summary.passed
    }
}

/// Times reported in the ensemble CSVs: 0 plus a log-spaced grid.
pub fn report_times(horizon: u64) -> Vec<u64> {
    let mut ts = vec![0];
    ts.extend(crate::analysis::log_spaced_times(1, horizon, CHECKPOINTS_PER_DECADE));
    ts
}

fn metric_value(kind: MetricKind, series: &[MetricSeries], k: usize) -> f64 {
    series.iter().find(|s| s.kind == kind).map_or(f64::NAN, |s| s.values[k])
}

fn write_file(path: &Path, contents: &[u8], files: &mut Vec<PathBuf>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))?;
    files.push(path.to_path_buf());
    Ok(())
}

fn csv_bytes(header_lines: &str, columns: &[String], rows: impl Iterator<Item = Vec<String>>, path: &Path) -> Result<Vec<u8>> {
    let mut out = header_lines.as_bytes().to_vec();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        let csv_err = |source| Error::Csv { path: path.to_path_buf(), source };
        w.write_record(columns).map_err(csv_err)?;
        for row in rows {
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    Ok(out)
}

fn trajectory_csv(traj: &Trajectory, suite: &ObjectiveSuite, metrics: &[MetricKind], header: &str, path: &Path) -> Result<Vec<u8>> {
    let d = traj.dim();
    let mut columns = vec!["t".to_string(), "eta".to_string()];
    columns.extend((0..d).map(|j| format!("x{j}")));
    columns.extend(metrics.iter().map(|m| m.name().to_string()));
    let series: Vec<MetricSeries> = metrics
        .iter()
        .map(|&m| metric_series(traj, suite, m))
        .collect::<Result<_>>()?;
    let rows = traj.records.iter().enumerate().map(|(k, rec)| {
        let mut row = vec![rec.t.to_string(), rec.eta.to_string()];
        row.extend(rec.x.iter().map(|v| v.to_string()));
        row.extend(metrics.iter().map(|&m| metric_value(m, &series, k).to_string()));
        row
    });
    csv_bytes(header, &columns, rows, path)
}

fn metric_csv(series: &MetricSeries, header: &str, path: &Path) -> Result<Vec<u8>> {
    let columns = ["t", "mean", "standard_error", "ensemble_size"].map(String::from);
    let rows = (0..series.len()).map(|k| {
        vec![
            series.times[k].to_string(),
            series.values[k].to_string(),
            series.standard_errors[k].to_string(),
            series.ensemble_size.to_string(),
        ]
    });
    csv_bytes(header, &columns, rows, path)
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("reports always serialize");
    out.push(b'\n');
    out
}

/// Runs every seed, writes all outputs and evaluates the fit assertion.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Outcome> {
    let exp = spec.build()?;
    run_built(&exp)
}

pub fn run_built(exp: &Experiment) -> Result<Outcome> {
    let spec = &exp.spec;
    let dir = spec.output_dir.join(&spec.name);
    let constants = Constants::of(exp);
    let mut files = Vec::new();
    let suite = exp.run.suite.as_ref();
    let results = run_ensemble(&exp.run, &exp.seeds);

    let mut runs = Vec::with_capacity(results.len());
    let mut completed = Vec::new();
    for (seed, result) in exp.seeds.iter().zip(results) {
        let header = format!("{}# seed={seed}\n", constants.header());
        let (traj, error) = match result {
            Ok(traj) => (traj, None),
            Err(failure) => (failure.partial, Some(failure.error.to_string())),
        };
        let header = match &error {
            Some(e) => format!("{header}# partial: {e}\n"),
            None => header,
        };
        let path = dir.join(seed.to_string()).join("trajectory.csv");
        let bytes = trajectory_csv(&traj, suite, &spec.metrics, &header, &path)?;
        write_file(&path, &bytes, &mut files)?;
        let diag = &traj.diagnostics;
        runs.push(SeedSummary {
            seed: *seed,
            steps: diag.steps,
            sum_bound_violations: diag.sum_bound_violations,
            never_heard: diag.never_heard,
            max_staleness: diag.max_staleness,
            max_dist_sq: suite.optimum().map(|opt| {
                traj.records
                    .iter()
                    .map(|r| (&r.x - &opt.x_star).norm_squared())
                    .fold(0.0, f64::max)
            }),
            error: error.clone(),
        });
        if error.is_none() {
            completed.push(traj);
        }
    }

    let times = report_times(spec.horizon);
    let mut series = Vec::new();
    let ensemble_header = format!("{}# seeds={}\n", constants.header(), completed.len());
    if !completed.is_empty() {
        for &kind in &spec.metrics {
            let per_seed = completed
                .iter()
                .map(|traj| metric_series(traj, suite, kind)?.restrict(&times))
                .collect::<Result<Vec<_>>>()?;
            let mean = ensemble_mean(&per_seed)?;
            let path = dir.join("metrics").join(format!("{}.csv", kind.name()));
            write_file(&path, &metric_csv(&mean, &ensemble_header, &path)?, &mut files)?;
            series.push(mean);
        }
    }

    let fit = match &spec.fit {
        Some(fs) if !series.is_empty() => {
            let (t_min, t_max) = fs.window(spec.horizon);
            let s = series.iter().find(|s| s.kind == fs.metric).expect("fit metric is recorded");
            let fit = fit_rate(s, t_min, t_max)?;
            Some(FitReport::new(fit, fs.metric, completed.len(), fs.expected_slope, fs.tolerance))
        }
        _ => None,
    };
    if let Some(f) = &fit {
        write_file(&dir.join("fit.json"), &json_bytes(f), &mut files)?;
    }

    let invariants_ok = runs.iter().all(|r| r.error.is_none() && r.sum_bound_violations == 0);
    let fit_ok = fit.as_ref().is_none_or(|f| f.passed);
    let summary = Summary {
        name: spec.name.clone(),
        constants,
        horizon: spec.horizon,
        seeds: exp.seeds.clone(),
        delay_mode: spec.delay.mode,
        estimate_randomness: match spec.delay.mode {
            DelayMode::Direct => "fresh per (agent, t)",
            DelayMode::Buffered => "per (agent, tau)",
        },
        runs,
        fit,
        passed: invariants_ok && fit_ok,
    };
    write_file(&dir.join("summary.json"), &json_bytes(&summary), &mut files)?;
    let mut spec_bytes = crate::config::emit(spec).into_bytes();
    spec_bytes.push(b'\n');
    write_file(&dir.join("config.json"), &spec_bytes, &mut files)?;
    Ok(Outcome {
        dir,
        summary,
        series,
        files,
    })
}

/// Reads a metric CSV written by [`run_experiment`] (comment lines allowed).
pub fn read_metric_csv(path: &Path, kind: MetricKind) -> Result<MetricSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|source| Error::Csv { path: path.to_path_buf(), source })?;
    let headers = reader.headers().map_err(|source| Error::Csv { path: path.to_path_buf(), source })?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::invalid(format!("{}: missing column {name}", path.display())))
    };
    let (t_col, v_col) = (col("t")?, col("mean")?);
    let se_col = headers.iter().position(|h| h == "standard_error");
    let size_col = headers.iter().position(|h| h == "ensemble_size");
    let parse_err = |line: usize, what: &str| Error::invalid(format!("{}: bad {what} on data row {line}", path.display()));
    let (mut times, mut values, mut ses) = (Vec::new(), Vec::new(), Vec::new());
    let mut size = 1;
    for (k, row) in reader.records().enumerate() {
        let row = row.map_err(|source| Error::Csv { path: path.to_path_buf(), source })?;
        times.push(row[t_col].parse::<u64>().map_err(|_| parse_err(k + 1, "t"))?);
        values.push(row[v_col].parse::<f64>().map_err(|_| parse_err(k + 1, "mean"))?);
        ses.push(match se_col {
            Some(c) => row[c].parse::<f64>().map_err(|_| parse_err(k + 1, "standard_error"))?,
            None => f64::INFINITY,
        });
        if let Some(c) = size_col {
            size = row[c].parse::<usize>().map_err(|_| parse_err(k + 1, "ensemble_size"))?;
        }
    }
    MetricSeries::new(kind, times, values, ses, size)
}
