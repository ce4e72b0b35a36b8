use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use delaysgd::analysis::{fit_rate, MetricKind};
use delaysgd::checks::{run_checks, CheckOptions};
use delaysgd::config::parse_config;
use delaysgd::experiment::{read_metric_csv, run_experiment};
use delaysgd::Error;

#[derive(Parser)]
#[command(name = "delaysgd", version, about = "Projected SGD with delayed, biased agent gradients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of an experiment and write trajectories, metrics and fits.
    Run {
        config: PathBuf,
        /// Overrides the config's output_dir.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Run property suites; exits nonzero on any violation.
    Check {
        /// all, projections, gradient-mapping, delays, estimators, aggregation, staleness or oracle.
        #[arg(default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = CheckOptions::default().seed)]
        seed: u64,
        /// Multiplier on the default number of cases.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Print reports as JSON lines.
        #[arg(long)]
        json: bool,
    },
    /// Fit log(mean) against log(t) for a metric CSV.
    Fit {
        metric_csv: PathBuf,
        #[arg(long, num_args = 2, value_names = ["T_MIN", "T_MAX"], required = true)]
        window: Vec<u64>,
    },
}

/// Prints a line, ignoring a closed stdout.
fn say(line: String) {
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn run(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Run { config, output_dir } => {
            let text = std::fs::read_to_string(&config).map_err(|e| Error::Io { path: config.clone(), source: e })?;
            let mut spec = parse_config(&text)?;
            if let Some(dir) = output_dir {
                spec.output_dir = dir;
            }
            let outcome = run_experiment(&spec)?;
            for run in &outcome.summary.runs {
                if let Some(e) = &run.error {
                    eprintln!("seed {}: {e}", run.seed);
                }
                if run.sum_bound_violations > 0 {
                    eprintln!("seed {}: {} aggregation bound violations", run.seed, run.sum_bound_violations);
                }
            }
            if let Some(fit) = &outcome.summary.fit {
                say(format!(
                    "{}: slope {:.4} over [{}, {}] (r^2 {:.4}, {} seeds){}",
                    fit.metric.name(),
                    fit.slope,
                    fit.window[0],
                    fit.window[1],
                    fit.r_squared,
                    fit.n_seeds,
                    match (fit.expected_slope, fit.tolerance) {
                        (Some(e), Some(t)) => format!(", expected {e} +/- {t}"),
                        _ => String::new(),
                    }
                ));
            }
            say(format!("{} {}", if outcome.passed() { "PASS" } else { "FAIL" }, outcome.dir.display()));
            Ok(outcome.passed())
        }
        Command::Check { suite, seed, scale, json } => {
            if !(scale.is_finite() && scale > 0.0) {
                return Err(Error::InvalidParameter(format!("--scale must be > 0, got {scale}")));
            }
            let reports = run_checks(&suite, &CheckOptions { seed, scale })?;
            for r in &reports {
                if json {
                    say(serde_json::to_string(r).expect("reports serialize"));
                } else {
                    say(r.to_string());
                }
            }
            Ok(reports.iter().all(|r| r.passed()))
        }
        Command::Fit { metric_csv, window } => {
            let kind = metric_csv
                .file_stem()
                .and_then(|s| serde_json::from_value::<MetricKind>(serde_json::Value::String(s.to_string_lossy().into_owned())).ok())
                .unwrap_or(MetricKind::GradMapSq);
            let series = read_metric_csv(&metric_csv, kind)?;
            let fit = fit_rate(&series, window[0], window[1])?;
            say(serde_json::to_string_pretty(&fit).expect("fits serialize"));
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
