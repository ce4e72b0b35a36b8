//! JSON experiment documents: parsing, validation, normalization and emission.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::analysis::MetricKind;
use crate::delays::DelaySpec;
use crate::engine::RunConfig;
use crate::error::{Error, Result};
use crate::estimators::{GradientSource, SourceSpec};
use crate::objectives::SuiteSpec;
use crate::schedules::StepSizeSchedule;
use crate::sets::{FeasibleSet, FEASIBILITY_TOL};
use crate::streams::stream_rng;

/// Default relative tolerance of a slope assertion.
pub const DEFAULT_SLOPE_TOLERANCE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    List(Vec<u64>),
    Range(SeedRange),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedRange {
    pub base_seed: u64,
    pub count: u64,
}

impl Seeds {
    pub fn expand(&self) -> Result<Vec<u64>> {
        let seeds = match self {
            Seeds::List(list) => list.clone(),
            Seeds::Range(SeedRange { base_seed, count }) => (0..*count)
                .map(|k| base_seed.checked_add(k).ok_or_else(|| Error::Config("seed range overflows u64".into())))
                .collect::<Result<_>>()?,
        };
        if seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let mut seen = BTreeSet::new();
        for s in &seeds {
            if !seen.insert(*s) {
                return Err(Error::Config(format!("seeds must be distinct; {s} appears twice")));
            }
        }
        Ok(seeds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    pub metric: MetricKind,
    /// Defaults to the last two decades of the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_min: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<u64>,
    /// When present the run fails unless `|slope - expected| <= tolerance`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

impl FitSpec {
    pub fn window(&self, horizon: u64) -> (u64, u64) {
        let t_max = self.t_max.unwrap_or(horizon);
        (self.t_min.unwrap_or((t_max / 100).max(1)), t_max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub suite: SuiteSpec,
    pub set: FeasibleSet,
    pub source: SourceSpec,
    pub delay: DelaySpec,
    pub step: StepSizeSchedule,
    pub horizon: u64,
    /// Starting point; defaults to the set's anchor point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    pub seeds: Seeds,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<MetricKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSpec>,
    /// Declared second-moment bound; certified by sampling when absent.
    #[serde(default, rename = "G", skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_metrics() -> Vec<MetricKind> {
    vec![MetricKind::GradMapSq]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Parses, validates and normalizes an experiment document.
pub fn parse_config(text: &str) -> Result<ExperimentSpec> {
    let spec: ExperimentSpec = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    spec.normalized()
}

/// Pretty JSON; `parse_config(&emit(&spec))` returns `spec` for normalized specs.
pub fn emit(spec: &ExperimentSpec) -> String {
    serde_json::to_string_pretty(spec).expect("experiment specs always serialize")
}

/// A validated experiment ready to run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub spec: ExperimentSpec,
    pub run: RunConfig,
    pub seeds: Vec<u64>,
    /// Declared or certified `G`; `None` when neither is available.
    pub second_moment_g: Option<f64>,
}

/// Draws used to certify `G` when the config does not declare it.
const CERTIFY_POINTS: usize = 2_000;
const CERTIFY_SAMPLES_PER_POINT: usize = 200;

impl ExperimentSpec {
    /// Validates every field and fills defaults so the result echoes all constants.
    pub fn normalized(mut self) -> Result<Self> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name == "." || self.name == ".." {
            return Err(Error::Config(format!("name {:?} must be a plain file name", self.name)));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        self.seeds = Seeds::List(self.seeds.expand()?);
        self.delay = self.delay.normalized();
        let suite = self.suite.build(&self.set).map_err(|e| Error::Config(format!("suite: {e}")))?;
        self.source.kind().map_err(|e| Error::Config(format!("source: {e}")))?;
        self.delay.build().map_err(|e| Error::Config(format!("delay: {e}")))?;
        self.step.validate().map_err(|e| Error::Config(format!("step: {e}")))?;
        let x0 = match self.x0.take() {
            Some(x) => DVector::from_vec(x),
            None => self.set.anchor(),
        };
        if x0.len() != self.set.dim() || !self.set.contains(&x0, FEASIBILITY_TOL).unwrap_or(false) {
            return Err(Error::Config("x0 must be a point of the feasible set".into()));
        }
        self.x0 = Some(x0.iter().copied().collect());

        if self.metrics.is_empty() {
            return Err(Error::Config("metrics must not be empty".into()));
        }
        let mut seen = BTreeSet::new();
        for m in &self.metrics {
            if !seen.insert(m.name()) {
                return Err(Error::Config(format!("metric {} is listed twice", m.name())));
            }
            if matches!(m, MetricKind::DistSq | MetricKind::Suboptimality) && suite.optimum().is_none() {
                return Err(Error::Config(format!("metric {} needs a suite with a known minimizer", m.name())));
            }
        }
        if let Some(fit) = &mut self.fit {
            if !self.metrics.contains(&fit.metric) {
                return Err(Error::Config(format!("fit metric {} is not among the recorded metrics", fit.metric.name())));
            }
            let (t_min, t_max) = fit.window(self.horizon);
            if t_min < 1 || t_max > self.horizon || t_min >= t_max {
                return Err(Error::Config(format!(
                    "fit window [{t_min}, {t_max}] must satisfy 1 <= t_min < t_max <= horizon = {}",
                    self.horizon
                )));
            }
            fit.t_min = Some(t_min);
            fit.t_max = Some(t_max);
            if fit.expected_slope.is_some() {
                let tol = fit.tolerance.get_or_insert(DEFAULT_SLOPE_TOLERANCE);
                if !(tol.is_finite() && *tol > 0.0) {
                    return Err(Error::Config("fit tolerance must be > 0".into()));
                }
            } else if fit.tolerance.is_some() {
                return Err(Error::Config("fit tolerance given without expected_slope".into()));
            }
        }
        if let Some(g) = self.g {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::Config(format!("G must be > 0, got {g}")));
            }
        }
        Ok(self)
    }

    pub fn seed_list(&self) -> Result<Vec<u64>> {
        self.seeds.expand()
    }

    /// Builds the run template and resolves `G`.
    pub fn build(&self) -> Result<Experiment> {
        let spec = self.clone().normalized()?;
        let suite = spec.suite.build(&spec.set)?;
        let mut source = GradientSource::for_suite(spec.source.kind()?, &suite)?;
        let seeds = spec.seed_list()?;
        let second_moment_g = match spec.g {
            Some(g) => Some(g),
            None if spec.set.is_bounded() => {
                let mut rng = stream_rng(seeds[0], crate::streams::Stream::Check, u64::MAX, 0);
                Some(source.certify_second_moment(&suite, CERTIFY_POINTS, CERTIFY_SAMPLES_PER_POINT, &mut rng)?)
            }
            None => None,
        };
        if let Some(g) = second_moment_g {
            source = source.with_second_moment(g)?;
        }
        let run = RunConfig {
            suite: Arc::new(suite),
            set: spec.set.clone(),
            source,
            delay: spec.delay.build()?,
            delay_mode: spec.delay.mode,
            step: spec.step.clone(),
            horizon: spec.horizon,
            x0: DVector::from_vec(spec.x0.clone().expect("normalized")),
            seed: seeds[0],
        };
        run.validate()?;
        Ok(Experiment {
            spec,
            run,
            seeds,
            second_moment_g,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"{
        "name": "tiny",
        "suite": {"kind": "quadratic", "n": 2, "d": 3, "mu": 1, "L": 4, "seed": 1},
        "set": {"kind": "box", "lower": [-1, -1, -1], "upper": [1, 1, 1]},
        "source": {"kind": "additive-noise", "sigma": 0.5},
        "delay": {"kind": "uniform-scaled", "kappa": 0.5, "params": {"D_max": 4}},
        "step": {"kind": "power", "eta0": 1.0, "alpha": 1.0},
        "horizon": 200,
        "seeds": {"base_seed": 10, "count": 3},
        "metrics": ["dist-sq"],
        "fit": {"metric": "dist-sq"}
    }"#;

    fn with(patch: impl FnOnce(&mut serde_json::Value)) -> String {
        let mut doc: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        patch(&mut doc);
        doc.to_string()
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let spec = parse_config(MINIMAL).unwrap();
        assert_eq!(spec.seeds, Seeds::List(vec![10, 11, 12]));
        assert_eq!(spec.x0, Some(vec![0.0, 0.0, 0.0]));
        assert_eq!(spec.output_dir, PathBuf::from("out"));
        let fit = spec.fit.as_ref().unwrap();
        assert_eq!((fit.t_min, fit.t_max), (Some(2), Some(200)));
        assert_eq!(spec.delay.mode, crate::delays::DelayMode::Direct);
    }

    #[test]
    fn emit_round_trips() {
        let spec = parse_config(MINIMAL).unwrap();
        assert_eq!(parse_config(&emit(&spec)).unwrap(), spec);
        let third = with(|d| d["delay"]["kappa"] = serde_json::json!("1/3"));
        let spec = parse_config(&third).unwrap();
        assert_eq!(parse_config(&emit(&spec)).unwrap(), spec);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = parse_config(&with(|d| d["stepsize"] = serde_json::json!(1))).unwrap_err().to_string();
        assert!(err.contains("stepsize"), "{err}");
        let err = parse_config(&with(|d| d["delay"]["params"]["Dmax"] = serde_json::json!(3))).unwrap_err().to_string();
        assert!(err.contains("Dmax"), "{err}");
    }

    #[test]
    fn constraint_violations_are_explained() {
        let err = parse_config(&with(|d| d["delay"]["kappa"] = serde_json::json!(1.5))).unwrap_err().to_string();
        assert!(err.contains("(0, 1)") && err.contains("tau >= kappa*t"), "{err}");
        let err = parse_config(&with(|d| d["seeds"] = serde_json::json!([7, 7]))).unwrap_err().to_string();
        assert!(err.contains("distinct"), "{err}");
        let err = parse_config(&with(|d| {
            d["horizon"] = serde_json::json!(10);
            d["fit"] = serde_json::json!({"metric": "dist-sq", "t_min": 100, "t_max": 1000});
        }))
        .unwrap_err()
        .to_string();
        assert!(err.contains("fit window"), "{err}");
        let err = parse_config(&with(|d| d["x0"] = serde_json::json!([2, 0, 0]))).unwrap_err().to_string();
        assert!(err.contains("x0"), "{err}");
        let err = parse_config(&with(|d| d["metrics"] = serde_json::json!([]))).unwrap_err().to_string();
        assert!(err.contains("metrics"), "{err}");
    }

    #[test]
    fn nonconvex_suite_has_no_distance_metric() {
        let doc = with(|d| {
            d["suite"] = serde_json::json!({"kind": "sine-quadratic", "n": 2, "d": 3, "quad_weight": 1, "amplitude": 1, "frequency": 2, "seed": 4});
        });
        assert!(parse_config(&doc).is_err());
        let doc = with(|d| {
            d["suite"] = serde_json::json!({"kind": "sine-quadratic", "n": 2, "d": 3, "quad_weight": 1, "amplitude": 1, "frequency": 2, "seed": 4});
            d["metrics"] = serde_json::json!(["running-mean-grad-map-sq"]);
            d["fit"] = serde_json::Value::Null;
        });
        parse_config(&doc).unwrap();
    }

    #[test]
    fn build_certifies_g_on_bounded_sets() {
        let exp = parse_config(MINIMAL).unwrap().build().unwrap();
        assert!(exp.second_moment_g.unwrap() > 0.0);
        assert_eq!(exp.seeds, vec![10, 11, 12]);
        let declared = parse_config(&with(|d| d["G"] = serde_json::json!(50.0))).unwrap().build().unwrap();
        assert_eq!(declared.second_moment_g, Some(50.0));
    }
}
