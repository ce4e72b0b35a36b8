//! Derived quantities of the convergence guarantees: projected gradient
//! mapping, step-weighted averages and index draws, ensemble statistics,
//! log-log rate fits, the constant-step neighborhood radius, and brute-force
//! projection oracles.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::Trajectory;
use crate::error::{check_dim, check_finite, Error, Result};
use crate::objectives::{ObjectiveSuite, SmoothFunction};
use crate::schedules::StepSizeSchedule;
use crate::sets::FeasibleSet;

/// `(x - P_S[x - eta v]) / eta`.
pub fn gradient_mapping(set: &FeasibleSet, x: &DVector<f64>, v: &DVector<f64>, eta: f64) -> Result<DVector<f64>> {
    check_dim(set.dim(), x.len())?;
    check_dim(set.dim(), v.len())?;
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::invalid(format!("eta must be > 0, got {eta}")));
    }
    let stepped = x - v * eta;
    check_finite(stepped.as_slice(), "gradient mapping step")?;
    Ok((x - set.project_unchecked(&stepped)) / eta)
}

/// `x~(T) = sum_t eta(t) x(t) / sum_t eta(t)` over `t = 0..=horizon`,
/// recomputed from the stored iterates. Requires a dense trajectory.
pub fn weighted_average_iterate(traj: &Trajectory, step: &StepSizeSchedule, horizon: u64) -> Result<DVector<f64>> {
    if horizon > traj.horizon {
        return Err(Error::invalid(format!(
            "horizon {horizon} exceeds the trajectory horizon {}",
            traj.horizon
        )));
    }
    if !traj.dense {
        return Err(Error::invalid("weighted average needs a densely recorded trajectory"));
    }
    let mut sum = DVector::zeros(traj.dim());
    let mut weight = 0.0;
    for rec in &traj.records[..=horizon as usize] {
        let eta = step.eta(rec.t);
        sum += &rec.x * eta;
        weight += eta;
    }
    Ok(sum / weight)
}

/// Draws `s` in `0..=horizon` with `P(s = t) proportional to eta(t)`.
#[derive(Debug, Clone)]
pub struct WeightedIndexSampler {
    cumulative: Vec<f64>,
}

impl WeightedIndexSampler {
    pub fn new(step: &StepSizeSchedule, horizon: u64) -> Self {
        let mut total = 0.0;
        let cumulative = (0..=horizon)
            .map(|t| {
                total += step.eta(t);
                total
            })
            .collect();
        WeightedIndexSampler { cumulative }
    }

    pub fn probability(&self, t: u64) -> f64 {
        let t = t as usize;
        let total = *self.cumulative.last().expect("non-empty");
        let prev = if t == 0 { 0.0 } else { self.cumulative[t - 1] };
        (self.cumulative[t] - prev) / total
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let total = *self.cumulative.last().expect("non-empty");
        let target = rng.random::<f64>() * total;
        let idx = self.cumulative.partition_point(|&c| c <= target);
        idx.min(self.cumulative.len() - 1) as u64
    }
}

pub fn sample_weighted_index<R: Rng + ?Sized>(step: &StepSizeSchedule, horizon: u64, rng: &mut R) -> u64 {
    WeightedIndexSampler::new(step, horizon).sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    /// `|h(t)|^2`, the squared projected gradient mapping at `x(t)`.
    GradMapSq,
    /// `|x(t) - x*|^2`.
    DistSq,
    /// `f(x~(t)) - f*` for the step-weighted average iterate.
    Suboptimality,
    /// `(1/(t+1)) sum_{s<=t} |h(s)|^2`.
    RunningMeanGradMapSq,
}

impl MetricKind {
    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::GradMapSq => "grad-map-sq",
            MetricKind::DistSq => "dist-sq",
            MetricKind::Suboptimality => "suboptimality",
            MetricKind::RunningMeanGradMapSq => "running-mean-grad-map-sq",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub kind: MetricKind,
    pub times: Vec<u64>,
    pub values: Vec<f64>,
    /// Standard error of each value; infinite for a single-run series.
    pub standard_errors: Vec<f64>,
    pub ensemble_size: usize,
}

impl MetricSeries {
    pub fn new(kind: MetricKind, times: Vec<u64>, values: Vec<f64>, standard_errors: Vec<f64>, ensemble_size: usize) -> Result<Self> {
        if times.len() != values.len() || times.len() != standard_errors.len() {
            return Err(Error::invalid("metric series columns differ in length"));
        }
        if let Some(k) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!("metric times must increase strictly (index {})", k + 1)));
        }
        check_finite(&values, "metric values")?;
        if ensemble_size == 0 {
            return Err(Error::invalid("ensemble size must be >= 1"));
        }
        Ok(MetricSeries {
            kind,
            times,
            values,
            standard_errors,
            ensemble_size,
        })
    }

    /// Single-run series; standard errors are infinite.
    pub fn single(kind: MetricKind, times: Vec<u64>, values: Vec<f64>) -> Result<Self> {
        let se = vec![f64::INFINITY; times.len()];
        Self::new(kind, times, values, se, 1)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Keeps only the given times (which must all be present).
    pub fn restrict(&self, times: &[u64]) -> Result<MetricSeries> {
        let mut idx = Vec::with_capacity(times.len());
        for t in times {
            match self.times.binary_search(t) {
                Ok(k) => idx.push(k),
                Err(_) => return Err(Error::invalid(format!("time {t} is not in the series"))),
            }
        }
        MetricSeries::new(
            self.kind,
            idx.iter().map(|&k| self.times[k]).collect(),
            idx.iter().map(|&k| self.values[k]).collect(),
            idx.iter().map(|&k| self.standard_errors[k]).collect(),
            self.ensemble_size,
        )
    }
}

/// Extracts one metric from a trajectory at every recorded time.
pub fn metric_series(traj: &Trajectory, suite: &ObjectiveSuite, kind: MetricKind) -> Result<MetricSeries> {
    let need_optimum = || {
        suite
            .optimum()
            .ok_or_else(|| Error::invalid(format!("metric {} needs a suite with a known optimum", kind.name())))
    };
    let values: Vec<f64> = match kind {
        MetricKind::GradMapSq => traj.records.iter().map(|r| r.grad_map_sq).collect(),
        MetricKind::RunningMeanGradMapSq => traj.records.iter().map(|r| r.grad_map_sq_running_mean).collect(),
        MetricKind::DistSq => {
            let opt = need_optimum()?;
            traj.records.iter().map(|r| (&r.x - &opt.x_star).norm_squared()).collect()
        }
        MetricKind::Suboptimality => {
            let opt = need_optimum()?;
            traj.records
                .iter()
                .map(|r| SmoothFunction::value(suite, &r.weighted_average) - opt.f_star)
                .collect()
        }
    };
    MetricSeries::single(kind, traj.records.iter().map(|r| r.t).collect(), values)
}

/// Pointwise mean across runs with sample standard errors.
pub fn ensemble_mean(series: &[MetricSeries]) -> Result<MetricSeries> {
    let first = series.first().ok_or_else(|| Error::invalid("ensemble_mean needs at least one series"))?;
    for s in series {
        if s.times != first.times || s.kind != first.kind {
            return Err(Error::invalid("ensemble members are on different time grids"));
        }
    }
    let m = series.len();
    if m == 1 {
        return MetricSeries::new(
            first.kind,
            first.times.clone(),
            first.values.clone(),
            vec![f64::INFINITY; first.len()],
            1,
        );
    }
    let mut means = Vec::with_capacity(first.len());
    let mut ses = Vec::with_capacity(first.len());
    for k in 0..first.len() {
        let mean = series.iter().map(|s| s.values[k]).sum::<f64>() / m as f64;
        let var = series.iter().map(|s| (s.values[k] - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        means.push(mean);
        ses.push((var / m as f64).sqrt());
    }
    MetricSeries::new(first.kind, first.times.clone(), means, ses, m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub t_min: u64,
    pub t_max: u64,
    pub samples: usize,
}

pub const MIN_FIT_SAMPLES: usize = 10;

/// Least-squares fit of `ln(value)` against `ln(t)` over `t_min <= t <= t_max`.
pub fn fit_rate(series: &MetricSeries, t_min: u64, t_max: u64) -> Result<RateFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (k, (&t, &v)) in series.times.iter().zip(&series.values).enumerate() {
        if t < t_min || t > t_max {
            continue;
        }
        if t == 0 {
            return Err(Error::invalid("rate window must start at t >= 1"));
        }
        if v.is_nan() || v <= 0.0 {
            return Err(Error::invalid(format!(
                "non-positive value {v} at index {k} (t = {t}) cannot be fitted on a log scale"
            )));
        }
        xs.push((t as f64).ln());
        ys.push(v.ln());
    }
    if xs.len() < MIN_FIT_SAMPLES {
        return Err(Error::invalid(format!(
            "rate window [{t_min}, {t_max}] holds {} samples, need at least {MIN_FIT_SAMPLES}",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        t_min,
        t_max,
        samples: xs.len(),
    })
}

/// Integer times in `[t_min, t_max]` spaced evenly in `ln t`, at least
/// `per_decade` per decade, always including both endpoints.
pub fn log_spaced_times(t_min: u64, t_max: u64, per_decade: usize) -> Vec<u64> {
    let t_min = t_min.max(1);
    if t_max < t_min {
        return Vec::new();
    }
    let decades = (t_max as f64 / t_min as f64).log10();
    let steps = ((decades * per_decade as f64).ceil() as usize).max(1);
    let mut out: Vec<u64> = (0..=steps)
        .map(|k| (t_min as f64 * 10f64.powf(decades * k as f64 / steps as f64)).round() as u64)
        .map(|t| t.clamp(t_min, t_max))
        .collect();
    out.push(t_max);
    out.sort_unstable();
    out.dedup();
    out
}

/// Asymptotic bound on `E|x(t) - x*|^2` under constant step `eta < 1/mu`:
/// `n^2 G (1 + 2 sqrt(C)) eta/mu + 2 n^4 C G L^2 eta^2/mu^2 + 2 n^2 q^2/mu^2`.
/// With `q = None` (diminishing bias) the last term is dropped.
pub fn neighborhood_radius(n: usize, g: f64, c: f64, l: f64, mu: f64, eta: f64, q: Option<f64>) -> Result<f64> {
    let all_positive = [g, l, mu, eta].iter().all(|v| v.is_finite() && *v > 0.0);
    if n == 0 || !all_positive || !(c.is_finite() && c >= 0.0) {
        return Err(Error::invalid("neighborhood radius needs n >= 1, C >= 0 and positive G, L, mu, eta"));
    }
    if eta * mu >= 1.0 {
        return Err(Error::invalid(format!(
            "constant step eta = {eta} must satisfy eta < 1/mu = {}",
            1.0 / mu
        )));
    }
    let n2 = (n * n) as f64;
    let mut r = n2 * g * (1.0 + 2.0 * c.sqrt()) * eta / mu + 2.0 * n2 * n2 * c * g * l * l * eta * eta / (mu * mu);
    if let Some(q) = q {
        if !(q.is_finite() && q >= 0.0) {
            return Err(Error::invalid(format!("bias q must be >= 0, got {q}")));
        }
        r += 2.0 * n2 * q * q / (mu * mu);
    }
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMode {
    /// Enumerate every support pattern of the simplex.
    Enumeration,
    /// Closed-form projections for boxes, balls and the whole space.
    ClosedForm,
}

pub const MAX_ENUMERATION_DIM: usize = 5;

/// Reference projection computed independently of [`FeasibleSet::project`].
pub fn brute_force_project(set: &FeasibleSet, y: &DVector<f64>, mode: OracleMode) -> Result<DVector<f64>> {
    check_dim(set.dim(), y.len())?;
    check_finite(y.as_slice(), "oracle input")?;
    match (mode, set) {
        (OracleMode::Enumeration, FeasibleSet::Simplex { dim }) => {
            if *dim > MAX_ENUMERATION_DIM {
                return Err(Error::invalid(format!(
                    "enumeration oracle supports d <= {MAX_ENUMERATION_DIM}, got {dim}"
                )));
            }
            Ok(enumerate_simplex(y))
        }
        (OracleMode::Enumeration, other) => Err(Error::invalid(format!(
            "enumeration oracle does not support {} sets",
            other.kind_name()
        ))),
        (OracleMode::ClosedForm, FeasibleSet::WholeSpace { .. }) => Ok(y.clone()),
        (OracleMode::ClosedForm, FeasibleSet::Box { lower, upper }) => Ok(DVector::from_iterator(
            y.len(),
            y.iter().enumerate().map(|(j, &v)| {
                if v < lower[j] {
                    lower[j]
                } else if v > upper[j] {
                    upper[j]
                } else {
                    v
                }
            }),
        )),
        (OracleMode::ClosedForm, FeasibleSet::L2Ball { center, radius }) => {
            let r = y - center;
            let dist = r.norm();
            Ok(if dist <= *radius { y.clone() } else { center + r * (radius / dist) })
        }
        (OracleMode::ClosedForm, FeasibleSet::Simplex { .. }) => {
            Err(Error::invalid("the simplex has no closed-form oracle; use enumeration"))
        }
    }
}

/// For each support `A`, the minimizer of `|x - y|` on `{x_A^c = 0, sum x_A = 1}`
/// is `x_A = y_A - (sum y_A - 1)/|A|`. The projection is the nearest feasible one.
fn enumerate_simplex(y: &DVector<f64>) -> DVector<f64> {
    let d = y.len();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 1u32..(1u32 << d) {
        let support: Vec<usize> = (0..d).filter(|j| mask & (1 << j) != 0).collect();
        let shift = (support.iter().map(|&j| y[j]).sum::<f64>() - 1.0) / support.len() as f64;
        let mut x = DVector::zeros(d);
        let mut feasible = true;
        for &j in &support {
            x[j] = y[j] - shift;
            if x[j] < -1e-12 {
                feasible = false;
            }
        }
        if !feasible {
            continue;
        }
        x.apply(|v| *v = v.max(0.0));
        let dist = (&x - y).norm_squared();
        if best.as_ref().is_none_or(|(b, _)| dist < *b) {
            best = Some((dist, x));
        }
    }
    best.expect("the vertex supports are always feasible").1
}
