//! Property suites behind `delaysgd check`. Each property yields a report
//! with a case count, the number of violations and the first counterexample.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::analysis::{brute_force_project, gradient_mapping, OracleMode, MAX_ENUMERATION_DIM};
use crate::delays::{BufferState, DelayKind, DelayMode, DelayModel};
use crate::engine::{run_ensemble, RunConfig};
use crate::error::{Error, Result};
use crate::estimators::{two_point, EstimatorKind, GradientSource, MomentAccumulator};
use crate::objectives::{ObjectiveSuite, QuadraticSpec, SmoothFunction};
use crate::schedules::{Kappa, SmoothingSchedule, StepSizeSchedule};
use crate::sets::{FeasibleSet, FEASIBILITY_TOL};
use crate::streams::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub suite: String,
    pub property: String,
    pub cases: u64,
    pub violations: u64,
    /// Largest amount by which a case exceeded its bound (negative if none did).
    pub worst_excess: f64,
    pub counterexample: Option<String>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed() { "ok" } else { "VIOLATED" };
        write!(
            f,
            "{status:8} {}/{}: {} cases, {} violations, worst excess {:e}",
            self.suite, self.property, self.cases, self.violations, self.worst_excess
        )?;
        if let Some(c) = &self.counterexample {
            write!(f, "\n         counterexample: {c}")?;
        }
        Ok(())
    }
}

struct Tally {
    report: CheckReport,
}

impl Tally {
    fn new(suite: &str, property: &str) -> Self {
        Tally {
            report: CheckReport {
                suite: suite.to_string(),
                property: property.to_string(),
                cases: 0,
                violations: 0,
                worst_excess: f64::NEG_INFINITY,
                counterexample: None,
            },
        }
    }

    /// Records `lhs <= rhs`.
    fn le(&mut self, lhs: f64, rhs: f64, describe: impl FnOnce() -> String) {
        let r = &mut self.report;
        r.cases += 1;
        let excess = lhs - rhs;
        if excess > r.worst_excess || excess.is_nan() {
            r.worst_excess = excess;
        }
        if lhs.is_nan() || rhs.is_nan() || lhs > rhs {
            r.violations += 1;
            if r.counterexample.is_none() {
                r.counterexample = Some(format!("{} (lhs {lhs:e} > rhs {rhs:e})", describe()));
            }
        }
    }

    fn finish(self) -> CheckReport {
        self.report
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuiteName {
    Projections,
    GradientMapping,
    Delays,
    Estimators,
    Aggregation,
    Staleness,
    Oracle,
}

impl SuiteName {
    pub const ALL: [SuiteName; 7] = [
        SuiteName::Projections,
        SuiteName::GradientMapping,
        SuiteName::Delays,
        SuiteName::Estimators,
        SuiteName::Aggregation,
        SuiteName::Staleness,
        SuiteName::Oracle,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SuiteName::Projections => "projections",
            SuiteName::GradientMapping => "gradient-mapping",
            SuiteName::Delays => "delays",
            SuiteName::Estimators => "estimators",
            SuiteName::Aggregation => "aggregation",
            SuiteName::Staleness => "staleness",
            SuiteName::Oracle => "oracle",
        }
    }

    /// Parses a selector; `all` selects every suite.
    pub fn select(selector: &str) -> Result<Vec<SuiteName>> {
        if selector == "all" {
            return Ok(Self::ALL.to_vec());
        }
        Self::ALL
            .iter()
            .find(|s| s.name() == selector)
            .map(|s| vec![*s])
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|s| s.name()).collect();
                Error::invalid(format!("unknown check suite {selector:?}; expected all or one of {}", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CheckOptions {
    pub seed: u64,
    /// Multiplier on the default case counts.
    pub scale: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions { seed: 20_240_601, scale: 1.0 }
    }
}

impl CheckOptions {
    fn count(&self, base: usize) -> usize {
        ((base as f64 * self.scale).ceil() as usize).max(1)
    }
}

pub fn run_suite(suite: SuiteName, opts: &CheckOptions) -> Result<Vec<CheckReport>> {
    let sets = standard_sets()?;
    match suite {
        SuiteName::Projections => Ok(check_projections(&sets, opts.count(100_000), opts.seed)),
        SuiteName::GradientMapping => Ok(check_gradient_mapping(&sets, opts.count(100_000), opts.seed)),
        SuiteName::Delays => {
            let models = standard_delay_models()?;
            let mut out = check_delay_bounds(&models, opts.count(1_000_000), opts.seed);
            out.extend(models.iter().map(|m| check_delay_certificate(m, 2_000)));
            Ok(out)
        }
        SuiteName::Estimators => check_estimators(opts),
        SuiteName::Aggregation => check_aggregation(opts),
        SuiteName::Staleness => check_staleness(opts),
        SuiteName::Oracle => Ok(vec![check_simplex_oracle(opts.count(1_000), opts.seed)?]),
    }
}

pub fn run_checks(selector: &str, opts: &CheckOptions) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    for suite in SuiteName::select(selector)? {
        out.extend(run_suite(suite, opts)?);
    }
    Ok(out)
}

/// Sets covering every kind, including unbounded and degenerate boxes.
pub fn standard_sets() -> Result<Vec<FeasibleSet>> {
    let inf = f64::INFINITY;
    Ok(vec![
        FeasibleSet::whole_space(3)?,
        FeasibleSet::cube(3, -1.0, 2.0)?,
        FeasibleSet::boxed(
            DVector::from_row_slice(&[0.0, -inf, -1.0, 0.5]),
            DVector::from_row_slice(&[inf, 1.0, 1.0, 0.5]),
        )?,
        FeasibleSet::l2_ball(DVector::from_row_slice(&[1.0, -1.0, 0.5]), 2.0)?,
        FeasibleSet::simplex(1)?,
        FeasibleSet::simplex(3)?,
        FeasibleSet::simplex(8)?,
    ])
}

pub fn standard_delay_models() -> Result<Vec<DelayModel>> {
    Ok(vec![
        DelayModel::new(DelayKind::Zero, Kappa::ratio(1, 2)?)?,
        DelayModel::new(DelayKind::Fixed { delay: 4 }, Kappa::ratio(1, 3)?)?,
        DelayModel::new(DelayKind::UniformScaled { d_max: 10 }, Kappa::ratio(1, 2)?)?,
        DelayModel::new(DelayKind::GeometricScaled { mean: 3.0, cap_by_kappa: true }, Kappa::new(0.3)?)?,
        DelayModel::new(DelayKind::GeometricScaled { mean: 2.0, cap_by_kappa: false }, Kappa::new(0.7)?)?,
    ])
}

fn gaussian<R: Rng + ?Sized>(d: usize, scale: f64, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(d, (0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)))
}

/// A point near the set, often outside it.
fn random_point<R: Rng + ?Sized>(set: &FeasibleSet, rng: &mut R) -> DVector<f64> {
    set.anchor() + gaussian(set.dim(), 2.0 * set.scale(), rng)
}

fn random_member<R: Rng + ?Sized>(set: &FeasibleSet, rng: &mut R) -> DVector<f64> {
    match set.sample(rng) {
        Some(x) if rng.random::<f64>() < 0.5 => x,
        _ => set.project_unchecked(&random_point(set, rng)),
    }
}

fn fmt_vec(v: &DVector<f64>) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.17e}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Idempotence, nonexpansiveness, the variational inequality and feasibility
/// of every set's projection; `cases` is split evenly across the sets.
pub fn check_projections(sets: &[FeasibleSet], cases: usize, seed: u64) -> Vec<CheckReport> {
    let per_set = cases.div_ceil(sets.len().max(1));
    let mut idem = Tally::new("projections", "idempotence");
    let mut nonexp = Tally::new("projections", "nonexpansive");
    let mut vi = Tally::new("projections", "variational-inequality");
    let mut feas = Tally::new("projections", "feasibility");
    for (k, set) in sets.iter().enumerate() {
        let mut rng = stream_rng(seed, Stream::Check, 100 + k as u64, 0);
        for _ in 0..per_set {
            let y1 = random_point(set, &mut rng);
            let y2 = random_point(set, &mut rng);
            let z = random_member(set, &mut rng);
            let p1 = set.project_unchecked(&y1);
            let p2 = set.project_unchecked(&y2);
            let label = || format!("{} set, y = {}", set.kind_name(), fmt_vec(&y1));
            idem.le((set.project_unchecked(&p1) - &p1).norm(), FEASIBILITY_TOL * (1.0 + p1.norm()), label);
            nonexp.le((&p1 - &p2).norm(), (&y1 - &y2).norm() + FEASIBILITY_TOL, || {
                format!("{} set, y1 = {}, y2 = {}", set.kind_name(), fmt_vec(&y1), fmt_vec(&y2))
            });
            let r = &y1 - &p1;
            let w = &z - &p1;
            vi.le(r.dot(&w), FEASIBILITY_TOL * (1.0 + r.norm() * w.norm()), || {
                format!("{} set, y = {}, z = {}", set.kind_name(), fmt_vec(&y1), fmt_vec(&z))
            });
            feas.le(set.distance(&p1).unwrap_or(f64::INFINITY), FEASIBILITY_TOL, label);
        }
    }
    vec![idem.finish(), nonexp.finish(), vi.finish(), feas.finish()]
}

/// For `P = gradient_mapping(x, v, eta)`: `|P|^2 <= <v, P> <= |v|^2`,
/// `|P(v1) - P(v2)| <= |v1 - v2|`, and `P = v` when the step stays inside.
pub fn check_gradient_mapping(sets: &[FeasibleSet], cases: usize, seed: u64) -> Vec<CheckReport> {
    let per_set = cases.div_ceil(sets.len().max(1));
    let mut lower = Tally::new("gradient-mapping", "norm-below-inner-product");
    let mut upper = Tally::new("gradient-mapping", "inner-product-below-norm");
    let mut lip = Tally::new("gradient-mapping", "lipschitz-in-direction");
    let mut interior = Tally::new("gradient-mapping", "interior-fixed-point");
    for (k, set) in sets.iter().enumerate() {
        let mut rng = stream_rng(seed, Stream::Check, 200 + k as u64, 0);
        let d = set.dim();
        for _ in 0..per_set {
            let x = random_member(set, &mut rng);
            let v1 = gaussian(d, 3.0, &mut rng);
            let v2 = gaussian(d, 3.0, &mut rng);
            let eta = 10f64.powf(rng.random_range(-2.0..0.5));
            let label = || format!("{} set, x = {}, v = {}, eta = {eta:e}", set.kind_name(), fmt_vec(&x), fmt_vec(&v1));
            let (Ok(p1), Ok(p2)) = (gradient_mapping(set, &x, &v1, eta), gradient_mapping(set, &x, &v2, eta)) else {
                lower.le(1.0, 0.0, label);
                continue;
            };
            let tol = FEASIBILITY_TOL * (1.0 + v1.norm_squared());
            lower.le(p1.norm_squared(), v1.dot(&p1) + tol, label);
            upper.le(v1.dot(&p1), v1.norm_squared() + tol, label);
            lip.le((&p1 - &p2).norm(), (&v1 - &v2).norm() + FEASIBILITY_TOL, label);

            let anchor = set.anchor();
            let small = 1e-3 / (1.0 + v1.norm());
            if set.contains_interior(&anchor, small * v1.norm() + 1e-12) {
                if let Ok(p) = gradient_mapping(set, &anchor, &v1, small) {
                    interior.le((&p - &v1).norm(), FEASIBILITY_TOL * (1.0 + v1.norm()), || {
                        format!("{} set, v = {}", set.kind_name(), fmt_vec(&v1))
                    });
                }
            }
        }
    }
    vec![lower.finish(), upper.finish(), lip.finish(), interior.finish()]
}

/// `ceil(kappa t) <= tau <= t` for direct draws at log-uniform times, and
/// `min(ceil(kappa t), t-1) <= tau <= t-1` (or -1 at `t = 0`) in buffered mode.
pub fn check_delay_bounds(models: &[DelayModel], samples: usize, seed: u64) -> Vec<CheckReport> {
    let per_model = samples.div_ceil(models.len().max(1));
    let mut direct = Tally::new("delays", "direct-window");
    let mut buffered = Tally::new("delays", "buffered-window");
    for (k, model) in models.iter().enumerate() {
        let kappa = model.kappa();
        let mut rng = stream_rng(seed, Stream::Check, 300 + k as u64, 0);
        for _ in 0..per_model {
            let t = if rng.random::<f64>() < 0.1 {
                rng.random_range(0..50)
            } else {
                10f64.powf(rng.random_range(0.0..6.0)) as u64
            };
            let tau = model.sample_tau(t, &mut rng);
            let lo = kappa.ceil_mul(t);
            let label = || format!("{:?}, kappa = {kappa}, t = {t}, tau = {tau}", model.kind());
            direct.le(lo as f64, tau as f64, label);
            direct.le(tau as f64, t as f64, label);
        }
        let agents = 3;
        let horizon = (per_model / (10 * agents)).max(10) as u64;
        let mut buffer = BufferState::new(agents, kappa);
        for t in 0..horizon {
            for i in 0..agents {
                let mut rng = stream_rng(seed, Stream::Transit, i as u64, t);
                buffer.send(i, t, model.sample_transit(&mut rng));
                let tau = buffer.buffered_tau(i, t);
                let label = || format!("{:?} buffered, kappa = {kappa}, t = {t}, tau = {tau}", model.kind());
                if t == 0 {
                    buffered.le(tau as f64, -1.0, label);
                } else {
                    buffered.le(kappa.ceil_mul(t).min(t - 1) as f64, tau as f64, label);
                    buffered.le(tau as f64, (t - 1) as f64, label);
                }
            }
        }
    }
    vec![direct.finish(), buffered.finish()]
}

/// Exact `E[(t - tau)^2] <= C` for `t <= t_max`.
pub fn check_delay_certificate(model: &DelayModel, t_max: u64) -> CheckReport {
    let mut tally = Tally::new("delays", &format!("second-moment-certificate {:?} kappa={}", model.kind(), model.kappa()));
    match model.certify(t_max) {
        Ok(()) => tally.le(0.0, 0.0, String::new),
        Err((t, m)) => tally.le(m, model.declared_c(), || {
            format!("{:?}, kappa = {}, t = {t}: E[(t - tau)^2] = {m} > C = {}", model.kind(), model.kappa(), model.declared_c())
        }),
    }
    tally.finish()
}

/// Monte Carlo check `|E[sample] - target| <= bound + k SE`.
pub fn check_bias<S>(property: &str, target: &DVector<f64>, bound: f64, k_se: f64, samples: usize, mut sampler: S) -> Result<CheckReport>
where
    S: FnMut() -> Result<DVector<f64>>,
{
    if samples < 2 {
        return Err(Error::invalid("bias check needs at least 2 samples"));
    }
    let mut acc = MomentAccumulator::new(target.len());
    for _ in 0..samples {
        acc.push(&sampler()?);
    }
    let mc = acc.finish();
    let mut tally = Tally::new("estimators", property);
    let deviation = (&mc.mean - target).norm();
    tally.le(deviation, bound + k_se * mc.standard_error, || {
        format!(
            "mean {} vs target {}, bound {bound:e}, SE {:e}, {samples} samples",
            fmt_vec(&mc.mean),
            fmt_vec(target),
            mc.standard_error
        )
    });
    Ok(tally.finish())
}

/// Bias of `source` for every agent of `suite` at the anchor and `points`
/// sampled locations, against `source.bias_bound(t)` with 5 SE slack.
pub fn check_source_bias(source: &GradientSource, suite: &ObjectiveSuite, t: u64, points: usize, samples: usize, seed: u64) -> Result<CheckReport> {
    let mut rng = stream_rng(seed, Stream::Check, 400, t);
    let mut locations = vec![suite.domain().anchor()];
    locations.extend((0..points).map(|_| random_member(suite.domain(), &mut rng)));
    let mut merged = Tally::new("estimators", &format!("{}-bias", source.kind_name()));
    for x in &locations {
        for i in 0..suite.agents() {
            let truth = suite.local_grad(i, x)?;
            let report = check_bias("bias", &truth, source.bias_bound(t), 5.0, samples, || {
                source.estimate_local(suite, i, x, t, &mut rng)
            })?;
            let r = &mut merged.report;
            r.cases += report.cases;
            r.violations += report.violations;
            r.worst_excess = r.worst_excess.max(report.worst_excess);
            if r.counterexample.is_none() {
                r.counterexample = report.counterexample.map(|c| format!("agent {i}, x = {}: {c}", fmt_vec(x)));
            }
        }
    }
    Ok(merged.finish())
}

/// `f(x) = sum_j x_j^4`.
#[derive(Debug, Clone, Copy)]
pub struct Quartic {
    pub dim: usize,
}

impl SmoothFunction for Quartic {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        x.iter().map(|v| v.powi(4)).sum()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        x.map(|v| 4.0 * v.powi(3))
    }
}

/// Gaussian two-point estimate of `x^4` at `x = 1` with `u = 0.1`; its mean
/// is `4 + 12 u^2 = 4.12` exactly. Checked within 3 SE.
pub fn check_quartic_mean(samples: usize, seed: u64) -> Result<CheckReport> {
    let f = Quartic { dim: 1 };
    let x = DVector::from_element(1, 1.0);
    let u = 0.1;
    let mut rng = stream_rng(seed, Stream::Check, 500, 0);
    check_bias("gaussian-two-point-quartic-mean", &DVector::from_element(1, 4.12), 0.0, 3.0, samples, || {
        let z = gaussian(1, 1.0, &mut rng);
        Ok(two_point(&f, &x, u, &z, 1.0))
    })
}

fn check_estimators(opts: &CheckOptions) -> Result<Vec<CheckReport>> {
    let domain = FeasibleSet::cube(3, -1.0, 1.0)?;
    let suite = ObjectiveSuite::sine_quadratic(3, 3, 1.0, 0.5, 2.0, opts.seed, domain)?;
    let smoothing = SmoothingSchedule::Constant { u: 0.1 };
    let kinds = [
        EstimatorKind::Exact,
        EstimatorKind::AdditiveNoise { sigma: 1.0 },
        EstimatorKind::GaussianTwoPoint { smoothing: smoothing.clone() },
        EstimatorKind::SphereTwoPoint { smoothing },
    ];
    let mut out = vec![check_quartic_mean(opts.count(1_000_000), opts.seed)?];
    for kind in kinds {
        let source = GradientSource::for_suite(kind, &suite)?;
        out.push(check_source_bias(&source, &suite, 0, 2, opts.count(20_000), opts.seed)?);
    }
    Ok(out)
}

fn small_quadratic(agents: usize, seed: u64) -> Result<ObjectiveSuite> {
    let domain = FeasibleSet::cube(4, -1.0, 1.0)?;
    let spec = QuadraticSpec {
        agents,
        dim: 4,
        mu: 0.5,
        l: 4.0,
        rank: 4,
        heterogeneity: 1.0,
        seed,
    };
    ObjectiveSuite::quadratic(spec, None, domain)
}

fn small_run(opts: &CheckOptions, mode: DelayMode, horizon: u64) -> Result<RunConfig> {
    let suite = small_quadratic(4, opts.seed)?;
    let source = GradientSource::for_suite(EstimatorKind::AdditiveNoise { sigma: 1.0 }, &suite)?;
    let x0 = suite.domain().anchor();
    Ok(RunConfig {
        set: suite.domain().clone(),
        suite: Arc::new(suite),
        source,
        delay: DelayModel::new(DelayKind::UniformScaled { d_max: 8 }, Kappa::ratio(1, 2)?)?,
        delay_mode: mode,
        step: StepSizeSchedule::power(0.1, 0.5)?,
        horizon,
        x0,
        seed: opts.seed,
    })
}

/// `|sum g_i|^2 <= n sum |g_i|^2` on random vectors and at every engine step.
fn check_aggregation(opts: &CheckOptions) -> Result<Vec<CheckReport>> {
    let mut random = Tally::new("aggregation", "sum-bound-random");
    let mut rng = stream_rng(opts.seed, Stream::Check, 600, 0);
    for _ in 0..opts.count(100_000) {
        let n = rng.random_range(1..8);
        let d = rng.random_range(1..6);
        let gs: Vec<DVector<f64>> = (0..n).map(|_| gaussian(d, 1.0, &mut rng)).collect();
        let sum = crate::engine::aggregate(&gs)?;
        let rhs = n as f64 * gs.iter().map(|g| g.norm_squared()).sum::<f64>();
        random.le(sum.norm_squared(), rhs * (1.0 + 1e-9), || format!("n = {n}, d = {d}"));
    }
    let mut engine = Tally::new("aggregation", "sum-bound-engine");
    for mode in [DelayMode::Direct, DelayMode::Buffered] {
        let config = small_run(opts, mode, opts.count(2_000) as u64)?;
        let seeds: Vec<u64> = (0..4).map(|k| opts.seed + k).collect();
        for traj in run_ensemble(&config, &seeds) {
            let traj = traj.map_err(|f| f.error)?;
            let diag = &traj.diagnostics;
            let r = &mut engine.report;
            r.cases += diag.sum_bound_checks;
            r.violations += diag.sum_bound_violations;
            r.worst_excess = r.worst_excess.max(diag.sum_bound_max_ratio - 1.0);
            if diag.sum_bound_violations > 0 && r.counterexample.is_none() {
                r.counterexample = Some(format!("{mode:?} mode, seed {}", traj.seed));
            }
        }
    }
    Ok(vec![random.finish(), engine.finish()])
}

/// Ensemble mean of `|x(t) - x(tau_i(t))|^2` against `n^2 G C p(t)^2` with 5 SE slack.
pub fn check_staleness(opts: &CheckOptions) -> Result<Vec<CheckReport>> {
    let horizon = 400;
    let config = small_run(opts, DelayMode::Direct, horizon)?;
    let mut rng = stream_rng(opts.seed, Stream::Check, 700, 0);
    let g = config.source.certify_second_moment(&config.suite, 2_000, 1, &mut rng)?;
    let c = config.delay.declared_c();
    let n = config.suite.agents() as f64;
    let seeds: Vec<u64> = (0..opts.count(200).max(2) as u64).map(|k| opts.seed.wrapping_add(k)).collect();
    let trajs = run_ensemble(&config, &seeds)
        .into_iter()
        .map(|r| r.map_err(|f| f.error))
        .collect::<Result<Vec<_>>>()?;
    let mut tally = Tally::new("staleness", "drift-bound");
    for t in [10u64, 25, 50, 100, 200, 399] {
        let per_seed: Vec<f64> = trajs
            .iter()
            .map(|traj| {
                let rec = &traj.records[t as usize];
                let total: f64 = rec
                    .stamps
                    .iter()
                    .map(|&tau| (&rec.x - &traj.records[tau as usize].x).norm_squared())
                    .sum();
                total / rec.stamps.len() as f64
            })
            .collect();
        let m = per_seed.len() as f64;
        let mean = per_seed.iter().sum::<f64>() / m;
        let var = per_seed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
        let p = config.step.p(config.delay.kappa(), t);
        let bound = n * n * g * c * p * p;
        tally.le(mean, bound + 5.0 * (var / m).sqrt(), || format!("t = {t}, G = {g:e}, C = {c}"));
    }
    Ok(vec![tally.finish()])
}

/// Simplex projection against support enumeration for `d <= 5`.
pub fn check_simplex_oracle(cases: usize, seed: u64) -> Result<CheckReport> {
    let mut tally = Tally::new("oracle", "simplex-vs-enumeration");
    let mut rng = stream_rng(seed, Stream::Check, 800, 0);
    for k in 0..cases {
        let d = 1 + k % MAX_ENUMERATION_DIM;
        let set = FeasibleSet::simplex(d)?;
        let y = gaussian(d, 1.5, &mut rng);
        let fast = set.project(&y)?;
        let slow = brute_force_project(&set, &y, OracleMode::Enumeration)?;
        tally.le((&fast - &slow).norm(), 1e-8, || format!("y = {}", fmt_vec(&y)));
    }
    Ok(tally.finish())
}
