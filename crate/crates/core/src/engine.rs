//! The delayed projected iteration
//! `x(t+1) = P_S[x(t) - eta(t) sum_i g_i(x(tau_i(t)))]`
//! and its trajectory record.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::analysis::{gradient_mapping, log_spaced_times};
use crate::delays::{BufferState, DelayMode, DelayModel};
use crate::error::{check_dim, check_finite, Error, Result};
use crate::estimators::GradientSource;
use crate::objectives::{ObjectiveSuite, SmoothFunction};
use crate::schedules::StepSizeSchedule;
use crate::sets::{FeasibleSet, FEASIBILITY_TOL};
use crate::streams::{stream_rng, Stream};

/// Runs up to this horizon keep every iterate.
pub const DENSE_LIMIT: u64 = 100_000;
/// Checkpoints per decade for longer runs.
pub const CHECKPOINTS_PER_DECADE: usize = 40;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub suite: Arc<ObjectiveSuite>,
    pub set: FeasibleSet,
    pub source: GradientSource,
    pub delay: DelayModel,
    pub delay_mode: DelayMode,
    pub step: StepSizeSchedule,
    pub horizon: u64,
    pub x0: DVector<f64>,
    pub seed: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        check_dim(self.suite.dim(), self.set.dim())?;
        check_dim(self.set.dim(), self.x0.len())?;
        if &self.set != self.suite.domain() {
            return Err(Error::invalid("the run's feasible set differs from the suite's domain"));
        }
        self.step.validate()?;
        if !self.set.contains(&self.x0, FEASIBILITY_TOL)? {
            return Err(Error::Infeasible {
                distance: self.set.distance(&self.x0)?,
                tolerance: FEASIBILITY_TOL,
            });
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> RunConfig {
        RunConfig { seed, ..self.clone() }
    }
}

/// `g(t) = sum_i g_i`.
pub fn aggregate(estimates: &[DVector<f64>]) -> Result<DVector<f64>> {
    let first = estimates.first().ok_or_else(|| Error::invalid("aggregate needs at least one agent"))?;
    let mut sum = DVector::zeros(first.len());
    for g in estimates {
        check_dim(first.len(), g.len())?;
        sum += g;
    }
    Ok(sum)
}

/// `P_S[x - eta g]`.
pub fn apply_update(set: &FeasibleSet, x: &DVector<f64>, g: &DVector<f64>, eta: f64) -> Result<DVector<f64>> {
    check_dim(set.dim(), x.len())?;
    check_dim(set.dim(), g.len())?;
    let y = x - g * eta;
    check_finite(y.as_slice(), "update step")?;
    Ok(set.project_unchecked(&y))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: u64,
    pub x: DVector<f64>,
    pub eta: f64,
    /// `g(t)`; absent at the final time.
    pub gradient: Option<DVector<f64>>,
    /// `tau_i(t)` per agent, -1 for agents not yet heard from. Empty at the final time.
    pub stamps: Vec<i64>,
    /// Step-weighted average of `x(0..=t)`.
    pub weighted_average: DVector<f64>,
    /// `|h(t)|^2` with the true gradient at `x(t)` and step `eta(t)`.
    pub grad_map_sq: f64,
    /// `(1/(t+1)) sum_{s<=t} |h(s)|^2`.
    pub grad_map_sq_running_mean: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub steps: u64,
    /// Steps checked against `|sum g_i|^2 <= n sum |g_i|^2`.
    pub sum_bound_checks: u64,
    pub sum_bound_violations: u64,
    /// Largest `|sum g_i|^2 / (n sum |g_i|^2)` seen.
    pub sum_bound_max_ratio: f64,
    /// Agent-steps that used a zero estimate because nothing had arrived.
    pub never_heard: u64,
    pub max_staleness: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub seed: u64,
    pub agents: usize,
    pub horizon: u64,
    /// Whether `records[t]` holds time `t` for every `t`.
    pub dense: bool,
    pub records: Vec<StepRecord>,
    pub diagnostics: Diagnostics,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.records.first().map_or(0, |r| r.x.len())
    }

    pub fn times(&self) -> Vec<u64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn record(&self, t: u64) -> Option<&StepRecord> {
        if self.dense {
            self.records.get(t as usize)
        } else {
            self.records.binary_search_by_key(&t, |r| r.t).ok().map(|k| &self.records[k])
        }
    }

    pub fn final_iterate(&self) -> Option<&DVector<f64>> {
        self.records.last().map(|r| &r.x)
    }
}

#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    /// Everything recorded before the failing step.
    pub partial: Trajectory,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "run with seed {} failed after {} steps: {}",
            self.partial.seed, self.partial.diagnostics.steps, self.error
        )
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Per-agent estimate at a stale point, with the randomness key used.
fn stale_estimate(config: &RunConfig, i: usize, tau: u64, x_tau: &DVector<f64>, key_t: u64) -> Result<DVector<f64>> {
    let mut rng = stream_rng(config.seed, config.source.stream(), i as u64, key_t);
    config.source.estimate(config.suite.local(i), i, x_tau, tau, &mut rng)
}

/// Sequential state of one run.
pub struct Simulator {
    config: RunConfig,
    t: u64,
    x: DVector<f64>,
    /// `history[k] = x(base + k)`.
    history: VecDeque<DVector<f64>>,
    base: u64,
    buffer: Option<BufferState>,
    /// Last delivered `(tau, estimate)` per agent in buffered mode.
    cache: Vec<Option<(u64, DVector<f64>)>>,
    weighted_sum: DVector<f64>,
    weight: f64,
    grad_map_sum: f64,
    checkpoints: Option<Vec<u64>>,
    next_checkpoint: usize,
    trajectory: Trajectory,
}

impl Simulator {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let n = config.suite.agents();
        let x = config.x0.clone();
        let dense = config.horizon <= DENSE_LIMIT;
        let checkpoints = (!dense).then(|| {
            let mut ts = vec![0];
            ts.extend(log_spaced_times(1, config.horizon, CHECKPOINTS_PER_DECADE));
            ts
        });
        let buffer = (config.delay_mode == DelayMode::Buffered).then(|| BufferState::new(n, config.delay.kappa()));
        let trajectory = Trajectory {
            seed: config.seed,
            agents: n,
            horizon: config.horizon,
            dense,
            records: Vec::new(),
            diagnostics: Diagnostics::default(),
        };
        Ok(Simulator {
            weighted_sum: DVector::zeros(x.len()),
            history: VecDeque::from([x.clone()]),
            base: 0,
            buffer,
            cache: vec![None; n],
            weight: 0.0,
            grad_map_sum: 0.0,
            checkpoints,
            next_checkpoint: 0,
            trajectory,
            t: 0,
            x,
            config,
        })
    }

    pub fn time(&self) -> u64 {
        self.t
    }

    pub fn iterate(&self) -> &DVector<f64> {
        &self.x
    }

    fn stale_iterate(&self, tau: u64) -> Result<&DVector<f64>> {
        tau.checked_sub(self.base)
            .and_then(|k| self.history.get(k as usize))
            .ok_or_else(|| Error::Invariant(format!("iterate x({tau}) was pruned or not yet computed at t = {}", self.t)))
    }

    fn should_record(&mut self) -> bool {
        match &self.checkpoints {
            None => true,
            Some(ts) => {
                if ts.get(self.next_checkpoint) == Some(&self.t) {
                    self.next_checkpoint += 1;
                    true
                } else {
                    false
                }
            }
        }
    }

    /// Stamps and per-agent estimates used at the current time.
    fn gather(&mut self) -> Result<(Vec<i64>, Vec<DVector<f64>>)> {
        let t = self.t;
        let n = self.config.suite.agents();
        let d = self.x.len();
        let mut stamps = Vec::with_capacity(n);
        let mut estimates = Vec::with_capacity(n);
        for i in 0..n {
            let tau = match self.buffer.as_mut() {
                Some(buffer) => {
                    let mut rng = stream_rng(self.config.seed, Stream::Transit, i as u64, t);
                    let transit = self.config.delay.sample_transit(&mut rng);
                    buffer.send(i, t, transit);
                    buffer.buffered_tau(i, t)
                }
                None => {
                    let mut rng = stream_rng(self.config.seed, Stream::Delay, i as u64, t);
                    self.config.delay.sample_tau(t, &mut rng) as i64
                }
            };
            stamps.push(tau);
            if tau < 0 {
                self.trajectory.diagnostics.never_heard += 1;
                estimates.push(DVector::zeros(d));
                continue;
            }
            let tau = tau as u64;
            let diag = &mut self.trajectory.diagnostics;
            diag.max_staleness = diag.max_staleness.max(t - tau);
            let g = if self.buffer.is_some() {
                match &self.cache[i] {
                    Some((cached, g)) if *cached == tau => g.clone(),
                    _ => {
                        let g = stale_estimate(&self.config, i, tau, self.stale_iterate(tau)?, tau)?;
                        self.cache[i] = Some((tau, g.clone()));
                        g
                    }
                }
            } else {
                stale_estimate(&self.config, i, tau, self.stale_iterate(tau)?, t)?
            };
            estimates.push(g);
        }
        Ok((stamps, estimates))
    }

    fn check_sum_bound(&mut self, estimates: &[DVector<f64>], g: &DVector<f64>) {
        let n = estimates.len() as f64;
        let lhs = g.norm_squared();
        let rhs = n * estimates.iter().map(|e| e.norm_squared()).sum::<f64>();
        let diag = &mut self.trajectory.diagnostics;
        diag.sum_bound_checks += 1;
        if lhs > rhs * (1.0 + 1e-9) + 1e-300 {
            diag.sum_bound_violations += 1;
        }
        if rhs > 0.0 {
            diag.sum_bound_max_ratio = diag.sum_bound_max_ratio.max(lhs / rhs);
        }
    }

    /// Metrics at the current iterate, updating the running sums.
    fn observe(&mut self) -> Result<(f64, f64)> {
        let eta = self.config.step.eta(self.t);
        self.weighted_sum += &self.x * eta;
        self.weight += eta;
        let grad = SmoothFunction::gradient(self.config.suite.as_ref(), &self.x);
        let h = gradient_mapping(&self.config.set, &self.x, &grad, eta)?;
        let h2 = h.norm_squared();
        self.grad_map_sum += h2;
        Ok((h2, self.grad_map_sum / (self.t + 1) as f64))
    }

    fn push_record(&mut self, eta: f64, gradient: Option<DVector<f64>>, stamps: Vec<i64>, h2: f64, running: f64) {
        self.trajectory.records.push(StepRecord {
            t: self.t,
            x: self.x.clone(),
            eta,
            gradient,
            stamps,
            weighted_average: &self.weighted_sum / self.weight,
            grad_map_sq: h2,
            grad_map_sq_running_mean: running,
        });
    }

    /// Advances from `x(t)` to `x(t+1)`.
    pub fn step(&mut self) -> Result<()> {
        let t = self.t;
        let eta = self.config.step.eta(t);
        let (h2, running) = self.observe()?;
        let (stamps, estimates) = self.gather()?;
        let g = aggregate(&estimates)?;
        self.check_sum_bound(&estimates, &g);
        let next = apply_update(&self.config.set, &self.x, &g, eta)?;
        let gap = self.config.set.distance(&next)?;
        if gap > FEASIBILITY_TOL {
            return Err(Error::Invariant(format!("x({}) lies {gap:e} outside the feasible set", t + 1)));
        }
        if self.should_record() {
            self.push_record(eta, Some(g), stamps, h2, running);
        }
        self.x = next;
        self.t += 1;
        self.trajectory.diagnostics.steps += 1;
        self.history.push_back(self.x.clone());
        let keep_from = self.config.delay.kappa().ceil_mul(self.t).min(self.t - 1);
        while self.base < keep_from {
            self.history.pop_front();
            self.base += 1;
        }
        Ok(())
    }

    /// Records the final iterate and returns the trajectory.
    pub fn finish(mut self) -> Result<Trajectory> {
        let eta = self.config.step.eta(self.t);
        let (h2, running) = self.observe()?;
        if self.should_record() || self.trajectory.records.last().is_none_or(|r| r.t != self.t) {
            self.push_record(eta, None, Vec::new(), h2, running);
        }
        Ok(self.trajectory)
    }

    fn into_partial(self) -> Trajectory {
        self.trajectory
    }
}

pub fn run(config: &RunConfig) -> std::result::Result<Trajectory, Box<RunFailure>> {
    let fail = |error, partial| Box::new(RunFailure { error, partial });
    let mut sim = match Simulator::new(config.clone()) {
        Ok(sim) => sim,
        Err(e) => {
            let empty = Trajectory {
                seed: config.seed,
                agents: config.suite.agents(),
                horizon: config.horizon,
                dense: true,
                records: Vec::new(),
                diagnostics: Diagnostics::default(),
            };
            return Err(fail(e, empty));
        }
    };
    while sim.time() < config.horizon {
        if let Err(e) = sim.step() {
            return Err(fail(e, sim.into_partial()));
        }
    }
    sim.finish().map_err(|e| fail(e, Trajectory {
        seed: config.seed,
        agents: config.suite.agents(),
        horizon: config.horizon,
        dense: true,
        records: Vec::new(),
        diagnostics: Diagnostics::default(),
    }))
}

/// Runs every seed concurrently; results come back in seed order.
pub fn run_ensemble(config: &RunConfig, seeds: &[u64]) -> Vec<std::result::Result<Trajectory, Box<RunFailure>>> {
    seeds.par_iter().map(|&seed| run(&config.with_seed(seed))).collect()
}

/// Recomputes `g(t)` from the recorded iterates and stamps of a dense
/// trajectory, using the same randomness keys as the run.
pub fn replay_gradient(config: &RunConfig, traj: &Trajectory, t: u64) -> Result<DVector<f64>> {
    if !traj.dense || t >= traj.horizon {
        return Err(Error::invalid(format!("no replayable step at t = {t}")));
    }
    let rec = &traj.records[t as usize];
    let mut estimates = Vec::with_capacity(rec.stamps.len());
    for (i, &tau) in rec.stamps.iter().enumerate() {
        if tau < 0 {
            estimates.push(DVector::zeros(traj.dim()));
            continue;
        }
        let tau = tau as u64;
        let key = match config.delay_mode {
            DelayMode::Direct => t,
            DelayMode::Buffered => tau,
        };
        estimates.push(stale_estimate(config, i, tau, &traj.records[tau as usize].x, key)?);
    }
    aggregate(&estimates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delays::DelayKind;
    use crate::estimators::EstimatorKind;
    use crate::objectives::{LocalFunction, ObjectiveSuite, QuadraticSpec};
    use crate::schedules::Kappa;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn half_norm_config(set: FeasibleSet, eta: f64, x0: f64, horizon: u64) -> RunConfig {
        let f = LocalFunction::quadratic(DMatrix::identity(1, 1), DVector::zeros(1)).unwrap();
        let suite = ObjectiveSuite::from_parts(vec![f], set.clone(), 1.0, 1.0, crate::objectives::ConvexityClass::StronglyConvex, None).unwrap();
        RunConfig {
            source: GradientSource::for_suite(EstimatorKind::Exact, &suite).unwrap(),
            suite: Arc::new(suite),
            set,
            delay: DelayModel::new(DelayKind::Zero, Kappa::ratio(1, 2).unwrap()).unwrap(),
            delay_mode: DelayMode::Direct,
            step: StepSizeSchedule::constant(eta).unwrap(),
            horizon,
            x0: v(&[x0]),
            seed: 1,
        }
    }

    fn quadratic_config(mode: DelayMode, kind: EstimatorKind, horizon: u64) -> RunConfig {
        let set = FeasibleSet::cube(4, -2.0, 2.0).unwrap();
        let spec = QuadraticSpec {
            agents: 3,
            dim: 4,
            mu: 0.5,
            l: 2.0,
            rank: 4,
            heterogeneity: 1.0,
            seed: 3,
        };
        let suite = ObjectiveSuite::quadratic(spec, Some(v(&[0.3, -0.2, 0.1, 0.5])), set.clone()).unwrap();
        RunConfig {
            source: GradientSource::for_suite(kind, &suite).unwrap(),
            suite: Arc::new(suite),
            delay: DelayModel::new(DelayKind::UniformScaled { d_max: 6 }, Kappa::ratio(1, 2).unwrap()).unwrap(),
            delay_mode: mode,
            step: StepSizeSchedule::power(0.2, 0.5).unwrap(),
            horizon,
            x0: set.anchor(),
            set,
            seed: 42,
        }
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate(&[v(&[1.0, 0.0]), v(&[0.0, 2.0])]).unwrap(), v(&[1.0, 2.0]));
        let sum = aggregate(&[v(&[0.0, 0.0]), v(&[1.0, 1.0]), v(&[1.0, -1.0])]).unwrap();
        assert_eq!(sum, v(&[2.0, 0.0]));
        assert_eq!(aggregate(&[v(&[3.0])]).unwrap(), v(&[3.0]));
        assert!(aggregate(&[v(&[1.0]), v(&[1.0, 2.0])]).is_err());
    }

    #[test]
    fn update_examples() {
        let plane = FeasibleSet::whole_space(2).unwrap();
        let x = v(&[0.0, 0.0]);
        let g = v(&[1.0, 1.0]);
        assert_eq!(apply_update(&plane, &x, &g, 0.5).unwrap(), v(&[-0.5, -0.5]));
        let orthant = FeasibleSet::boxed(x.clone(), v(&[f64::INFINITY, f64::INFINITY])).unwrap();
        assert_eq!(apply_update(&orthant, &x, &g, 0.5).unwrap(), x);
    }

    #[test]
    fn zero_delay_exact_is_gradient_descent() {
        let config = half_norm_config(FeasibleSet::whole_space(1).unwrap(), 0.5, 1.0, 3);
        let traj = run(&config).unwrap();
        let xs: Vec<f64> = traj.records.iter().map(|r| r.x[0]).collect();
        assert_eq!(xs, vec![1.0, 0.5, 0.25, 0.125]);
    }

    #[test]
    fn zero_horizon_keeps_only_start() {
        let config = half_norm_config(FeasibleSet::whole_space(1).unwrap(), 0.5, 1.0, 0);
        let traj = run(&config).unwrap();
        assert_eq!(traj.records.len(), 1);
        assert_eq!(traj.records[0].x, v(&[1.0]));
        assert!(traj.records[0].gradient.is_none());
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let config = half_norm_config(FeasibleSet::cube(1, 0.0, 1.0).unwrap(), 0.5, 2.0, 3);
        assert!(run(&config).is_err());
    }

    #[test]
    fn monotone_descent_without_noise() {
        let mut config = quadratic_config(DelayMode::Direct, EstimatorKind::Exact, 200);
        config.delay = DelayModel::new(DelayKind::Zero, Kappa::ratio(1, 2).unwrap()).unwrap();
        config.step = StepSizeSchedule::constant(0.9 / config.suite.smoothness()).unwrap();
        let traj = run(&config).unwrap();
        let values: Vec<f64> = traj.records.iter().map(|r| config.suite.global_value(&r.x).unwrap()).collect();
        assert!(values.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn recorded_steps_replay_exactly() {
        for mode in [DelayMode::Direct, DelayMode::Buffered] {
            let config = quadratic_config(mode, EstimatorKind::AdditiveNoise { sigma: 0.5 }, 300);
            let traj = run(&config).unwrap();
            assert_eq!(traj, run(&config).unwrap());
            for t in 0..config.horizon {
                let rec = &traj.records[t as usize];
                let g = rec.gradient.as_ref().unwrap();
                assert_eq!(&replay_gradient(&config, &traj, t).unwrap(), g, "mode {mode:?}, t {t}");
                let next = apply_update(&config.set, &rec.x, g, rec.eta).unwrap();
                assert_eq!(next, traj.records[t as usize + 1].x);
                let lo = config.delay.kappa().ceil_mul(t);
                for &tau in &rec.stamps {
                    match mode {
                        DelayMode::Direct => assert!(tau as u64 >= lo && tau as u64 <= t),
                        DelayMode::Buffered => assert!(t == 0 && tau == -1 || tau >= lo.min(t - 1) as i64 && tau < t as i64),
                    }
                }
            }
            assert_eq!(traj.diagnostics.sum_bound_violations, 0);
        }
    }

    #[test]
    fn running_metrics_match_definitions() {
        let config = quadratic_config(DelayMode::Direct, EstimatorKind::Exact, 50);
        let traj = run(&config).unwrap();
        let mut sum = DVector::zeros(4);
        let mut weight = 0.0;
        let mut h_sum = 0.0;
        for rec in &traj.records {
            sum += &rec.x * rec.eta;
            weight += rec.eta;
            assert_abs_diff_eq!(rec.weighted_average, &sum / weight, epsilon = 1e-12);
            let grad = config.suite.global_grad(&rec.x).unwrap();
            let h = gradient_mapping(&config.set, &rec.x, &grad, rec.eta).unwrap();
            h_sum += h.norm_squared();
            assert_abs_diff_eq!(rec.grad_map_sq, h.norm_squared(), epsilon = 1e-12);
            assert_abs_diff_eq!(rec.grad_map_sq_running_mean, h_sum / (rec.t + 1) as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn long_runs_use_log_checkpoints() {
        let config = half_norm_config(FeasibleSet::whole_space(1).unwrap(), 0.1, 1.0, DENSE_LIMIT + 1);
        let traj = run(&config).unwrap();
        assert!(!traj.dense);
        assert_eq!(traj.records.first().unwrap().t, 0);
        assert_eq!(traj.records.last().unwrap().t, DENSE_LIMIT + 1);
        assert!(traj.records.len() < 400);
        assert!(traj.record(1).is_some());
    }

    #[test]
    fn ensemble_preserves_seed_order() {
        let config = quadratic_config(DelayMode::Direct, EstimatorKind::AdditiveNoise { sigma: 1.0 }, 20);
        let out = run_ensemble(&config, &[5, 9, 5]);
        let trajs: Vec<Trajectory> = out.into_iter().map(|r| r.unwrap()).collect();
        assert_eq!(trajs[0].seed, 5);
        assert_eq!(trajs[1].seed, 9);
        assert_eq!(trajs[0], trajs[2]);
        assert_ne!(trajs[0].records, trajs[1].records);
    }
}
