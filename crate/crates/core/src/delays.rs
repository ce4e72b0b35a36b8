//! Stale timestamps `tau_i(t)` under the scaled-delay contract
//! `ceil(kappa t) <= tau_i(t) <= t` with bounded second moment of `t - tau_i(t)`.
//!
//! Two modes exist. Direct sampling draws every delay independently across
//! agents and time. Buffered mode replays the server/agent protocol: each agent
//! sends one message per tick, messages travel with a random transit delay, and
//! the server uses the newest message that has arrived.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedules::Kappa;

#[derive(Debug, Clone, PartialEq)]
pub enum DelayKind {
    Zero,
    Fixed { delay: u64 },
    /// Uniform on `0..=min(d_max, floor((1 - kappa) t))`.
    UniformScaled { d_max: u64 },
    /// Geometric with the given mean. Draws beyond the scaled window are
    /// clamped to its edge when `cap_by_kappa`, otherwise the distribution is
    /// conditioned on the window.
    GeometricScaled { mean: f64, cap_by_kappa: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DelayMode {
    Direct,
    Buffered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayModel {
    kind: DelayKind,
    kappa: Kappa,
    second_moment_c: f64,
}

impl DelayModel {
    /// Model with the tightest valid certificate `C = sup_t E[(t - tau)^2]`.
    pub fn new(kind: DelayKind, kappa: Kappa) -> Result<Self> {
        if let DelayKind::GeometricScaled { mean, .. } = kind {
            if !(mean.is_finite() && mean > 0.0) {
                return Err(Error::invalid(format!("geometric delay mean must be > 0, got {mean}")));
            }
        }
        let c = stationary_second_moment(&kind);
        Ok(DelayModel {
            kind,
            kappa,
            second_moment_c: c,
        })
    }

    /// Replaces the declared certificate `C` without checking it; see [`DelayModel::certify`].
    pub fn with_declared_c(mut self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::invalid(format!("delay certificate C must be >= 0, got {c}")));
        }
        self.second_moment_c = c;
        Ok(self)
    }

    pub fn kind(&self) -> &DelayKind {
        &self.kind
    }

    pub fn kappa(&self) -> Kappa {
        self.kappa
    }

    pub fn declared_c(&self) -> f64 {
        self.second_moment_c
    }

    /// Largest delay that can occur at `t`.
    pub fn support_max(&self, t: u64) -> u64 {
        let window = self.kappa.max_delay(t);
        match self.kind {
            DelayKind::Zero => 0,
            DelayKind::Fixed { delay } => delay.min(window),
            DelayKind::UniformScaled { d_max } => d_max.min(window),
            DelayKind::GeometricScaled { .. } => window,
        }
    }

    /// Upper bound on the delay over all `t`, if one exists.
    pub fn max_delay_bound(&self) -> Option<u64> {
        match self.kind {
            DelayKind::Zero => Some(0),
            DelayKind::Fixed { delay } => Some(delay),
            DelayKind::UniformScaled { d_max } => Some(d_max),
            DelayKind::GeometricScaled { .. } => None,
        }
    }

    /// Probability of delay `k` at time `t`.
    pub fn delay_pmf(&self, t: u64, k: u64) -> f64 {
        let w = self.support_max(t);
        if k > w {
            return 0.0;
        }
        match self.kind {
            DelayKind::Zero => 1.0,
            DelayKind::Fixed { .. } => {
                if k == w {
                    1.0
                } else {
                    0.0
                }
            }
            DelayKind::UniformScaled { .. } => 1.0 / (w + 1) as f64,
            DelayKind::GeometricScaled { mean, cap_by_kappa } => {
                let stay = mean / (1.0 + mean);
                let p = 1.0 - stay;
                if cap_by_kappa {
                    if k < w {
                        p * stay.powf(k as f64)
                    } else {
                        stay.powf(w as f64)
                    }
                } else {
                    p * stay.powf(k as f64) / (1.0 - stay.powf((w + 1) as f64))
                }
            }
        }
    }

    /// Exact `E[(t - tau)^2]` at time `t`, by enumeration over the finite support.
    pub fn exact_delay_second_moment(&self, t: u64) -> f64 {
        (0..=self.support_max(t))
            .map(|k| (k * k) as f64 * self.delay_pmf(t, k))
            .sum()
    }

    /// Checks `exact_delay_second_moment(t) <= C` for every `t <= t_max`.
    /// On failure returns the first offending `t` and its exact moment.
    pub fn certify(&self, t_max: u64) -> std::result::Result<(), (u64, f64)> {
        for t in 0..=t_max {
            let m = self.exact_delay_second_moment(t);
            if m > self.second_moment_c * (1.0 + 1e-12) + 1e-300 {
                return Err((t, m));
            }
            // Bounded kinds are stationary once the window covers the support.
            if let Some(bound) = self.max_delay_bound() {
                if self.kappa.max_delay(t) >= bound {
                    break;
                }
            }
        }
        Ok(())
    }

    /// One delay draw at time `t`.
    pub fn sample_delay<R: Rng + ?Sized>(&self, t: u64, rng: &mut R) -> u64 {
        let w = self.support_max(t);
        if w == 0 {
            return 0;
        }
        match self.kind {
            DelayKind::Zero => 0,
            DelayKind::Fixed { .. } => w,
            DelayKind::UniformScaled { .. } => rng.random_range(0..=w),
            DelayKind::GeometricScaled { mean, cap_by_kappa } => {
                let stay = mean / (1.0 + mean);
                let u: f64 = rng.random();
                if cap_by_kappa {
                    geometric_inverse(stay, u).min(w)
                } else {
                    // Inverse CDF of the geometric law conditioned on k <= w.
                    let mass = 1.0 - stay.powf((w + 1) as f64);
                    geometric_inverse(stay, u * mass).min(w)
                }
            }
        }
    }

    /// Direct-sampling stale timestamp `tau_i(t) = t - delay`.
    pub fn sample_tau<R: Rng + ?Sized>(&self, t: u64, rng: &mut R) -> u64 {
        t - self.sample_delay(t, rng)
    }

    /// Transit delay of a buffered message: the untruncated delay law.
    pub fn sample_transit<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self.kind {
            DelayKind::Zero => 0,
            DelayKind::Fixed { delay } => delay,
            DelayKind::UniformScaled { d_max } => rng.random_range(0..=d_max),
            DelayKind::GeometricScaled { mean, .. } => geometric_inverse(mean / (1.0 + mean), rng.random()),
        }
    }
}

/// Smallest `k` with `P(K <= k) >= u` for `P(K = k) = (1 - stay) stay^k`.
fn geometric_inverse(stay: f64, u: f64) -> u64 {
    if u <= 0.0 {
        return 0;
    }
    // P(K > k) = stay^(k+1); K = ceil(ln(1-u)/ln(stay)) - 1
    let k = ((1.0 - u).ln() / stay.ln()).ceil() - 1.0;
    if k.is_finite() && k > 0.0 {
        k.min(u64::MAX as f64 / 2.0) as u64
    } else {
        0
    }
}

fn stationary_second_moment(kind: &DelayKind) -> f64 {
    match *kind {
        DelayKind::Zero => 0.0,
        DelayKind::Fixed { delay } => (delay * delay) as f64,
        DelayKind::UniformScaled { d_max } => {
            let d = d_max as f64;
            d * (2.0 * d + 1.0) / 6.0
        }
        DelayKind::GeometricScaled { mean, .. } => mean + 2.0 * mean * mean,
    }
}

/// Per-agent message buffers of the buffered protocol.
///
/// A message stamped `s` arrives at `s + 1 + transit`. A message whose stamp
/// is at most `min(ceil(kappa t), t - 1)` is force-delivered at `t`, which
/// keeps `tau_i(t) >= min(ceil(kappa t), t - 1)` for `t >= 1`.
#[derive(Debug, Clone)]
pub struct BufferState {
    kappa: Kappa,
    agents: Vec<AgentBuffer>,
}

#[derive(Debug, Clone)]
struct AgentBuffer {
    latest: i64,
    /// `(stamp, arrival)`, stamps strictly above `latest`.
    pending: Vec<(u64, u64)>,
}

impl BufferState {
    pub fn new(agents: usize, kappa: Kappa) -> Self {
        BufferState {
            kappa,
            agents: vec![
                AgentBuffer {
                    latest: -1,
                    pending: Vec::new(),
                };
                agents
            ],
        }
    }

    /// Agent `i` sends the gradient stamped `stamp`; it becomes deliverable at
    /// `stamp + 1 + transit`.
    pub fn send(&mut self, i: usize, stamp: u64, transit: u64) {
        let buf = &mut self.agents[i];
        if (stamp as i64) > buf.latest {
            buf.pending.push((stamp, stamp + 1 + transit));
        }
    }

    /// Newest stamp of agent `i` delivered by `t`, or -1 if none has arrived.
    /// Calls must use non-decreasing `t`.
    pub fn buffered_tau(&mut self, i: usize, t: u64) -> i64 {
        let forced = if t == 0 {
            None
        } else {
            Some(self.kappa.ceil_mul(t).min(t - 1))
        };
        let buf = &mut self.agents[i];
        let mut latest = buf.latest;
        for &(stamp, arrival) in &buf.pending {
            if arrival <= t || forced.is_some_and(|f| stamp <= f) {
                latest = latest.max(stamp as i64);
            }
        }
        buf.latest = latest;
        buf.pending.retain(|&(stamp, _)| (stamp as i64) > latest);
        latest
    }

    pub fn pending(&self, i: usize) -> usize {
        self.agents[i].pending.len()
    }
}

/// Config form of a delay model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelaySpec {
    pub kind: DelayKindName,
    pub kappa: Kappa,
    #[serde(default)]
    pub params: DelayParams,
    #[serde(default = "default_mode")]
    pub mode: DelayMode,
    /// Declared second-moment certificate; defaults to the exact supremum.
    #[serde(default, rename = "C", skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

fn default_mode() -> DelayMode {
    DelayMode::Direct
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DelayKindName {
    Zero,
    Fixed,
    UniformScaled,
    GeometricScaled,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayParams {
    #[serde(default, rename = "D", skip_serializing_if = "Option::is_none")]
    pub d: Option<u64>,
    #[serde(default, rename = "D_max", skip_serializing_if = "Option::is_none")]
    pub d_max: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap_by_kappa: Option<bool>,
}

impl DelaySpec {
    pub fn build(&self) -> Result<DelayModel> {
        let p = &self.params;
        let unexpected = |name: &str| Error::Config(format!("delay.params.{name} does not apply to delay kind {:?}", self.kind));
        let need = |v: Option<u64>, name: &str| v.ok_or_else(|| Error::Config(format!("delay.params.{name} is required")));
        let kind = match self.kind {
            DelayKindName::Zero => {
                if p != &DelayParams::default() {
                    return Err(Error::Config("delay kind zero takes no params".into()));
                }
                DelayKind::Zero
            }
            DelayKindName::Fixed => {
                if p.d_max.is_some() || p.mean.is_some() || p.cap_by_kappa.is_some() {
                    return Err(unexpected("D_max/mean/cap_by_kappa"));
                }
                DelayKind::Fixed { delay: need(p.d, "D")? }
            }
            DelayKindName::UniformScaled => {
                if p.d.is_some() || p.mean.is_some() || p.cap_by_kappa.is_some() {
                    return Err(unexpected("D/mean/cap_by_kappa"));
                }
                DelayKind::UniformScaled {
                    d_max: need(p.d_max, "D_max")?,
                }
            }
            DelayKindName::GeometricScaled => {
                if p.d.is_some() || p.d_max.is_some() {
                    return Err(unexpected("D/D_max"));
                }
                DelayKind::GeometricScaled {
                    mean: p.mean.ok_or_else(|| Error::Config("delay.params.mean is required".into()))?,
                    cap_by_kappa: p.cap_by_kappa.unwrap_or(true),
                }
            }
        };
        let model = DelayModel::new(kind, self.kappa)?;
        match self.c {
            Some(c) => model.with_declared_c(c),
            None => Ok(model),
        }
    }

    /// Fills defaulted params so the spec echoes every constant in use.
    pub fn normalized(mut self) -> Self {
        if self.kind == DelayKindName::GeometricScaled && self.params.cap_by_kappa.is_none() {
            self.params.cap_by_kappa = Some(true);
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streams::SimRng;
    use rand::SeedableRng;

    fn half() -> Kappa {
        Kappa::new(0.5).unwrap()
    }

    #[test]
    fn t_zero_is_always_zero() {
        let mut rng = SimRng::seed_from_u64(0);
        for kind in [
            DelayKind::Zero,
            DelayKind::Fixed { delay: 4 },
            DelayKind::UniformScaled { d_max: 10 },
            DelayKind::GeometricScaled { mean: 3.0, cap_by_kappa: false },
        ] {
            let m = DelayModel::new(kind, half()).unwrap();
            assert_eq!(m.sample_tau(0, &mut rng), 0);
        }
    }

    #[test]
    fn uniform_scaled_window() {
        let m = DelayModel::new(DelayKind::UniformScaled { d_max: 10 }, half()).unwrap();
        assert_eq!(m.support_max(10), 5);
        for k in 0..=5 {
            assert!((m.delay_pmf(10, k) - 1.0 / 6.0).abs() < 1e-15);
        }
        assert_eq!(m.delay_pmf(10, 6), 0.0);
        let mut rng = SimRng::seed_from_u64(1);
        let mut counts = [0usize; 6];
        let draws = 60_000;
        for _ in 0..draws {
            let tau = m.sample_tau(10, &mut rng);
            assert!((5..=10).contains(&tau));
            counts[(tau - 5) as usize] += 1;
        }
        let p = 1.0 / 6.0;
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        for c in counts {
            assert!((c as f64 / draws as f64 - p).abs() < 5.0 * se);
        }
    }

    #[test]
    fn fixed_delay() {
        let m = DelayModel::new(DelayKind::Fixed { delay: 3 }, half()).unwrap();
        let mut rng = SimRng::seed_from_u64(0);
        assert_eq!(m.sample_tau(100, &mut rng), 97);
        for t in 6..50 {
            assert_eq!(m.exact_delay_second_moment(t), 9.0);
        }
        assert_eq!(m.exact_delay_second_moment(4), 4.0);
        assert_eq!(m.declared_c(), 9.0);
    }

    #[test]
    fn second_moment_enumeration() {
        // uniform over {0, 1, 2}
        let m = DelayModel::new(DelayKind::UniformScaled { d_max: 2 }, half()).unwrap();
        assert!((m.exact_delay_second_moment(100) - 5.0 / 3.0).abs() < 1e-15);
        assert!((m.declared_c() - 5.0 / 3.0).abs() < 1e-15);
        let z = DelayModel::new(DelayKind::Zero, half()).unwrap();
        assert_eq!(z.exact_delay_second_moment(12345), 0.0);
    }

    #[test]
    fn geometric_pmf_sums_to_one_and_is_certified() {
        for cap in [true, false] {
            let m = DelayModel::new(DelayKind::GeometricScaled { mean: 2.5, cap_by_kappa: cap }, half()).unwrap();
            for t in [0, 1, 2, 7, 40, 3000] {
                let total: f64 = (0..=m.support_max(t)).map(|k| m.delay_pmf(t, k)).sum();
                assert!((total - 1.0).abs() < 1e-12, "cap={cap} t={t} total={total}");
            }
            m.certify(2000).unwrap();
        }
    }

    #[test]
    fn geometric_sampling_matches_pmf() {
        let m = DelayModel::new(DelayKind::GeometricScaled { mean: 2.0, cap_by_kappa: false }, half()).unwrap();
        let t = 8;
        let mut rng = SimRng::seed_from_u64(9);
        let draws = 200_000;
        let mut counts = [0usize; 5];
        for _ in 0..draws {
            counts[m.sample_delay(t, &mut rng) as usize] += 1;
        }
        for (k, c) in counts.iter().enumerate() {
            let p = m.delay_pmf(t, k as u64);
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            assert!((*c as f64 / draws as f64 - p).abs() < 5.0 * se, "k={k}");
        }
    }

    #[test]
    fn misdeclared_c_is_caught() {
        let m = DelayModel::new(DelayKind::UniformScaled { d_max: 10 }, half())
            .unwrap()
            .with_declared_c(10.0)
            .unwrap();
        let (t, moment) = m.certify(10_000).unwrap_err();
        assert!(moment > 10.0);
        // uniform on 0..=6 has second moment 13 > 10; 0..=5 has 55/6 < 10
        assert_eq!(t, 12);
    }

    #[test]
    fn buffered_bootstrap_and_latest() {
        let mut buf = BufferState::new(2, half());
        assert_eq!(buf.buffered_tau(0, 0), -1);
        buf.send(1, 2, 0);
        buf.send(1, 5, 0);
        buf.send(1, 6, 100);
        assert_eq!(buf.buffered_tau(1, 7), 5);
        assert_eq!(buf.pending(1), 1);
    }

    #[test]
    fn buffered_zero_transit_lags_one_tick() {
        let mut buf = BufferState::new(1, half());
        for t in 0..50u64 {
            buf.send(0, t, 0);
            let tau = buf.buffered_tau(0, t);
            assert_eq!(tau, t as i64 - 1);
        }
    }

    #[test]
    fn buffered_deadline_and_monotonicity() {
        let m = DelayModel::new(DelayKind::GeometricScaled { mean: 50.0, cap_by_kappa: true }, half()).unwrap();
        let mut rng = SimRng::seed_from_u64(4);
        let mut buf = BufferState::new(3, half());
        let mut last = [-1i64; 3];
        for t in 0..5000u64 {
            for (i, prev) in last.iter_mut().enumerate() {
                buf.send(i, t, m.sample_transit(&mut rng));
                let tau = buf.buffered_tau(i, t);
                assert!(tau >= *prev);
                assert!(tau < t as i64 || t == 0);
                if t >= 1 {
                    let floor = half().ceil_mul(t).min(t - 1) as i64;
                    assert!(tau >= floor, "t={t} tau={tau}");
                }
                *prev = tau;
            }
        }
    }

    #[test]
    fn spec_parsing() {
        let spec: DelaySpec = serde_json::from_str(
            r#"{"kind":"uniform-scaled","kappa":0.5,"params":{"D_max":10},"mode":"direct"}"#,
        )
        .unwrap();
        let model = spec.build().unwrap();
        assert_eq!(model.kind(), &DelayKind::UniformScaled { d_max: 10 });
        assert!(serde_json::from_str::<DelaySpec>(r#"{"kind":"fixed","kappa":1.5,"params":{"D":1}}"#).is_err());
        let missing: DelaySpec = serde_json::from_str(r#"{"kind":"fixed","kappa":0.5}"#).unwrap();
        assert!(missing.build().is_err());
        let extra: DelaySpec = serde_json::from_str(r#"{"kind":"zero","kappa":0.5,"params":{"D":1}}"#).unwrap();
        assert!(extra.build().is_err());
    }
}
