//! Agent-side stochastic gradient estimators `g_i(x, xi)` with a declared bias
//! bound `q(t)` and a second-moment certificate `G`.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::objectives::{ObjectiveSuite, SmoothFunction};
use crate::schedules::{BiasSchedule, SmoothingSchedule};
use crate::sets::unit_sphere;
use crate::streams::{SimRng, Stream};

/// Multiplier applied to sampled second-moment estimates.
pub const SAFETY_FACTOR: f64 = 1.1;

#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorKind {
    Exact,
    /// Gradient plus isotropic Gaussian noise `N(0, sigma^2 I)`.
    AdditiveNoise { sigma: f64 },
    /// Two-point estimator with Gaussian directions `z ~ N(0, I)`.
    GaussianTwoPoint { smoothing: SmoothingSchedule },
    /// Two-point estimator with uniform unit directions, scaled by `d`.
    SphereTwoPoint { smoothing: SmoothingSchedule },
}

/// Config form of an estimator. Smoothing radii follow `u0 / (t+1)^beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SourceSpec {
    Exact,
    AdditiveNoise { sigma: f64 },
    GaussianTwoPoint { u0: f64, beta: f64 },
    SphereTwoPoint { u0: f64, beta: f64 },
}

impl SourceSpec {
    pub fn kind(&self) -> Result<EstimatorKind> {
        let smoothing = |u0: f64, beta: f64| {
            let s = SmoothingSchedule::Power { u0, beta };
            s.validate().map(|_| s)
        };
        Ok(match self {
            SourceSpec::Exact => EstimatorKind::Exact,
            SourceSpec::AdditiveNoise { sigma } => EstimatorKind::AdditiveNoise { sigma: *sigma },
            SourceSpec::GaussianTwoPoint { u0, beta } => EstimatorKind::GaussianTwoPoint {
                smoothing: smoothing(*u0, *beta)?,
            },
            SourceSpec::SphereTwoPoint { u0, beta } => EstimatorKind::SphereTwoPoint {
                smoothing: smoothing(*u0, *beta)?,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientSource {
    kind: EstimatorKind,
    bias: BiasSchedule,
    second_moment_g: Option<f64>,
}

impl GradientSource {
    /// `smoothness_l` and `dim` fix the declared bias schedule of the
    /// zeroth-order kinds: `L sqrt(d) u(t)` (Gaussian) and `L u(t)` (sphere).
    pub fn new(kind: EstimatorKind, smoothness_l: f64, dim: usize) -> Result<Self> {
        let bias = match &kind {
            EstimatorKind::Exact => BiasSchedule::Zero,
            EstimatorKind::AdditiveNoise { sigma } => {
                if !(sigma.is_finite() && *sigma >= 0.0) {
                    return Err(Error::invalid(format!("noise sigma must be >= 0, got {sigma}")));
                }
                BiasSchedule::Zero
            }
            EstimatorKind::GaussianTwoPoint { smoothing } => {
                smoothing.validate()?;
                smoothing.to_bias(smoothness_l * (dim as f64).sqrt())
            }
            EstimatorKind::SphereTwoPoint { smoothing } => {
                smoothing.validate()?;
                smoothing.to_bias(smoothness_l)
            }
        };
        Ok(GradientSource {
            kind,
            bias,
            second_moment_g: None,
        })
    }

    pub fn for_suite(kind: EstimatorKind, suite: &ObjectiveSuite) -> Result<Self> {
        Self::new(kind, suite.smoothness(), suite.dim())
    }

    pub fn with_second_moment(mut self, g: f64) -> Result<Self> {
        if !(g.is_finite() && g > 0.0) {
            return Err(Error::invalid(format!("second-moment bound G must be > 0, got {g}")));
        }
        self.second_moment_g = Some(g);
        Ok(self)
    }

    pub fn kind(&self) -> &EstimatorKind {
        &self.kind
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            EstimatorKind::Exact => "exact",
            EstimatorKind::AdditiveNoise { .. } => "additive-noise",
            EstimatorKind::GaussianTwoPoint { .. } => "gaussian-two-point",
            EstimatorKind::SphereTwoPoint { .. } => "sphere-two-point",
        }
    }

    pub fn bias_schedule(&self) -> &BiasSchedule {
        &self.bias
    }

    /// Declared bias bound `q(t)`.
    pub fn bias_bound(&self, t: u64) -> f64 {
        self.bias.q(t)
    }

    pub fn second_moment(&self) -> Option<f64> {
        self.second_moment_g
    }

    /// The random stream this estimator draws from.
    pub fn stream(&self) -> Stream {
        match self.kind {
            EstimatorKind::GaussianTwoPoint { .. } | EstimatorKind::SphereTwoPoint { .. } => Stream::Direction,
            _ => Stream::Noise,
        }
    }

    /// One stochastic gradient sample of `f` at `x`. `agent` is used for error context only.
    pub fn estimate<F, R>(&self, f: &F, agent: usize, x: &DVector<f64>, t: u64, rng: &mut R) -> Result<DVector<f64>>
    where
        F: SmoothFunction + ?Sized,
        R: Rng + ?Sized,
    {
        check_dim(f.dim(), x.len())?;
        let d = x.len();
        let g = match &self.kind {
            EstimatorKind::Exact => f.gradient(x),
            EstimatorKind::AdditiveNoise { sigma } => {
                let noise = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
                f.gradient(x) + noise * *sigma
            }
            EstimatorKind::GaussianTwoPoint { smoothing } => {
                let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
                two_point(f, x, smoothing.u(t), &z, 1.0)
            }
            EstimatorKind::SphereTwoPoint { smoothing } => {
                let z = unit_sphere(d, rng);
                two_point(f, x, smoothing.u(t), &z, d as f64)
            }
        };
        if g.iter().all(|v| v.is_finite()) {
            Ok(g)
        } else {
            Err(Error::Numerical {
                agent,
                t,
                message: format!("{} estimate is not finite", self.kind_name()),
            })
        }
    }

    /// Sample of agent `i`'s local function in `suite`.
    pub fn estimate_local<R: Rng + ?Sized>(
        &self,
        suite: &ObjectiveSuite,
        i: usize,
        x: &DVector<f64>,
        t: u64,
        rng: &mut R,
    ) -> Result<DVector<f64>> {
        if i >= suite.agents() {
            return Err(Error::invalid(format!("agent index {i} out of range")));
        }
        self.estimate(suite.local(i), i, x, t, rng)
    }

    /// Monte Carlo estimate of `E[g | x]` from `samples` draws.
    pub fn conditional_mean<F, R>(
        &self,
        f: &F,
        x: &DVector<f64>,
        t: u64,
        samples: usize,
        rng: &mut R,
    ) -> Result<MonteCarloMean>
    where
        F: SmoothFunction + ?Sized,
        R: Rng + ?Sized,
    {
        if samples < 2 {
            return Err(Error::invalid("conditional_mean needs at least 2 samples"));
        }
        let mut acc = MomentAccumulator::new(x.len());
        for _ in 0..samples {
            acc.push(&self.estimate(f, 0, x, t, rng)?);
        }
        Ok(acc.finish())
    }

    /// Certifies `G >= E|g_i(x)|^2` over a bounded domain by sampling
    /// `points` locations, with a safety factor of 1.1.
    ///
    /// Exact and additive-noise sources use `(sup |grad f_i| + sigma sqrt(d))^2`;
    /// two-point sources use Monte Carlo second moments with
    /// `samples_per_point` draws at `u(0)` and at a late-time radius.
    pub fn certify_second_moment(
        &self,
        suite: &ObjectiveSuite,
        points: usize,
        samples_per_point: usize,
        rng: &mut SimRng,
    ) -> Result<f64> {
        let g = match &self.kind {
            EstimatorKind::Exact => suite.sampled_gradient_sup(points, rng)?.powi(2),
            EstimatorKind::AdditiveNoise { sigma } => {
                let sup = suite.sampled_gradient_sup(points, rng)?;
                (sup + sigma * (suite.dim() as f64).sqrt()).powi(2)
            }
            _ => {
                let domain = suite.domain();
                if !domain.is_bounded() {
                    return Err(Error::invalid(
                        "second-moment certification needs a bounded feasible set; supply G explicitly",
                    ));
                }
                let mut worst = 0.0_f64;
                let mut locations = vec![domain.anchor()];
                locations.extend((0..points).map(|_| domain.sample(rng).expect("bounded")));
                for x in &locations {
                    for f in suite.locals() {
                        for t in [0, 1_000_000] {
                            let mut total = 0.0;
                            for _ in 0..samples_per_point {
                                total += self.estimate(f, 0, x, t, rng)?.norm_squared();
                            }
                            worst = worst.max(total / samples_per_point as f64);
                        }
                    }
                }
                worst
            }
        };
        Ok(SAFETY_FACTOR * g.max(f64::MIN_POSITIVE))
    }
}

/// `scale * (f(x + u z) - f(x - u z)) / (2u) * z`.
pub fn two_point<F: SmoothFunction + ?Sized>(f: &F, x: &DVector<f64>, u: f64, z: &DVector<f64>, scale: f64) -> DVector<f64> {
    let step = z * u;
    let diff = f.value(&(x + &step)) - f.value(&(x - &step));
    z * (scale * diff / (2.0 * u))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloMean {
    pub mean: DVector<f64>,
    /// Per-coordinate standard errors.
    pub coordinate_se: DVector<f64>,
    /// Root-sum-square of the coordinate standard errors: the scale of
    /// `|mean - E g|` under the normal approximation.
    pub standard_error: f64,
    pub samples: usize,
}

/// Welford accumulator over vector samples.
#[derive(Debug, Clone)]
pub struct MomentAccumulator {
    count: usize,
    mean: DVector<f64>,
    m2: DVector<f64>,
}

impl MomentAccumulator {
    pub fn new(dim: usize) -> Self {
        MomentAccumulator {
            count: 0,
            mean: DVector::zeros(dim),
            m2: DVector::zeros(dim),
        }
    }

    pub fn push(&mut self, sample: &DVector<f64>) {
        self.count += 1;
        let delta = sample - &self.mean;
        self.mean += &delta / self.count as f64;
        let delta2 = sample - &self.mean;
        self.m2 += delta.component_mul(&delta2);
    }

    pub fn finish(self) -> MonteCarloMean {
        let n = self.count as f64;
        let coordinate_se = if self.count > 1 {
            self.m2.map(|m| (m / (n - 1.0) / n).sqrt())
        } else {
            DVector::from_element(self.mean.len(), f64::INFINITY)
        };
        MonteCarloMean {
            standard_error: coordinate_se.norm(),
            mean: self.mean,
            coordinate_se,
            samples: self.count,
        }
    }
}
