//! Sum-decomposable test objectives `f(x) = sum_i f_i(x)` with certified
//! smoothness and curvature constants and, where available, a known minimizer.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::sets::{FeasibleSet, FEASIBILITY_TOL};
use crate::streams::{stream_rng, SimRng, Stream};

/// A continuously differentiable function that can be evaluated anywhere in R^d.
pub trait SmoothFunction: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum LocalFunction {
    /// `0.5 x'Ax + b'x + offset`
    Quadratic {
        hessian: DMatrix<f64>,
        linear: DVector<f64>,
        offset: f64,
    },
    /// Radial Huber loss around `reference`: quadratic inside `threshold`,
    /// linear with slope `threshold` outside.
    Huber {
        reference: DVector<f64>,
        threshold: f64,
    },
    /// `0.5 w |x - center|^2 + a sum_j sin(omega x_j)`
    SineQuadratic {
        amplitude: f64,
        frequency: f64,
        quad_weight: f64,
        center: DVector<f64>,
    },
}

impl LocalFunction {
    pub fn quadratic(hessian: DMatrix<f64>, linear: DVector<f64>) -> Result<Self> {
        Self::quadratic_with_offset(hessian, linear, 0.0)
    }

    pub fn quadratic_with_offset(hessian: DMatrix<f64>, linear: DVector<f64>, offset: f64) -> Result<Self> {
        let d = linear.len();
        if hessian.nrows() != d || hessian.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: hessian.nrows(),
            });
        }
        let asym = (&hessian - hessian.transpose()).amax();
        if asym > 1e-12 * hessian.amax().max(1.0) {
            return Err(Error::invalid("quadratic Hessian must be symmetric"));
        }
        check_finite(hessian.as_slice(), "quadratic Hessian")?;
        check_finite(linear.as_slice(), "quadratic linear term")?;
        Ok(LocalFunction::Quadratic {
            hessian,
            linear,
            offset,
        })
    }

    pub fn huber(reference: DVector<f64>, threshold: f64) -> Result<Self> {
        if !(threshold.is_finite() && threshold > 0.0) {
            return Err(Error::invalid(format!("huber threshold must be > 0, got {threshold}")));
        }
        check_finite(reference.as_slice(), "huber reference")?;
        Ok(LocalFunction::Huber {
            reference,
            threshold,
        })
    }

    pub fn sine_quadratic(amplitude: f64, frequency: f64, quad_weight: f64, center: DVector<f64>) -> Result<Self> {
        check_finite(&[amplitude, frequency, quad_weight], "sine-quadratic parameters")?;
        check_finite(center.as_slice(), "sine-quadratic center")?;
        if quad_weight < 0.0 {
            return Err(Error::invalid("sine-quadratic quad_weight must be >= 0"));
        }
        Ok(LocalFunction::SineQuadratic {
            amplitude,
            frequency,
            quad_weight,
            center,
        })
    }

    /// A Lipschitz constant of the gradient on all of R^d.
    pub fn smoothness(&self) -> f64 {
        match self {
            LocalFunction::Quadratic { hessian, .. } => spectral_norm(hessian),
            LocalFunction::Huber { .. } => 1.0,
            LocalFunction::SineQuadratic {
                amplitude,
                frequency,
                quad_weight,
                ..
            } => quad_weight + amplitude.abs() * frequency * frequency,
        }
    }
}

impl SmoothFunction for LocalFunction {
    fn dim(&self) -> usize {
        match self {
            LocalFunction::Quadratic { linear, .. } => linear.len(),
            LocalFunction::Huber { reference, .. } => reference.len(),
            LocalFunction::SineQuadratic { center, .. } => center.len(),
        }
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        match self {
            LocalFunction::Quadratic {
                hessian,
                linear,
                offset,
            } => 0.5 * x.dot(&(hessian * x)) + linear.dot(x) + offset,
            LocalFunction::Huber {
                reference,
                threshold,
            } => {
                let r = (x - reference).norm();
                if r <= *threshold {
                    0.5 * r * r
                } else {
                    threshold * r - 0.5 * threshold * threshold
                }
            }
            LocalFunction::SineQuadratic {
                amplitude,
                frequency,
                quad_weight,
                center,
            } => {
                0.5 * quad_weight * (x - center).norm_squared()
                    + amplitude * x.iter().map(|v| (frequency * v).sin()).sum::<f64>()
            }
        }
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            LocalFunction::Quadratic { hessian, linear, .. } => hessian * x + linear,
            LocalFunction::Huber {
                reference,
                threshold,
            } => {
                let r = x - reference;
                let norm = r.norm();
                if norm <= *threshold {
                    r
                } else {
                    r * (threshold / norm)
                }
            }
            LocalFunction::SineQuadratic {
                amplitude,
                frequency,
                quad_weight,
                center,
            } => (x - center) * *quad_weight + x.map(|v| amplitude * frequency * (frequency * v).cos()),
        }
    }
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvexityClass {
    Nonconvex,
    Convex,
    StronglyConvex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub x_star: DVector<f64>,
    pub f_star: f64,
}

/// `f = sum_i f_i` over a feasible set, with certified constants.
#[derive(Debug, Clone)]
pub struct ObjectiveSuite {
    locals: Vec<LocalFunction>,
    domain: FeasibleSet,
    smoothness_l: f64,
    strong_convexity_mu: f64,
    class: ConvexityClass,
    optimum: Option<Optimum>,
}

/// Construction parameters for the built-in suite families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SuiteSpec {
    /// Quadratics whose sum has spectrum spread over `[mu, L]`. With `rank < d`
    /// the remaining eigenvalues are zero and the sum is merely convex.
    Quadratic {
        n: usize,
        d: usize,
        mu: f64,
        #[serde(rename = "L")]
        l: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rank: Option<usize>,
        /// Minimizer of the sum; defaults to the set's anchor point.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
        #[serde(default = "default_heterogeneity")]
        heterogeneity: f64,
        seed: u64,
    },
    Huber {
        n: usize,
        d: usize,
        threshold: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reference: Option<Vec<f64>>,
    },
    SineQuadratic {
        n: usize,
        d: usize,
        quad_weight: f64,
        amplitude: f64,
        frequency: f64,
        seed: u64,
    },
}

fn default_heterogeneity() -> f64 {
    1.0
}

impl SuiteSpec {
    pub fn agents(&self) -> usize {
        match self {
            SuiteSpec::Quadratic { n, .. } | SuiteSpec::Huber { n, .. } | SuiteSpec::SineQuadratic { n, .. } => *n,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SuiteSpec::Quadratic { d, .. } | SuiteSpec::Huber { d, .. } | SuiteSpec::SineQuadratic { d, .. } => *d,
        }
    }

    pub fn build(&self, domain: &FeasibleSet) -> Result<ObjectiveSuite> {
        match self {
            SuiteSpec::Quadratic {
                n,
                d,
                mu,
                l,
                rank,
                center,
                heterogeneity,
                seed,
            } => {
                let center = center.as_ref().map(|c| DVector::from_column_slice(c));
                ObjectiveSuite::quadratic(
                    QuadraticSpec {
                        agents: *n,
                        dim: *d,
                        mu: *mu,
                        l: *l,
                        rank: rank.unwrap_or(*d),
                        heterogeneity: *heterogeneity,
                        seed: *seed,
                    },
                    center,
                    domain.clone(),
                )
            }
            SuiteSpec::Huber {
                n,
                d,
                threshold,
                reference,
            } => {
                let reference = match reference {
                    Some(r) => DVector::from_column_slice(r),
                    None => DVector::zeros(*d),
                };
                ObjectiveSuite::huber(*n, reference, *threshold, domain.clone())
            }
            SuiteSpec::SineQuadratic {
                n,
                d,
                quad_weight,
                amplitude,
                frequency,
                seed,
            } => ObjectiveSuite::sine_quadratic(*n, *d, *quad_weight, *amplitude, *frequency, *seed, domain.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadraticSpec {
    pub agents: usize,
    pub dim: usize,
    pub mu: f64,
    pub l: f64,
    pub rank: usize,
    /// Scale of the per-agent linear terms that cancel in the sum.
    pub heterogeneity: f64,
    pub seed: u64,
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with sign fix).
fn random_orthogonal(d: usize, rng: &mut SimRng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

fn gaussian_vector(d: usize, rng: &mut SimRng) -> DVector<f64> {
    DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

impl ObjectiveSuite {
    /// Builds a suite from explicit local functions and declared constants.
    ///
    /// Each `f_i` must satisfy the declared `smoothness_l` globally; this is
    /// checked against the analytic constant of each local function.
    pub fn from_parts(
        locals: Vec<LocalFunction>,
        domain: FeasibleSet,
        smoothness_l: f64,
        strong_convexity_mu: f64,
        class: ConvexityClass,
        optimum: Option<Optimum>,
    ) -> Result<Self> {
        if locals.is_empty() {
            return Err(Error::invalid("a suite needs at least one agent"));
        }
        let d = domain.dim();
        for f in &locals {
            check_dim(d, f.dim())?;
            let li = f.smoothness();
            if li > smoothness_l * (1.0 + 1e-9) {
                return Err(Error::invalid(format!(
                    "local function has smoothness {li} above the declared L = {smoothness_l}"
                )));
            }
        }
        if !(smoothness_l.is_finite() && smoothness_l > 0.0) {
            return Err(Error::invalid(format!("L must be > 0, got {smoothness_l}")));
        }
        if !(strong_convexity_mu >= 0.0 && strong_convexity_mu <= smoothness_l * locals.len() as f64) {
            return Err(Error::invalid(format!("mu = {strong_convexity_mu} is out of range")));
        }
        if (class == ConvexityClass::StronglyConvex) != (strong_convexity_mu > 0.0) {
            return Err(Error::invalid("strongly-convex class requires mu > 0 and vice versa"));
        }
        if let Some(opt) = &optimum {
            if !domain.contains(&opt.x_star, FEASIBILITY_TOL)? {
                return Err(Error::invalid("declared optimum lies outside the feasible set"));
            }
        }
        Ok(ObjectiveSuite {
            locals,
            domain,
            smoothness_l,
            strong_convexity_mu,
            class,
            optimum,
        })
    }

    /// Quadratic suite whose global Hessian has eigenvalues spaced evenly over
    /// `[mu, L]` (top `rank` of them; the rest zero), rotated by a random
    /// orthogonal matrix. The Hessian is split across agents as `H/n` plus
    /// zero-sum symmetric perturbations, and the linear terms place the
    /// minimizer of the sum at `center` with `f* = 0`.
    pub fn quadratic(spec: QuadraticSpec, center: Option<DVector<f64>>, domain: FeasibleSet) -> Result<Self> {
        let QuadraticSpec {
            agents: n,
            dim: d,
            mu,
            l,
            rank,
            heterogeneity,
            seed,
        } = spec;
        check_dim(domain.dim(), d)?;
        if n == 0 {
            return Err(Error::invalid("n must be >= 1"));
        }
        if rank == 0 || rank > d {
            return Err(Error::invalid(format!("rank must lie in [1, {d}], got {rank}")));
        }
        if !(mu > 0.0 && l >= mu && l.is_finite()) {
            return Err(Error::invalid(format!("spectrum bounds need 0 < mu <= L, got [{mu}, {l}]")));
        }
        if !(heterogeneity >= 0.0 && heterogeneity.is_finite()) {
            return Err(Error::invalid("heterogeneity must be >= 0"));
        }
        let center = center.unwrap_or_else(|| domain.anchor());
        check_dim(d, center.len())?;
        check_finite(center.as_slice(), "quadratic center")?;

        let mut rng = stream_rng(seed, Stream::Suite, 0, 0);
        let spectrum = DVector::from_iterator(
            d,
            (0..d).map(|k| {
                if k >= rank {
                    0.0
                } else if rank == 1 {
                    l
                } else {
                    l - (l - mu) * k as f64 / (rank - 1) as f64
                }
            }),
        );
        let q = random_orthogonal(d, &mut rng);
        let hessian = &q * DMatrix::from_diagonal(&spectrum) * q.transpose();
        let hessian = (&hessian + hessian.transpose()) * 0.5;

        // Zero-sum perturbations with |R_i - mean R| <= 2 keep |A_i| <= L/n + 2 eps <= L.
        let eps = if n > 1 { 0.25 * l * (1.0 - 1.0 / n as f64) } else { 0.0 };
        let raw: Vec<DMatrix<f64>> = (0..n)
            .map(|_| {
                let qi = random_orthogonal(d, &mut rng);
                let diag = DVector::from_iterator(d, (0..d).map(|_| rng.random_range(-1.0..=1.0)));
                let r = &qi * DMatrix::from_diagonal(&diag) * qi.transpose();
                (&r + r.transpose()) * 0.5
            })
            .collect();
        let mean_raw = raw.iter().fold(DMatrix::zeros(d, d), |acc, r| acc + r) / n as f64;
        let mut hessians: Vec<DMatrix<f64>> = raw
            .iter()
            .map(|r| &hessian / n as f64 + (r - &mean_raw) * eps)
            .collect();
        let partial = hessians[..n - 1].iter().fold(DMatrix::zeros(d, d), |acc, a| acc + a);
        hessians[n - 1] = &hessian - partial;

        let target_linear = -(&hessian * &center);
        let raw_lin: Vec<DVector<f64>> = (0..n).map(|_| gaussian_vector(d, &mut rng)).collect();
        let mean_lin = raw_lin.iter().fold(DVector::zeros(d), |acc, w| acc + w) / n as f64;
        let mut linears: Vec<DVector<f64>> = raw_lin
            .iter()
            .map(|w| &target_linear / n as f64 + (w - &mean_lin) * heterogeneity)
            .collect();
        let partial = linears[..n - 1].iter().fold(DVector::zeros(d), |acc, b| acc + b);
        linears[n - 1] = &target_linear - partial;

        let offset = 0.5 * center.dot(&(&hessian * &center)) / n as f64;
        let locals = hessians
            .into_iter()
            .zip(linears)
            .map(|(a, b)| LocalFunction::quadratic_with_offset(a, b, offset))
            .collect::<Result<Vec<_>>>()?;

        let (class, mu_declared) = if rank == d {
            (ConvexityClass::StronglyConvex, mu)
        } else {
            (ConvexityClass::Convex, 0.0)
        };
        let optimum = domain.contains(&center, FEASIBILITY_TOL)?.then(|| Optimum {
            x_star: center.clone(),
            f_star: 0.0,
        });
        if optimum.is_none() {
            return Err(Error::invalid("quadratic center must lie in the feasible set"));
        }
        Self::from_parts(locals, domain, l, mu_declared, class, optimum)
    }

    /// All agents share the Huber loss around `reference`.
    pub fn huber(n: usize, reference: DVector<f64>, threshold: f64, domain: FeasibleSet) -> Result<Self> {
        check_dim(domain.dim(), reference.len())?;
        let local = LocalFunction::huber(reference.clone(), threshold)?;
        let optimum = domain.contains(&reference, FEASIBILITY_TOL)?.then_some(Optimum {
            x_star: reference,
            f_star: 0.0,
        });
        Self::from_parts(vec![local; n], domain, 1.0, 0.0, ConvexityClass::Convex, optimum)
    }

    /// Quadratic wells at seeded centers plus a shared sinusoidal ripple.
    /// Nonconvex whenever `|amplitude| frequency^2 > quad_weight`.
    pub fn sine_quadratic(
        n: usize,
        d: usize,
        quad_weight: f64,
        amplitude: f64,
        frequency: f64,
        seed: u64,
        domain: FeasibleSet,
    ) -> Result<Self> {
        check_dim(domain.dim(), d)?;
        let mut rng = stream_rng(seed, Stream::Suite, 0, 0);
        let anchor = domain.anchor();
        let locals = (0..n)
            .map(|_| {
                let center = domain
                    .sample(&mut rng)
                    .unwrap_or_else(|| &anchor + gaussian_vector(d, &mut rng));
                LocalFunction::sine_quadratic(amplitude, frequency, quad_weight, center)
            })
            .collect::<Result<Vec<_>>>()?;
        let l = quad_weight + amplitude.abs() * frequency * frequency;
        let class = if amplitude.abs() * frequency * frequency > quad_weight {
            ConvexityClass::Nonconvex
        } else {
            ConvexityClass::Convex
        };
        Self::from_parts(locals, domain, l, 0.0, class, None)
    }

    pub fn agents(&self) -> usize {
        self.locals.len()
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &FeasibleSet {
        &self.domain
    }

    pub fn smoothness(&self) -> f64 {
        self.smoothness_l
    }

    pub fn strong_convexity(&self) -> f64 {
        self.strong_convexity_mu
    }

    pub fn class(&self) -> ConvexityClass {
        self.class
    }

    pub fn local(&self, i: usize) -> &LocalFunction {
        &self.locals[i]
    }

    pub fn locals(&self) -> &[LocalFunction] {
        &self.locals
    }

    fn check_point(&self, x: &DVector<f64>) -> Result<()> {
        check_dim(self.dim(), x.len())?;
        check_finite(x.as_slice(), "objective argument")?;
        let distance = self.domain.distance(x)?;
        if distance > FEASIBILITY_TOL {
            return Err(Error::Infeasible {
                distance,
                tolerance: FEASIBILITY_TOL,
            });
        }
        Ok(())
    }

    fn check_agent(&self, i: usize) -> Result<()> {
        if i >= self.agents() {
            return Err(Error::invalid(format!(
                "agent index {i} out of range for n = {}",
                self.agents()
            )));
        }
        Ok(())
    }

    pub fn local_value(&self, i: usize, x: &DVector<f64>) -> Result<f64> {
        self.check_agent(i)?;
        self.check_point(x)?;
        Ok(self.locals[i].value(x))
    }

    pub fn local_grad(&self, i: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_agent(i)?;
        self.check_point(x)?;
        Ok(self.locals[i].gradient(x))
    }

    pub fn global_value(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_point(x)?;
        Ok(SmoothFunction::value(self, x))
    }

    pub fn global_grad(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_point(x)?;
        Ok(SmoothFunction::gradient(self, x))
    }

    pub fn optimum(&self) -> Option<&Optimum> {
        self.optimum.as_ref()
    }

    /// `max_i sup_{x in S} |grad f_i(x)|`, estimated on `samples` random points
    /// of a bounded domain (plus the anchor point).
    pub fn sampled_gradient_sup(&self, samples: usize, rng: &mut SimRng) -> Result<f64> {
        if !self.domain.is_bounded() {
            return Err(Error::invalid(
                "gradient bounds can only be sampled on a bounded feasible set",
            ));
        }
        let mut sup = 0.0_f64;
        let mut visit = |x: &DVector<f64>| {
            for f in &self.locals {
                sup = sup.max(f.gradient(x).norm());
            }
        };
        visit(&self.domain.anchor());
        for _ in 0..samples {
            let x = self.domain.sample(rng).expect("bounded");
            visit(&x);
        }
        Ok(sup)
    }
}

impl SmoothFunction for ObjectiveSuite {
    fn dim(&self) -> usize {
        self.domain.dim()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.locals.iter().map(|f| f.value(x)).sum()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.locals
            .iter()
            .fold(DVector::zeros(x.len()), |acc, f| acc + f.gradient(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn plane() -> FeasibleSet {
        FeasibleSet::whole_space(2).unwrap()
    }

    fn half_norm_sq(d: usize) -> LocalFunction {
        LocalFunction::quadratic(DMatrix::identity(d, d), DVector::zeros(d)).unwrap()
    }

    #[test]
    fn local_examples() {
        assert_eq!(half_norm_sq(2).value(&v(&[1.0, 1.0])), 1.0);
        assert_eq!(half_norm_sq(2).gradient(&v(&[1.0, 2.0])), v(&[1.0, 2.0]));
        let q = LocalFunction::quadratic(DMatrix::from_diagonal(&v(&[2.0, 0.0])), v(&[0.0, 1.0])).unwrap();
        assert_eq!(q.gradient(&v(&[1.0, 1.0])), v(&[2.0, 1.0]));

        let h = LocalFunction::huber(v(&[0.0]), 1.0).unwrap();
        assert_eq!(h.value(&v(&[0.0])), 0.0);
        assert_eq!(h.gradient(&v(&[3.0])), v(&[1.0]));
        assert_eq!(h.value(&v(&[3.0])), 2.5);

        let s = LocalFunction::sine_quadratic(0.0, 3.0, 1.0, v(&[0.0])).unwrap();
        assert_eq!(s.value(&v(&[2.0])), 2.0);
    }

    #[test]
    fn global_sums() {
        let suite = ObjectiveSuite::from_parts(
            vec![half_norm_sq(2), half_norm_sq(2)],
            plane(),
            1.0,
            2.0,
            ConvexityClass::StronglyConvex,
            None,
        )
        .unwrap();
        assert_eq!(suite.global_value(&v(&[1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(suite.global_grad(&v(&[1.0, 0.0])).unwrap(), v(&[2.0, 0.0]));

        let single =
            ObjectiveSuite::from_parts(vec![half_norm_sq(2)], plane(), 1.0, 1.0, ConvexityClass::StronglyConvex, None)
                .unwrap();
        let x = v(&[0.3, -0.7]);
        assert_eq!(single.global_value(&x).unwrap(), single.local_value(0, &x).unwrap());
        assert_eq!(single.global_grad(&x).unwrap(), single.local_grad(0, &x).unwrap());

        let thirds: Vec<_> = [0.2, 0.3, 0.5]
            .iter()
            .map(|w| LocalFunction::quadratic(DMatrix::identity(2, 2) * *w, DVector::zeros(2)).unwrap())
            .collect();
        let s3 = ObjectiveSuite::from_parts(thirds, plane(), 1.0, 1.0, ConvexityClass::StronglyConvex, None).unwrap();
        assert_eq!(s3.global_grad(&v(&[0.0, 0.0])).unwrap(), v(&[0.0, 0.0]));
    }

    #[test]
    fn rejects_points_outside_domain() {
        let suite = ObjectiveSuite::huber(2, v(&[0.0, 0.0]), 1.0, FeasibleSet::cube(2, -1.0, 1.0).unwrap()).unwrap();
        assert!(matches!(suite.local_value(0, &v(&[2.0, 0.0])), Err(Error::Infeasible { .. })));
        assert!(suite.local_value(5, &v(&[0.0, 0.0])).is_err());
        assert!(suite.global_grad(&v(&[0.0])).is_err());
    }

    #[test]
    fn optimum_examples() {
        let domain = FeasibleSet::cube(3, -2.0, 2.0).unwrap();
        let c = v(&[0.5, -0.25, 1.0]);
        let spec = QuadraticSpec {
            agents: 1,
            dim: 3,
            mu: 1.0,
            l: 1.0,
            rank: 3,
            heterogeneity: 0.0,
            seed: 9,
        };
        let suite = ObjectiveSuite::quadratic(spec, Some(c.clone()), domain.clone()).unwrap();
        let opt = suite.optimum().unwrap();
        assert_eq!(opt.x_star, c);
        assert_eq!(opt.f_star, 0.0);
        assert_abs_diff_eq!(suite.global_value(&c).unwrap(), 0.0, epsilon = 1e-12);
        // mu = L = 1 means f = 0.5 |x - c|^2
        let x = v(&[0.0, 0.0, 0.0]);
        assert_abs_diff_eq!(suite.global_value(&x).unwrap(), 0.5 * c.norm_squared(), epsilon = 1e-12);

        let huber = ObjectiveSuite::huber(3, v(&[0.0, 0.0, 0.0]), 1.0, domain.clone()).unwrap();
        assert_eq!(huber.optimum().unwrap().x_star, v(&[0.0, 0.0, 0.0]));

        let nonconvex = ObjectiveSuite::sine_quadratic(2, 3, 1.0, 0.5, 3.0, 1, domain).unwrap();
        assert!(nonconvex.optimum().is_none());
        assert_eq!(nonconvex.class(), ConvexityClass::Nonconvex);
        assert_eq!(nonconvex.smoothness(), 5.5);
    }

    #[test]
    fn quadratic_suite_constants() {
        let domain = FeasibleSet::cube(10, -5.0, 5.0).unwrap();
        let spec = QuadraticSpec {
            agents: 5,
            dim: 10,
            mu: 1.0,
            l: 10.0,
            rank: 10,
            heterogeneity: 1.0,
            seed: 42,
        };
        let suite = ObjectiveSuite::quadratic(spec, None, domain.clone()).unwrap();
        let total = suite.locals().iter().fold(DMatrix::zeros(10, 10), |acc, f| match f {
            LocalFunction::Quadratic { hessian, .. } => acc + hessian,
            _ => unreachable!(),
        });
        let eig = SymmetricEigen::new(total).eigenvalues;
        assert_abs_diff_eq!(eig.min(), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(eig.max(), 10.0, epsilon = 1e-9);
        for f in suite.locals() {
            assert!(f.smoothness() <= 10.0);
        }
        let x_star = suite.optimum().unwrap().x_star.clone();
        assert_abs_diff_eq!(suite.global_grad(&x_star).unwrap().norm(), 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(suite.global_value(&x_star).unwrap(), 0.0, epsilon = 1e-10);

        let rank5 = ObjectiveSuite::quadratic(QuadraticSpec { rank: 5, ..spec }, None, domain).unwrap();
        assert_eq!(rank5.class(), ConvexityClass::Convex);
        assert_eq!(rank5.strong_convexity(), 0.0);
    }

    #[test]
    fn gradient_sup_needs_bounded_domain() {
        let suite = ObjectiveSuite::huber(1, v(&[0.0, 0.0]), 1.0, plane()).unwrap();
        let mut rng = SimRng::seed_from_u64(0);
        assert!(suite.sampled_gradient_sup(10, &mut rng).is_err());
        let boxed = ObjectiveSuite::huber(1, v(&[0.0, 0.0]), 1.0, FeasibleSet::cube(2, -3.0, 3.0).unwrap()).unwrap();
        let sup = boxed.sampled_gradient_sup(1000, &mut rng).unwrap();
        assert!(sup <= 1.0 + 1e-12 && sup > 0.99, "{sup}");
    }
}
