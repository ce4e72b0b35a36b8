//! Closed convex feasible sets and their exact Euclidean projections.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};

/// Default feasibility tolerance, in Euclidean distance.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// A nonempty closed convex subset of R^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SetDoc", into = "SetDoc")]
pub enum FeasibleSet {
    WholeSpace { dim: usize },
    /// Componentwise bounds; infinite entries are allowed.
    Box { lower: DVector<f64>, upper: DVector<f64> },
    L2Ball { center: DVector<f64>, radius: f64 },
    /// The probability simplex `{x >= 0, sum x = 1}`.
    Simplex { dim: usize },
}

impl FeasibleSet {
    pub fn whole_space(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("whole-space dimension must be >= 1"));
        }
        Ok(FeasibleSet::WholeSpace { dim })
    }

    pub fn boxed(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::invalid("box dimension must be >= 1"));
        }
        for (j, (lo, hi)) in lower.iter().zip(upper.iter()).enumerate() {
            if lo.is_nan() || hi.is_nan() {
                return Err(Error::invalid(format!("box bound {j} is NaN")));
            }
            if lo > hi {
                return Err(Error::invalid(format!(
                    "box requires lower <= upper, violated at coordinate {j} ({lo} > {hi})"
                )));
            }
            if *lo == f64::INFINITY || *hi == f64::NEG_INFINITY {
                return Err(Error::invalid(format!("box coordinate {j} is empty")));
            }
        }
        Ok(FeasibleSet::Box { lower, upper })
    }

    /// Box `[lower, upper]^dim`.
    pub fn cube(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::boxed(
            DVector::from_element(dim, lower),
            DVector::from_element(dim, upper),
        )
    }

    pub fn l2_ball(center: DVector<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::invalid("ball dimension must be >= 1"));
        }
        check_finite(center.as_slice(), "ball center")?;
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::invalid(format!("ball radius must be > 0, got {radius}")));
        }
        Ok(FeasibleSet::L2Ball { center, radius })
    }

    pub fn simplex(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("simplex dimension must be >= 1"));
        }
        Ok(FeasibleSet::Simplex { dim })
    }

    pub fn dim(&self) -> usize {
        match self {
            FeasibleSet::WholeSpace { dim } | FeasibleSet::Simplex { dim } => *dim,
            FeasibleSet::Box { lower, .. } => lower.len(),
            FeasibleSet::L2Ball { center, .. } => center.len(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            FeasibleSet::WholeSpace { .. } => "whole-space",
            FeasibleSet::Box { .. } => "box",
            FeasibleSet::L2Ball { .. } => "l2ball",
            FeasibleSet::Simplex { .. } => "simplex",
        }
    }

    pub fn is_bounded(&self) -> bool {
        match self {
            FeasibleSet::WholeSpace { .. } => false,
            FeasibleSet::Box { lower, upper } => lower
                .iter()
                .chain(upper.iter())
                .all(|v| v.is_finite()),
            FeasibleSet::L2Ball { .. } | FeasibleSet::Simplex { .. } => true,
        }
    }

    fn check_input(&self, y: &DVector<f64>, what: &str) -> Result<()> {
        check_dim(self.dim(), y.len())?;
        check_finite(y.as_slice(), what)
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_input(y, "projection input")?;
        Ok(self.project_unchecked(y))
    }

    /// Projection without input validation; `y` must be finite and of dimension `dim()`.
    pub fn project_unchecked(&self, y: &DVector<f64>) -> DVector<f64> {
        match self {
            FeasibleSet::WholeSpace { .. } => y.clone(),
            FeasibleSet::Box { lower, upper } => {
                DVector::from_iterator(y.len(), (0..y.len()).map(|j| y[j].clamp(lower[j], upper[j])))
            }
            FeasibleSet::L2Ball { center, radius } => {
                let offset = y - center;
                let norm = offset.norm();
                if norm <= *radius {
                    y.clone()
                } else {
                    center + offset * (*radius / norm)
                }
            }
            FeasibleSet::Simplex { .. } => project_simplex(y),
        }
    }

    /// Euclidean distance from `x` to the set.
    pub fn distance(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        if x.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite {
                what: "membership query".into(),
            });
        }
        if x.iter().any(|v| v.is_infinite()) {
            return Ok(f64::INFINITY);
        }
        Ok((x - self.project_unchecked(x)).norm())
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> Result<bool> {
        Ok(self.distance(x)? <= tol)
    }

    /// Random point of a bounded set; `None` when the set is unbounded.
    ///
    /// Box and ball draws are uniform; simplex draws are flat Dirichlet.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<DVector<f64>> {
        if !self.is_bounded() {
            return None;
        }
        let d = self.dim();
        let point = match self {
            FeasibleSet::WholeSpace { .. } => unreachable!(),
            FeasibleSet::Box { lower, upper } => DVector::from_iterator(
                d,
                (0..d).map(|j| lower[j] + (upper[j] - lower[j]) * rng.random::<f64>()),
            ),
            FeasibleSet::L2Ball { center, radius } => {
                let dir = unit_sphere(d, rng);
                let scale = radius * rng.random::<f64>().powf(1.0 / d as f64);
                center + dir * scale
            }
            FeasibleSet::Simplex { .. } => {
                let e = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(Exp1)));
                let total = e.sum();
                e / total
            }
        };
        Some(point)
    }

    /// A length scale for the set, used to generate test points around it.
    pub fn scale(&self) -> f64 {
        match self {
            FeasibleSet::WholeSpace { .. } => 1.0,
            FeasibleSet::Box { lower, upper } => {
                let widths: Vec<f64> = lower
                    .iter()
                    .zip(upper.iter())
                    .map(|(lo, hi)| hi - lo)
                    .filter(|w| w.is_finite())
                    .collect();
                widths.into_iter().fold(0.0_f64, f64::max).max(1.0)
            }
            FeasibleSet::L2Ball { radius, .. } => *radius,
            FeasibleSet::Simplex { .. } => 1.0,
        }
    }

    /// A canonical interior point: the ball center, the simplex barycenter, the
    /// box midpoint (one unit inside a half-infinite side), or the origin.
    pub fn anchor(&self) -> DVector<f64> {
        let d = self.dim();
        match self {
            FeasibleSet::WholeSpace { .. } => DVector::zeros(d),
            FeasibleSet::L2Ball { center, .. } => center.clone(),
            FeasibleSet::Simplex { .. } => DVector::from_element(d, 1.0 / d as f64),
            FeasibleSet::Box { lower, upper } => DVector::from_iterator(
                d,
                lower.iter().zip(upper.iter()).map(|(&lo, &hi)| {
                    match (lo.is_finite(), hi.is_finite()) {
                        (true, true) => 0.5 * (lo + hi),
                        (true, false) => lo + 1.0,
                        (false, true) => hi - 1.0,
                        (false, false) => 0.0,
                    }
                }),
            ),
        }
    }

    /// True when `x` lies in the set with a margin of at least `margin`
    /// to the boundary. The simplex has empty interior in R^d.
    pub fn contains_interior(&self, x: &DVector<f64>, margin: f64) -> bool {
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self {
            FeasibleSet::WholeSpace { .. } => true,
            FeasibleSet::Box { lower, upper } => x
                .iter()
                .enumerate()
                .all(|(j, v)| *v - lower[j] >= margin && upper[j] - *v >= margin),
            FeasibleSet::L2Ball { center, radius } => (x - center).norm() + margin <= *radius,
            FeasibleSet::Simplex { .. } => false,
        }
    }
}

/// Uniform direction on the unit sphere in R^d.
pub fn unit_sphere<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let norm = z.norm();
        if norm > 1e-300 {
            return z / norm;
        }
    }
}

/// Sort-and-threshold projection onto the probability simplex.
fn project_simplex(y: &DVector<f64>) -> DVector<f64> {
    let mut sorted: Vec<f64> = y.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    y.map(|v| (v - theta).max(0.0))
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum SetDoc {
    WholeSpace {
        dim: usize,
    },
    Box {
        /// `null` entries mean an infinite bound.
        lower: Vec<Option<f64>>,
        upper: Vec<Option<f64>>,
    },
    #[serde(rename = "l2ball")]
    L2Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Simplex {
        dim: usize,
    },
}

impl TryFrom<SetDoc> for FeasibleSet {
    type Error = Error;

    fn try_from(doc: SetDoc) -> Result<Self> {
        let bound = |v: &[Option<f64>], inf: f64| {
            DVector::from_iterator(v.len(), v.iter().map(|b| b.unwrap_or(inf)))
        };
        match doc {
            SetDoc::WholeSpace { dim } => FeasibleSet::whole_space(dim),
            SetDoc::Box { lower, upper } => FeasibleSet::boxed(
                bound(&lower, f64::NEG_INFINITY),
                bound(&upper, f64::INFINITY),
            ),
            SetDoc::L2Ball { center, radius } => {
                FeasibleSet::l2_ball(DVector::from_vec(center), radius)
            }
            SetDoc::Simplex { dim } => FeasibleSet::simplex(dim),
        }
    }
}

impl From<FeasibleSet> for SetDoc {
    fn from(set: FeasibleSet) -> Self {
        let bound = |v: &DVector<f64>| {
            v.iter()
                .map(|b| if b.is_finite() { Some(*b) } else { None })
                .collect()
        };
        match set {
            FeasibleSet::WholeSpace { dim } => SetDoc::WholeSpace { dim },
            FeasibleSet::Box { lower, upper } => SetDoc::Box {
                lower: bound(&lower),
                upper: bound(&upper),
            },
            FeasibleSet::L2Ball { center, radius } => SetDoc::L2Ball {
                center: center.iter().copied().collect(),
                radius,
            },
            FeasibleSet::Simplex { dim } => SetDoc::Simplex { dim },
        }
    }
}
