//! Deterministic time-indexed sequences: step size, bias bound, smoothing radius,
//! and the scaled-delay factor `kappa`.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

fn power_decay(scale: f64, exponent: f64, t: u64) -> f64 {
    scale / ((t as f64) + 1.0).powf(exponent)
}

/// Step size sequence `eta(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StepSizeSchedule {
    Constant { eta: f64 },
    /// `eta0 / (t + 1)^alpha`
    Power { eta0: f64, alpha: f64 },
    /// Explicit values; the last entry is held beyond the end of the table.
    Custom { table: Vec<f64> },
}

impl StepSizeSchedule {
    pub fn constant(eta: f64) -> Result<Self> {
        let s = StepSizeSchedule::Constant { eta };
        s.validate()?;
        Ok(s)
    }

    pub fn power(eta0: f64, alpha: f64) -> Result<Self> {
        let s = StepSizeSchedule::Power { eta0, alpha };
        s.validate()?;
        Ok(s)
    }

    pub fn custom(table: Vec<f64>) -> Result<Self> {
        let s = StepSizeSchedule::Custom { table };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StepSizeSchedule::Constant { eta } => {
                if !(eta.is_finite() && *eta > 0.0) {
                    return Err(Error::InvalidSchedule(format!("step size must be > 0, got {eta}")));
                }
            }
            StepSizeSchedule::Power { eta0, alpha } => {
                if !(eta0.is_finite() && *eta0 > 0.0) {
                    return Err(Error::InvalidSchedule(format!("eta0 must be > 0, got {eta0}")));
                }
                if !(*alpha > 0.0 && *alpha <= 1.0) {
                    return Err(Error::InvalidSchedule(format!("alpha must lie in (0, 1], got {alpha}")));
                }
            }
            StepSizeSchedule::Custom { table } => {
                if table.is_empty() {
                    return Err(Error::InvalidSchedule("custom step table is empty".into()));
                }
                if let Some(j) = table.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::InvalidSchedule(format!(
                        "custom step table entry {j} must be positive and finite"
                    )));
                }
                if let Some(j) = table.windows(2).position(|w| w[1] > w[0]) {
                    return Err(Error::InvalidSchedule(format!(
                        "custom step table must be non-increasing, violated at entry {}",
                        j + 1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn eta(&self, t: u64) -> f64 {
        match self {
            StepSizeSchedule::Constant { eta } => *eta,
            StepSizeSchedule::Power { eta0, alpha } => power_decay(*eta0, *alpha, t),
            StepSizeSchedule::Custom { table } => {
                let idx = usize::try_from(t).unwrap_or(usize::MAX).min(table.len() - 1);
                table[idx]
            }
        }
    }

    /// Delayed-step proxy `eta(ceil(kappa * t))`.
    pub fn p(&self, kappa: Kappa, t: u64) -> f64 {
        self.eta(kappa.ceil_mul(t))
    }

    /// `eta(ceil(kappa * horizon)) / eta(horizon)`: a finite-horizon estimate of the
    /// ratio limit the rate guarantees require to be positive.
    pub fn ratio_limit_estimate(&self, kappa: Kappa, horizon: u64) -> f64 {
        self.p(kappa, horizon) / self.eta(horizon)
    }

    /// `sum_{t=0}^{horizon} eta(t)`.
    pub fn cumulative(&self, horizon: u64) -> f64 {
        (0..=horizon).map(|t| self.eta(t)).sum()
    }
}

/// Declared bound `q(t)` on the bias of a gradient estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BiasSchedule {
    Zero,
    Constant { q: f64 },
    /// `q0 / (t + 1)^beta`
    Power { q0: f64, beta: f64 },
}

impl BiasSchedule {
    pub fn validate(&self) -> Result<()> {
        match self {
            BiasSchedule::Zero => Ok(()),
            BiasSchedule::Constant { q } if q.is_finite() && *q >= 0.0 => Ok(()),
            BiasSchedule::Power { q0, beta }
                if q0.is_finite() && *q0 >= 0.0 && beta.is_finite() && *beta >= 0.0 =>
            {
                Ok(())
            }
            other => Err(Error::InvalidSchedule(format!(
                "bias schedule needs q >= 0 and beta >= 0: {other:?}"
            ))),
        }
    }

    pub fn q(&self, t: u64) -> f64 {
        match self {
            BiasSchedule::Zero => 0.0,
            BiasSchedule::Constant { q } => *q,
            BiasSchedule::Power { q0, beta } => power_decay(*q0, *beta, t),
        }
    }

    /// Multiplies the schedule by `factor >= 0`.
    pub fn scaled(&self, factor: f64) -> BiasSchedule {
        match self {
            BiasSchedule::Zero => BiasSchedule::Zero,
            BiasSchedule::Constant { q } => BiasSchedule::Constant { q: q * factor },
            BiasSchedule::Power { q0, beta } => BiasSchedule::Power {
                q0: q0 * factor,
                beta: *beta,
            },
        }
    }
}

/// Smoothing radius `u(t)` of a two-point estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SmoothingSchedule {
    Constant { u: f64 },
    /// `u0 / (t + 1)^beta`
    Power { u0: f64, beta: f64 },
}

impl SmoothingSchedule {
    pub fn validate(&self) -> Result<()> {
        match self {
            SmoothingSchedule::Constant { u } if u.is_finite() && *u > 0.0 => Ok(()),
            SmoothingSchedule::Power { u0, beta }
                if u0.is_finite() && *u0 > 0.0 && beta.is_finite() && *beta >= 0.0 =>
            {
                Ok(())
            }
            other => Err(Error::InvalidSchedule(format!(
                "smoothing radius must be positive (u > 0, beta >= 0): {other:?}"
            ))),
        }
    }

    pub fn u(&self, t: u64) -> f64 {
        match self {
            SmoothingSchedule::Constant { u } => *u,
            SmoothingSchedule::Power { u0, beta } => power_decay(*u0, *beta, t),
        }
    }

    /// The bias schedule `factor * u(t)`.
    pub fn to_bias(&self, factor: f64) -> BiasSchedule {
        match self {
            SmoothingSchedule::Constant { u } => BiasSchedule::Constant { q: factor * u },
            SmoothingSchedule::Power { u0, beta } => BiasSchedule::Power {
                q0: factor * u0,
                beta: *beta,
            },
        }
    }
}

/// Scaled-delay factor `kappa` in (0, 1).
///
/// Held as an exact rational whenever possible so that `ceil(kappa * t)` is
/// exact at lattice points such as `0.07 * 100`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kappa {
    Ratio { num: u64, den: u64 },
    Float(f64),
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Kappa {
    pub fn ratio(num: u64, den: u64) -> Result<Self> {
        if den == 0 || num == 0 || num >= den {
            return Err(kappa_range_error(&format!("{num}/{den}")));
        }
        let g = gcd(num, den);
        Ok(Kappa::Ratio {
            num: num / g,
            den: den / g,
        })
    }

    /// Builds `kappa` from a float. Values whose shortest decimal form has at
    /// most 15 fractional digits become exact rationals with a power-of-ten
    /// denominator.
    pub fn new(value: f64) -> Result<Self> {
        if !(value > 0.0 && value < 1.0) {
            return Err(kappa_range_error(&value.to_string()));
        }
        let text = format!("{value}");
        if let Some(frac) = text.strip_prefix("0.") {
            if frac.len() <= 15 && frac.bytes().all(|b| b.is_ascii_digit()) {
                let num: u64 = frac.parse().expect("digits");
                return Kappa::ratio(num, 10u64.pow(frac.len() as u32));
            }
        }
        Ok(Kappa::Float(value))
    }

    pub fn value(&self) -> f64 {
        match self {
            Kappa::Ratio { num, den } => *num as f64 / *den as f64,
            Kappa::Float(v) => *v,
        }
    }

    /// `ceil(kappa * t)`.
    pub fn ceil_mul(&self, t: u64) -> u64 {
        match self {
            Kappa::Ratio { num, den } => {
                let (num, den) = (*num as u128, *den as u128);
                (num * t as u128).div_ceil(den) as u64
            }
            Kappa::Float(v) => (v * t as f64).ceil() as u64,
        }
    }

    /// `floor((1 - kappa) * t) = t - ceil(kappa * t)`, the largest admissible delay at `t`.
    pub fn max_delay(&self, t: u64) -> u64 {
        t - self.ceil_mul(t)
    }

    fn has_decimal_form(&self) -> bool {
        match self {
            Kappa::Ratio { den, .. } => {
                let mut d = *den;
                while d % 2 == 0 {
                    d /= 2;
                }
                while d % 5 == 0 {
                    d /= 5;
                }
                d == 1
            }
            Kappa::Float(_) => true,
        }
    }
}

fn kappa_range_error(got: &str) -> Error {
    Error::InvalidParameter(format!(
        "kappa must lie in the open interval (0, 1) so that every stale timestamp satisfies tau >= kappa*t; got {got}"
    ))
}

impl fmt::Display for Kappa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kappa::Ratio { num, den } if !self.has_decimal_form() => write!(f, "{num}/{den}"),
            _ => write!(f, "{}", self.value()),
        }
    }
}

impl Serialize for Kappa {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        if self.has_decimal_form() {
            serializer.serialize_f64(self.value())
        } else {
            serializer.serialize_str(&self.to_string())
        }
    }
}

impl<'de> Deserialize<'de> for Kappa {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        let parsed = match Raw::deserialize(deserializer)? {
            Raw::Number(v) => Kappa::new(v),
            Raw::Text(s) => match s.split_once('/') {
                Some((a, b)) => match (a.trim().parse(), b.trim().parse()) {
                    (Ok(a), Ok(b)) => Kappa::ratio(a, b),
                    _ => Err(Error::invalid(format!("kappa ratio '{s}' is not of the form a/b"))),
                },
                None => s
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::invalid(format!("kappa '{s}' is not a number")))
                    .and_then(Kappa::new),
            },
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eta_examples() {
        assert_eq!(StepSizeSchedule::power(1.0, 0.5).unwrap().eta(3), 0.5);
        assert_eq!(StepSizeSchedule::constant(0.01).unwrap().eta(999), 0.01);
        assert_eq!(StepSizeSchedule::power(2.0, 1.0).unwrap().eta(0), 2.0);
    }

    #[test]
    fn p_examples() {
        let s = StepSizeSchedule::power(1.0, 0.5).unwrap();
        let half = Kappa::new(0.5).unwrap();
        assert_relative_eq!(s.p(half, 7), 1.0 / 5f64.sqrt(), max_relative = 1e-15);
        assert_eq!(s.p(half, 0), s.eta(0));
        let c = StepSizeSchedule::constant(0.3).unwrap();
        assert_eq!(c.p(Kappa::new(0.9).unwrap(), 12345), 0.3);
    }

    #[test]
    fn ratio_limit_examples() {
        let quarter = Kappa::new(0.25).unwrap();
        let r = StepSizeSchedule::power(1.0, 0.5).unwrap().ratio_limit_estimate(quarter, 1_000_000);
        assert!((r - 2.0).abs() < 1e-5, "{r}");
        let r = StepSizeSchedule::power(1.0, 1.0)
            .unwrap()
            .ratio_limit_estimate(Kappa::new(0.5).unwrap(), 1_000_000);
        assert!((r - 2.0).abs() < 1e-5, "{r}");
        let r = StepSizeSchedule::constant(0.1).unwrap().ratio_limit_estimate(quarter, 10);
        assert_eq!(r, 1.0);
    }

    #[test]
    fn schedules_are_non_increasing_and_p_dominates() {
        let kappa = Kappa::new(0.3).unwrap();
        for s in [
            StepSizeSchedule::power(3.0, 0.5).unwrap(),
            StepSizeSchedule::power(0.1, 1.0).unwrap(),
            StepSizeSchedule::custom(vec![1.0, 0.5, 0.5, 0.25]).unwrap(),
        ] {
            for t in (0..1_000_000u64).step_by(997).chain(0..100) {
                assert!(s.eta(t + 1) <= s.eta(t));
                assert!(s.p(kappa, t) >= s.eta(t));
            }
        }
    }

    #[test]
    fn invalid_step_schedules() {
        assert!(StepSizeSchedule::constant(0.0).is_err());
        assert!(StepSizeSchedule::power(1.0, 1.5).is_err());
        assert!(StepSizeSchedule::power(1.0, 0.0).is_err());
        assert!(StepSizeSchedule::custom(vec![]).is_err());
        assert!(StepSizeSchedule::custom(vec![0.1, 0.2]).is_err());
    }

    #[test]
    fn bias_and_smoothing() {
        let b = BiasSchedule::Power { q0: 2.0, beta: 0.5 };
        assert_eq!(b.q(3), 1.0);
        assert_eq!(BiasSchedule::Zero.q(10), 0.0);
        let u = SmoothingSchedule::Power { u0: 0.1, beta: 0.5 };
        assert_relative_eq!(u.to_bias(10.0).q(3), 10.0 * u.u(3), max_relative = 1e-15);
        assert!(SmoothingSchedule::Constant { u: 0.0 }.validate().is_err());
        assert!(BiasSchedule::Constant { q: -1.0 }.validate().is_err());
    }

    #[test]
    fn kappa_exact_ceiling() {
        let k = Kappa::new(0.07).unwrap();
        assert_eq!(k, Kappa::Ratio { num: 7, den: 100 });
        // 0.07 * 100.0 rounds above 7 in binary floating point
        assert_eq!(Kappa::Float(0.07).ceil_mul(100), 8);
        assert_eq!(k.ceil_mul(100), 7);
        assert_eq!(Kappa::new(0.5).unwrap().ceil_mul(7), 4);
        assert_eq!(Kappa::new(0.5).unwrap().max_delay(10), 5);
        assert_eq!(Kappa::ratio(1, 3).unwrap().ceil_mul(3), 1);
        assert_eq!(Kappa::Float(0.5).ceil_mul(7), 4);
    }

    #[test]
    fn kappa_range_and_serde() {
        assert!(Kappa::new(1.5).is_err());
        assert!(Kappa::new(0.0).is_err());
        assert!(Kappa::ratio(3, 3).is_err());
        let msg = Kappa::new(1.5).unwrap_err().to_string();
        assert!(msg.contains("(0, 1)"), "{msg}");

        let k: Kappa = serde_json::from_str("0.5").unwrap();
        assert_eq!(serde_json::to_string(&k).unwrap(), "0.5");
        let k: Kappa = serde_json::from_str("\"1/3\"").unwrap();
        assert_eq!(serde_json::to_string(&k).unwrap(), "\"1/3\"");
        let k: Kappa = serde_json::from_str("\"2/4\"").unwrap();
        assert_eq!(serde_json::to_string(&k).unwrap(), "0.5");
    }
}
