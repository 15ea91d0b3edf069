//! Scalar distribution families for noise and initial states.
//!
//! Vector-valued draws use i.i.d. coordinates from the same family.

use rand::Rng;
use rand_distr::{Distribution as _, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal as StatNormal};

use crate::error::{ensure_finite, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Distribution {
    /// Point mass at zero.
    Zero,
    PointMass {
        value: f64,
    },
    Uniform {
        low: f64,
        high: f64,
    },
    Gaussian {
        mean: f64,
        std_dev: f64,
    },
    TruncatedGaussian {
        mean: f64,
        std_dev: f64,
        low: f64,
        high: f64,
    },
    /// Two-sided exponential with density `exp(-|x-mean|/scale) / (2 scale)`.
    Laplace {
        mean: f64,
        scale: f64,
    },
}

impl Distribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Distribution::Zero => Ok(()),
            Distribution::PointMass { value } => ensure_finite("value", value),
            Distribution::Uniform { low, high } => {
                ensure_finite("low", low)?;
                ensure_finite("high", high)?;
                if low < high {
                    Ok(())
                } else {
                    Err(Error::input(format!("uniform requires low < high, got [{low}, {high}]")))
                }
            }
            Distribution::Gaussian { mean, std_dev } => {
                ensure_finite("mean", mean)?;
                positive("std_dev", std_dev)
            }
            Distribution::TruncatedGaussian { mean, std_dev, low, high } => {
                ensure_finite("mean", mean)?;
                positive("std_dev", std_dev)?;
                ensure_finite("low", low)?;
                ensure_finite("high", high)?;
                if low >= high {
                    return Err(Error::input(format!("truncated_gaussian requires low < high, got [{low}, {high}]")));
                }
                let n = std_normal();
                let mass = n.cdf((high - mean) / std_dev) - n.cdf((low - mean) / std_dev);
                if mass > 1e-300 {
                    Ok(())
                } else {
                    Err(Error::input("truncated_gaussian window carries no probability mass"))
                }
            }
            Distribution::Laplace { mean, scale } => {
                ensure_finite("mean", mean)?;
                positive("scale", scale)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Distribution::Zero => "zero",
            Distribution::PointMass { .. } => "point_mass",
            Distribution::Uniform { .. } => "uniform",
            Distribution::Gaussian { .. } => "gaussian",
            Distribution::TruncatedGaussian { .. } => "truncated_gaussian",
            Distribution::Laplace { .. } => "laplace",
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Distribution::Zero => 0.0,
            Distribution::PointMass { value } => value,
            Distribution::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            Distribution::Gaussian { mean, std_dev } => {
                Normal::new(mean, std_dev).expect("validated gaussian").sample(rng)
            }
            Distribution::TruncatedGaussian { mean, std_dev, low, high } => {
                // Inverse-CDF sampling restricted to [F(low), F(high)].
                let n = std_normal();
                let a = n.cdf((low - mean) / std_dev);
                let b = n.cdf((high - mean) / std_dev);
                let p = a + (b - a) * rng.random::<f64>();
                let p = p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
                (mean + std_dev * n.inverse_cdf(p)).clamp(low, high)
            }
            Distribution::Laplace { mean, scale } => {
                let u: f64 = rng.random::<f64>() - 0.5;
                mean - scale * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
            }
        }
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.sample(rng);
        }
    }

    /// Lebesgue density, or `None` for atomic laws.
    pub fn density(&self, x: f64) -> Option<f64> {
        match *self {
            Distribution::Zero | Distribution::PointMass { .. } => None,
            Distribution::Uniform { low, high } => {
                Some(if (low..=high).contains(&x) { 1.0 / (high - low) } else { 0.0 })
            }
            Distribution::Gaussian { mean, std_dev } => Some(std_normal().pdf((x - mean) / std_dev) / std_dev),
            Distribution::TruncatedGaussian { mean, std_dev, low, high } => {
                if !(low..=high).contains(&x) {
                    return Some(0.0);
                }
                let n = std_normal();
                let mass = n.cdf((high - mean) / std_dev) - n.cdf((low - mean) / std_dev);
                Some(n.pdf((x - mean) / std_dev) / (std_dev * mass))
            }
            Distribution::Laplace { mean, scale } => Some((-(x - mean).abs() / scale).exp() / (2.0 * scale)),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Distribution::Zero => step(x, 0.0),
            Distribution::PointMass { value } => step(x, value),
            Distribution::Uniform { low, high } => ((x - low) / (high - low)).clamp(0.0, 1.0),
            Distribution::Gaussian { mean, std_dev } => std_normal().cdf((x - mean) / std_dev),
            Distribution::TruncatedGaussian { mean, std_dev, low, high } => {
                if x <= low {
                    return 0.0;
                }
                if x >= high {
                    return 1.0;
                }
                let n = std_normal();
                let a = n.cdf((low - mean) / std_dev);
                let b = n.cdf((high - mean) / std_dev);
                (n.cdf((x - mean) / std_dev) - a) / (b - a)
            }
            Distribution::Laplace { mean, scale } => {
                let z = (x - mean) / scale;
                if z < 0.0 {
                    0.5 * z.exp()
                } else {
                    1.0 - 0.5 * (-z).exp()
                }
            }
        }
    }

    /// Probability of the closed interval `[a, b]`.
    pub fn interval_mass(&self, a: f64, b: f64) -> f64 {
        if b < a {
            return 0.0;
        }
        match *self {
            Distribution::Zero => f64::from(u8::from((a..=b).contains(&0.0))),
            Distribution::PointMass { value } => f64::from(u8::from((a..=b).contains(&value))),
            _ => (self.cdf(b) - self.cdf(a)).max(0.0),
        }
    }

    /// Upper tail mass `P(X > x)`, computed without cancellation for the
    /// unbounded families.
    pub fn upper_tail(&self, x: f64) -> f64 {
        match *self {
            Distribution::Gaussian { mean, std_dev } => std_normal().sf((x - mean) / std_dev),
            Distribution::Laplace { mean, scale } => {
                let z = (x - mean) / scale;
                if z < 0.0 {
                    1.0 - 0.5 * z.exp()
                } else {
                    0.5 * (-z).exp()
                }
            }
            _ => 1.0 - self.cdf(x),
        }
    }

    /// Quantile function for the continuous families.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::input(format!("quantile level must lie in [0, 1], got {p}")));
        }
        match *self {
            Distribution::Zero | Distribution::PointMass { .. } => {
                Err(Error::capability(format!("{} has no continuous quantile function", self.name())))
            }
            Distribution::Uniform { low, high } => Ok(low + p * (high - low)),
            Distribution::Gaussian { mean, std_dev } => Ok(mean + std_dev * std_normal().inverse_cdf(p)),
            Distribution::TruncatedGaussian { mean, std_dev, low, high } => {
                let n = std_normal();
                let a = n.cdf((low - mean) / std_dev);
                let b = n.cdf((high - mean) / std_dev);
                Ok((mean + std_dev * n.inverse_cdf(a + p * (b - a))).clamp(low, high))
            }
            Distribution::Laplace { mean, scale } => {
                Ok(if p < 0.5 { mean + scale * (2.0 * p).ln() } else { mean - scale * (2.0 * (1.0 - p)).ln() })
            }
        }
    }

    /// Closed support interval (possibly infinite).
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Distribution::Zero => (0.0, 0.0),
            Distribution::PointMass { value } => (value, value),
            Distribution::Uniform { low, high } | Distribution::TruncatedGaussian { low, high, .. } => (low, high),
            Distribution::Gaussian { .. } | Distribution::Laplace { .. } => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn is_compactly_supported(&self) -> bool {
        let (a, b) = self.support();
        a.is_finite() && b.is_finite()
    }

    /// `sup |x|` over the support, when finite.
    pub fn abs_bound(&self) -> Option<f64> {
        let (a, b) = self.support();
        self.is_compactly_supported().then(|| a.abs().max(b.abs()))
    }

    /// Center of symmetry for the symmetric families.
    pub fn center(&self) -> f64 {
        match *self {
            Distribution::Zero => 0.0,
            Distribution::PointMass { value } => value,
            Distribution::Uniform { low, high } => 0.5 * (low + high),
            Distribution::Gaussian { mean, .. } | Distribution::Laplace { mean, .. } => mean,
            Distribution::TruncatedGaussian { mean, .. } => mean,
        }
    }
}

fn std_normal() -> StatNormal {
    StatNormal::new(0.0, 1.0).expect("standard normal")
}

fn step(x: f64, at: f64) -> f64 {
    if x >= at {
        1.0
    } else {
        0.0
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::input(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Essential density bounds of an initial law on a support interval `K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityBounds {
    pub p_min: f64,
    pub p_max: f64,
    pub support: (f64, f64),
}

impl DensityBounds {
    pub fn new(p_min: f64, p_max: f64, support: (f64, f64)) -> Result<Self> {
        let b = DensityBounds { p_min, p_max, support };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_min > 0.0 && self.p_min <= self.p_max && self.p_max.is_finite()) {
            return Err(Error::input(format!(
                "density bounds require 0 < p_min <= p_max < inf, got p_min={}, p_max={}",
                self.p_min, self.p_max
            )));
        }
        let (a, b) = self.support;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::input(format!("support must be a bounded interval, got [{a}, {b}]")));
        }
        Ok(())
    }

    pub fn ratio(&self) -> f64 {
        self.p_max / self.p_min
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::{stream_rng, Purpose};

    #[test]
    fn uniform_mean_and_second_moment() {
        let d = Distribution::Uniform { low: -1.0, high: 1.0 };
        let mut rng = stream_rng(1, Purpose::Custom, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| d.sample(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let m2 = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 0.01);
        assert!((m2 - 1.0 / 3.0).abs() < 0.01);
        assert!(xs.iter().all(|x| (-1.0..=1.0).contains(x)));
    }

    #[test]
    fn laplace_quantile_inverts_cdf() {
        let d = Distribution::Laplace { mean: 0.5, scale: 2.0 };
        for p in [0.01, 0.2, 0.5, 0.7, 0.999] {
            let x = d.quantile(p).unwrap();
            assert!((d.cdf(x) - p).abs() < 1e-12, "p={p}");
        }
    }

    #[test]
    fn truncated_gaussian_stays_in_window() {
        let d = Distribution::TruncatedGaussian { mean: 0.0, std_dev: 1.0, low: -0.5, high: 2.0 };
        d.validate().unwrap();
        let mut rng = stream_rng(3, Purpose::Custom, 0);
        for _ in 0..10_000 {
            let x = d.sample(&mut rng);
            assert!((-0.5..=2.0).contains(&x));
        }
        assert!((d.cdf(2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Distribution::Uniform { low: 1.0, high: 1.0 }.validate().is_err());
        assert!(Distribution::Gaussian { mean: 0.0, std_dev: -1.0 }.validate().is_err());
        assert!(DensityBounds::new(0.0, 1.0, (0.0, 1.0)).is_err());
        assert!(DensityBounds::new(2.0, 1.0, (0.0, 1.0)).is_err());
        assert!(DensityBounds::new(0.5, 0.5, (-1.0, 1.0)).is_ok());
    }
}
