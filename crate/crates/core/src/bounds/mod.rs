//! Capacity lower bounds (bits per step) needed for stabilization.

mod cocycle;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

pub use cocycle::{cocycle_rate_lower, selgrade_sum, CocycleResult};

use crate::ams::Region;
use crate::error::{Error, Result};
use crate::models::{SystemModel, TrajectoryEnsemble};

/// Default grid points per axis for `N <= 2`.
pub const DEFAULT_POINTS_PER_AXIS: usize = 10_000;
/// Default log-spaced grid size of the moment-bound search.
pub const DEFAULT_MOMENT_GRID: usize = 2_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    Volume,
    Moment,
    Linear,
    Cocycle,
    Selgrade,
    LogdetIntegral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Certification {
    CertifiedLowerBound,
    Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub theorem: Theorem,
    /// Bound in bits, clamped at 0.
    pub value: f64,
    pub raw_value: f64,
    pub certification: Certification,
    pub parameters: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl BoundReport {
    pub(crate) fn new(theorem: Theorem, raw_value: f64, certification: Certification) -> Self {
        let mut notes = Vec::new();
        if raw_value < 0.0 {
            notes.push(format!("raw value {raw_value} clamped at 0"));
        }
        BoundReport { theorem, value: raw_value.max(0.0), raw_value, certification, parameters: BTreeMap::new(), notes }
    }

    pub(crate) fn param(mut self, key: &str, value: f64) -> Self {
        self.parameters.insert(key.to_string(), value);
        self
    }

    pub(crate) fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }
}

/// Grid for [`inf_logdet`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GridSpec {
    /// Points per axis, endpoints included.
    pub points_per_axis: Option<usize>,
    /// Total point budget; fixes points per axis as `floor(budget^(1/N))`.
    pub budget: Option<usize>,
    /// Lipschitz constant of `x -> log2|det Df(x)|` in the Euclidean norm.
    pub lipschitz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfLogdet {
    /// Grid minimum.
    pub value: f64,
    pub argmin: Vec<f64>,
    pub points: usize,
    pub points_per_axis: usize,
    /// Grid minimum minus the Lipschitz slack, when a constant was supplied.
    pub certified_lower: Option<f64>,
    pub certification: Certification,
}

fn bounding_box(region: &Region, dim: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    region.validate(dim)?;
    if !region.is_bounded() {
        return Err(Error::input("region must be bounded"));
    }
    match region {
        Region::Box { low, high } => Ok((low.clone(), high.clone())),
        Region::Ball { radius } => Ok((vec![-radius; dim], vec![*radius; dim])),
        Region::Union { parts } => {
            let mut lo = vec![f64::INFINITY; dim];
            let mut hi = vec![f64::NEG_INFINITY; dim];
            for p in parts {
                let (l, h) = bounding_box(p, dim)?;
                for i in 0..dim {
                    lo[i] = lo[i].min(l[i]);
                    hi[i] = hi[i].max(h[i]);
                }
            }
            Ok((lo, hi))
        }
        Region::Difference { base, .. } => bounding_box(base, dim),
    }
}

/// Minimum of `log2|det Df|` over a uniform grid on the region.
pub fn inf_logdet(model: &SystemModel, region: &Region, grid: GridSpec) -> Result<InfLogdet> {
    let n = model.dimension();
    if !model.has_jacobian_profile() {
        return Err(Error::capability("model has no Jacobian log-determinant profile"));
    }
    let (low, high) = bounding_box(region, n)?;
    let k = match (grid.points_per_axis, grid.budget) {
        (Some(k), _) => k,
        (None, Some(b)) => ((b as f64).powf(1.0 / n as f64) + 1e-9).floor() as usize,
        (None, None) if n <= 2 => DEFAULT_POINTS_PER_AXIS,
        (None, None) => {
            return Err(Error::input(format!("dimension {n} > 2 needs an explicit grid budget or points per axis")))
        }
    };
    if k == 0 {
        return Err(Error::input("grid needs at least one point per axis"));
    }
    let total = k.checked_pow(n as u32).ok_or_else(|| Error::input(format!("grid of {k}^{n} points is too large")))?;
    let coord = |i: usize, j: usize| {
        if k == 1 {
            0.5 * (low[i] + high[i])
        } else {
            low[i] + (high[i] - low[i]) * j as f64 / (k - 1) as f64
        }
    };
    let best = (0..total)
        .into_par_iter()
        .map(|idx| {
            let mut rem = idx;
            let x: Vec<f64> = (0..n)
                .map(|i| {
                    let j = rem % k;
                    rem /= k;
                    coord(i, j)
                })
                .collect();
            if !region.contains(&x) {
                return Ok(None);
            }
            let v = model.jacobian_logdet(&x)?;
            Ok(Some((v, idx, x)))
        })
        .try_fold(
            || None::<(f64, usize, Vec<f64>)>,
            |acc, item: Result<Option<(f64, usize, Vec<f64>)>>| -> Result<_> { Ok(better(acc, item?)) },
        )
        .try_reduce(|| None, |a, b| Ok(better(a, b)))?;
    let (value, _, argmin) = best.ok_or_else(|| Error::input("no grid point falls inside the region"))?;
    if value.is_nan() {
        return Err(Error::numeric("log-determinant evaluated to NaN"));
    }
    let certified_lower = grid.lipschitz.map(|l| {
        let h: f64 = if k == 1 {
            (0..n).map(|i| (high[i] - low[i]).powi(2)).sum::<f64>().sqrt()
        } else {
            (0..n).map(|i| ((high[i] - low[i]) / (k - 1) as f64).powi(2)).sum::<f64>().sqrt()
        };
        value - l * h / 2.0
    });
    Ok(InfLogdet {
        value,
        argmin,
        points: total,
        points_per_axis: k,
        certification: if certified_lower.is_some() {
            Certification::CertifiedLowerBound
        } else {
            Certification::Estimate
        },
        certified_lower,
    })
}

// Smaller value wins; ties go to the lower grid index so the result is order independent.
fn better(a: Option<(f64, usize, Vec<f64>)>, b: Option<(f64, usize, Vec<f64>)>) -> Option<(f64, usize, Vec<f64>)> {
    match (a, b) {
        (None, b) => b,
        (a, None) => a,
        (Some(a), Some(b)) => {
            if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
                Some(b)
            } else {
                Some(a)
            }
        }
    }
}

/// `Q(B) * inf_B log2|det Df|`.
pub fn volume_bound(q_of_b: f64, inf_logdet_b: f64) -> Result<BoundReport> {
    if !(0.0..=1.0).contains(&q_of_b) {
        return Err(Error::input(format!("Q(B) must lie in [0, 1], got {q_of_b}")));
    }
    if inf_logdet_b.is_nan() {
        return Err(Error::input("inf log-determinant is NaN"));
    }
    let raw = if q_of_b == 0.0 { 0.0 } else { q_of_b * inf_logdet_b };
    Ok(BoundReport::new(Theorem::Volume, raw, Certification::CertifiedLowerBound)
        .param("q_of_b", q_of_b)
        .param("inf_logdet", inf_logdet_b))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentBound {
    pub kappa_star: f64,
    pub value: f64,
    /// The maximizer sits at the search cap; the supremum may lie beyond it.
    pub at_cap: bool,
    pub report: BoundReport,
}

/// Maximizes `(1 - M/κ^p) * profile(κ)` over `κ^p >= M`, `κ <= κ_max`.
///
/// `profile(κ)` must return `min_{|x| <= κ} log2|det Df(x)|`.
pub fn moment_bound(
    profile: impl Fn(f64) -> Result<f64> + Sync,
    m_p: f64,
    p: f64,
    kappa_max: f64,
    grid_points: usize,
) -> Result<MomentBound> {
    if !(m_p > 0.0 && m_p.is_finite()) || !(p > 0.0 && p.is_finite()) {
        return Err(Error::input(format!("moment bound needs M_p > 0 and p > 0, got M_p={m_p}, p={p}")));
    }
    let kappa_min = m_p.powf(1.0 / p);
    if !(kappa_max > kappa_min && kappa_max.is_finite()) {
        return Err(Error::input(format!("kappa_max must exceed M_p^(1/p) = {kappa_min}, got {kappa_max}")));
    }
    if grid_points < 3 {
        return Err(Error::input("moment grid needs at least 3 points"));
    }
    let g = |k: f64| -> Result<f64> {
        let prof = profile(k)?;
        if prof.is_nan() {
            return Err(Error::capability(format!("profile not evaluable at kappa={k}")));
        }
        Ok((1.0 - m_p / k.powf(p)) * prof)
    };
    let (lk0, lk1) = (kappa_min.ln(), kappa_max.ln());
    let kappas: Vec<f64> = (0..grid_points)
        .map(|i| {
            if i == grid_points - 1 {
                kappa_max
            } else {
                (lk0 + (lk1 - lk0) * i as f64 / (grid_points - 1) as f64).exp()
            }
        })
        .collect();
    let values = kappas.par_iter().map(|&k| g(k)).collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    let (mut k_star, mut v_star) = (kappas[best], values[best]);
    let lo = kappas[best.saturating_sub(1)];
    let hi = kappas[(best + 1).min(grid_points - 1)];
    let (kg, vg) = golden_max(&g, lo, hi)?;
    if vg > v_star {
        k_star = kg;
        v_star = vg;
    }
    let at_cap = best == grid_points - 1 || (kappa_max - k_star) <= 1e-9 * kappa_max;
    let mut report = BoundReport::new(Theorem::Moment, v_star, Certification::CertifiedLowerBound)
        .param("kappa_star", k_star)
        .param("m_p", m_p)
        .param("p", p)
        .param("kappa_max", kappa_max);
    if at_cap {
        report = report.note(format!("maximizer at the search cap kappa_max={kappa_max}; the supremum may be larger"));
    }
    Ok(MomentBound { kappa_star: k_star, value: report.value, at_cap, report })
}

fn golden_max(g: &impl Fn(f64) -> Result<f64>, mut a: f64, mut b: f64) -> Result<(f64, f64)> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut gc, mut gd) = (g(c)?, g(d)?);
    for _ in 0..200 {
        if (b - a).abs() <= 1e-13 * (1.0 + a.abs() + b.abs()) {
            break;
        }
        if gc >= gd {
            b = d;
            d = c;
            gd = gc;
            c = b - inv_phi * (b - a);
            gc = g(c)?;
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + inv_phi * (b - a);
            gd = g(d)?;
        }
    }
    let m = 0.5 * (a + b);
    Ok((m, g(m)?))
}

/// `κ -> min_{|x| <= κ} log2|det Df(x)|` on a grid of `points` per axis over the ball.
pub fn logdet_profile(model: &SystemModel, points: usize) -> impl Fn(f64) -> Result<f64> + Sync + '_ {
    move |kappa| {
        inf_logdet(
            model,
            &Region::Ball { radius: kappa },
            GridSpec { points_per_axis: Some(points), ..GridSpec::default() },
        )
        .map(|r| r.value)
    }
}

/// `sum_λ max(0, log2|λ|)` over the spectrum with multiplicity.
pub fn linear_bound(a: &DMatrix<f64>) -> Result<BoundReport> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::input(format!("matrix must be square and non-empty, got {}x{}", a.nrows(), a.ncols())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("matrix entries must be finite"));
    }
    let eig = a.complex_eigenvalues();
    if eig.iter().any(|l| !l.re.is_finite() || !l.im.is_finite()) {
        return Err(Error::numeric("eigenvalue computation failed"));
    }
    let raw: f64 = eig.iter().map(|l| l.norm().log2().max(0.0)).sum();
    let mut report =
        BoundReport::new(Theorem::Linear, raw, Certification::CertifiedLowerBound).param("dimension", a.nrows() as f64);
    let unstable = eig.iter().filter(|l| l.norm() > 1.0).count();
    report = report.param("unstable_eigenvalues", unstable as f64);
    Ok(report)
}

/// Cesàro-average of `log2|det Df(x_t)|` over an ensemble; an estimate only.
pub fn logdet_integral_estimate(
    model: &SystemModel,
    ensemble: &TrajectoryEnsemble,
    horizon: usize,
) -> Result<BoundReport> {
    if ensemble.is_empty() || horizon == 0 || horizon > ensemble.horizon() + 1 {
        return Err(Error::input("need a non-empty ensemble and 1 <= horizon <= recorded states"));
    }
    let sums = ensemble
        .trajectories
        .par_iter()
        .map(|tr| {
            let terms = (0..horizon).map(|t| model.jacobian_logdet(tr.state(t))).collect::<Result<Vec<_>>>()?;
            Ok(crate::ams::pairwise_sum(&terms))
        })
        .collect::<Result<Vec<f64>>>()?;
    let raw = crate::ams::pairwise_sum(&sums) / (ensemble.len() * horizon) as f64;
    Ok(BoundReport::new(Theorem::LogdetIntegral, raw, Certification::Estimate)
        .param("horizon", horizon as f64)
        .param("trajectories", ensemble.len() as f64)
        .note("integral of log|det Df| against the empirical occupation measure; not a proven bound"))
}
