//! Cesàro averages of state occupation and moments over trajectory ensembles.
//!
//! Occupation is counted with integers, so estimates for disjoint regions add
//! up exactly at the level of counts. Real-valued reductions use pairwise
//! summation in a fixed order, independent of thread scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::TrajectoryEnsemble;

/// Default window-agreement tolerance.
pub const DEFAULT_EPS_AMS: f64 = 0.05;

/// Finite-horizon caveat attached to every convergence report.
pub const AMS_CAVEAT: &str = "window agreement at a finite horizon is a surrogate for the asymptotic \
    limit; it can neither prove nor refute asymptotic mean stationarity";

/// Evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Region {
    /// Closed box `[low_i, high_i]` per coordinate.
    Box {
        low: Vec<f64>,
        high: Vec<f64>,
    },
    /// Closed Euclidean ball `|x| <= radius` around the origin.
    Ball {
        radius: f64,
    },
    Union {
        parts: Vec<Region>,
    },
    Difference {
        base: std::boxed::Box<Region>,
        minus: std::boxed::Box<Region>,
    },
}

impl Region {
    /// Scalar interval `[low, high]`.
    pub fn interval(low: f64, high: f64) -> Self {
        Region::Box { low: vec![low], high: vec![high] }
    }

    /// Centered cube `[-half, half]^n`.
    pub fn cube(n: usize, half: f64) -> Self {
        Region::Box { low: vec![-half; n], high: vec![half; n] }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Region::Box { low, high } => {
                if low.len() != dim || high.len() != dim {
                    return Err(Error::input(format!(
                        "box bounds have dimension {}/{}, states have {dim}",
                        low.len(),
                        high.len()
                    )));
                }
                if low.iter().zip(high).any(|(l, h)| l.is_nan() || h.is_nan() || l > h) {
                    return Err(Error::input("box bounds must satisfy low <= high"));
                }
                Ok(())
            }
            Region::Ball { radius } => {
                if radius.is_nan() || *radius < 0.0 {
                    Err(Error::input(format!("ball radius must be >= 0, got {radius}")))
                } else {
                    Ok(())
                }
            }
            Region::Union { parts } => parts.iter().try_for_each(|p| p.validate(dim)),
            Region::Difference { base, minus } => {
                base.validate(dim)?;
                minus.validate(dim)
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::Box { low, high } => x.iter().zip(low).zip(high).all(|((v, l), h)| *v >= *l && *v <= *h),
            Region::Ball { radius } => x.iter().map(|v| v * v).sum::<f64>().sqrt() <= *radius,
            Region::Union { parts } => parts.iter().any(|p| p.contains(x)),
            Region::Difference { base, minus } => base.contains(x) && !minus.contains(x),
        }
    }

    /// Whether the region is bounded.
    pub fn is_bounded(&self) -> bool {
        match self {
            Region::Box { low, high } => low.iter().chain(high).all(|v| v.is_finite()),
            Region::Ball { radius } => radius.is_finite(),
            Region::Union { parts } => parts.iter().all(Region::is_bounded),
            Region::Difference { base, .. } => base.is_bounded(),
        }
    }
}

/// `hits / total` with the integer counts kept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CesaroEstimate {
    pub hits: u64,
    pub total: u64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub p: f64,
    /// `+inf` when the ensemble diverged.
    pub value: f64,
    pub diverged: bool,
    pub nonfinite_states: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowReport {
    pub windows: Vec<(usize, usize)>,
    pub values: Vec<f64>,
    pub max_gap: f64,
    pub epsilon: f64,
    pub converged: bool,
    pub caveat: &'static str,
}

/// Summary of one region at one horizon, for tabular output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalMeasure {
    pub horizon: usize,
    pub estimates: Vec<CesaroEstimate>,
    pub moments: Vec<MomentEstimate>,
}

fn check_ensemble(ensemble: &TrajectoryEnsemble, states_needed: usize) -> Result<()> {
    if ensemble.is_empty() {
        return Err(Error::input("ensemble is empty"));
    }
    if states_needed == 0 {
        return Err(Error::input("horizon must be at least 1"));
    }
    let available = ensemble.horizon() + 1;
    if states_needed > available {
        return Err(Error::input(format!(
            "horizon {states_needed} exceeds the {available} recorded states per trajectory"
        )));
    }
    Ok(())
}

fn count_hits(ensemble: &TrajectoryEnsemble, region: &Region, start: usize, end: usize) -> u64 {
    ensemble
        .trajectories
        .par_iter()
        .map(|tr| (start..end).filter(|&t| region.contains(tr.state(t))).count() as u64)
        .sum()
}

/// `Q̂_T(B)`: mean over trajectories of the fraction of `t in [0, T-1]` with `x_t in B`.
pub fn cesaro_measure(ensemble: &TrajectoryEnsemble, region: &Region, horizon: usize) -> Result<CesaroEstimate> {
    check_ensemble(ensemble, horizon)?;
    region.validate(ensemble.trajectories[0].dimension())?;
    let hits = count_hits(ensemble, region, 0, horizon);
    let total = (ensemble.len() * horizon) as u64;
    Ok(CesaroEstimate { hits, total, value: hits as f64 / total as f64 })
}

/// Pairwise (tree) summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Time and ensemble average of `|x_t|^p` over `t in [0, T-1]`.
pub fn empirical_moment(ensemble: &TrajectoryEnsemble, p: f64, horizon: usize) -> Result<MomentEstimate> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::input(format!("moment exponent must be positive, got {p}")));
    }
    check_ensemble(ensemble, horizon)?;
    let per_traj: Vec<(f64, u64)> = ensemble
        .trajectories
        .par_iter()
        .map(|tr| {
            let mut bad = 0u64;
            let terms: Vec<f64> = (0..horizon)
                .map(|t| {
                    let x = tr.state(t);
                    if x.iter().any(|v| !v.is_finite()) {
                        bad += 1;
                    }
                    x.iter().map(|v| v * v).sum::<f64>().sqrt().powf(p)
                })
                .collect();
            (pairwise_sum(&terms), bad)
        })
        .collect();
    let nonfinite_states: u64 = per_traj.iter().map(|(_, b)| b).sum();
    let sums: Vec<f64> = per_traj.iter().map(|(s, _)| *s).collect();
    let value = pairwise_sum(&sums) / (ensemble.len() * horizon) as f64;
    let diverged = nonfinite_states > 0 || !value.is_finite();
    Ok(MomentEstimate { p, value: if diverged { f64::INFINITY } else { value }, diverged, nonfinite_states })
}

/// Compares windowed Cesàro averages `[start, end)`; converged iff every pairwise gap is `<= epsilon`.
pub fn ams_convergence_diagnostic(
    ensemble: &TrajectoryEnsemble,
    region: &Region,
    windows: &[(usize, usize)],
    epsilon: f64,
) -> Result<WindowReport> {
    if windows.len() < 2 {
        return Err(Error::input("at least two time windows are required"));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::input("epsilon must be non-negative"));
    }
    let end_max = windows.iter().map(|w| w.1).max().unwrap_or(0);
    check_ensemble(ensemble, end_max)?;
    region.validate(ensemble.trajectories[0].dimension())?;
    let mut sorted = windows.to_vec();
    sorted.sort_unstable();
    for w in &sorted {
        if w.0 >= w.1 {
            return Err(Error::input(format!("window [{}, {}) is empty", w.0, w.1)));
        }
    }
    if sorted.windows(2).any(|p| p[1].0 < p[0].1) {
        return Err(Error::input("time windows must be disjoint"));
    }
    let values: Vec<f64> = windows
        .iter()
        .map(|&(s, e)| count_hits(ensemble, region, s, e) as f64 / (ensemble.len() * (e - s)) as f64)
        .collect();
    let mut max_gap: f64 = 0.0;
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            max_gap = max_gap.max((values[i] - values[j]).abs());
        }
    }
    Ok(WindowReport {
        windows: windows.to_vec(),
        values,
        max_gap,
        epsilon,
        converged: max_gap <= epsilon,
        caveat: AMS_CAVEAT,
    })
}

/// Splits `[0, horizon)` into `k` equal consecutive windows.
pub fn equal_windows(horizon: usize, k: usize) -> Vec<(usize, usize)> {
    (0..k).map(|i| (i * horizon / k, (i + 1) * horizon / k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Distribution, Trajectory};
    use crate::seeding::{stream_rng, Purpose};

    fn scalar_ensemble(rows: Vec<Vec<f64>>) -> TrajectoryEnsemble {
        TrajectoryEnsemble::new(rows.into_iter().map(|s| Trajectory::from_states(1, s).unwrap()).collect())
    }

    fn iid(n: usize, t: usize, d: &Distribution, seed: u64) -> TrajectoryEnsemble {
        let rows = (0..n)
            .map(|i| {
                let mut rng = stream_rng(seed, Purpose::Custom, i as u64);
                (0..t).map(|_| d.sample(&mut rng)).collect()
            })
            .collect();
        scalar_ensemble(rows)
    }

    #[test]
    fn cesaro_examples() {
        let b = Region::interval(-1.0, 1.0);
        let zeros = scalar_ensemble(vec![vec![0.0; 11]; 3]);
        assert_eq!(cesaro_measure(&zeros, &b, 10).unwrap().value, 1.0);
        let alt = scalar_ensemble(vec![(0..11).map(|t| if t % 2 == 0 { 0.0 } else { 3.0 }).collect()]);
        assert_eq!(cesaro_measure(&alt, &b, 10).unwrap().value, 0.5);
        let u = iid(100, 1000, &Distribution::Uniform { low: -2.0, high: 2.0 }, 1);
        let q = cesaro_measure(&u, &b, 1000).unwrap().value;
        assert!((q - 0.5).abs() < 0.02, "{q}");
    }

    #[test]
    fn moment_examples() {
        let zeros = scalar_ensemble(vec![vec![0.0; 5]; 2]);
        assert_eq!(empirical_moment(&zeros, 3.0, 4).unwrap().value, 0.0);
        let twos = scalar_ensemble(vec![vec![2.0; 5]; 2]);
        assert_eq!(empirical_moment(&twos, 1.0, 4).unwrap().value, 2.0);
        let u = iid(100, 1000, &Distribution::Uniform { low: -1.0, high: 1.0 }, 2);
        let m = empirical_moment(&u, 2.0, 1000).unwrap().value;
        assert!((m - 1.0 / 3.0).abs() < 0.02, "{m}");
        let bad = scalar_ensemble(vec![vec![1.0, f64::INFINITY, 1.0]]);
        let r = empirical_moment(&bad, 1.0, 3).unwrap();
        assert!(r.diverged && r.nonfinite_states == 1);
    }

    #[test]
    fn window_examples() {
        let u = iid(50, 2000, &Distribution::Uniform { low: -2.0, high: 2.0 }, 3);
        let b = Region::interval(-1.0, 1.0);
        let r = ams_convergence_diagnostic(&u, &b, &equal_windows(2000, 2), DEFAULT_EPS_AMS).unwrap();
        assert!(r.converged);
        let doubling = scalar_ensemble(vec![(0..40).map(|t| 0.5 * 2f64.powi(t)).collect(); 4]);
        let r = ams_convergence_diagnostic(&doubling, &b, &[(0, 2), (20, 39)], DEFAULT_EPS_AMS).unwrap();
        assert_eq!(r.values, vec![1.0, 0.0]);
        assert!(!r.converged);
        assert!(ams_convergence_diagnostic(&u, &b, &[(0, 100)], 0.05).is_err());
        assert!(ams_convergence_diagnostic(&u, &b, &[(0, 100), (50, 150)], 0.05).is_err());
        assert!(ams_convergence_diagnostic(&u, &b, &[(0, 100), (100, 5000)], 0.05).is_err());
    }

    #[test]
    fn empty_ensemble_rejected() {
        let e = TrajectoryEnsemble::new(vec![]);
        assert!(matches!(cesaro_measure(&e, &Region::interval(0.0, 1.0), 1), Err(Error::Input(_))));
    }
}
