//! Initial-state estimation from a realized control sequence, and the bin
//! construction used for the noisy-channel converse.
//!
//! For a scalar map with `|f'| >= c > 1`, every `x -> φ(t, x)` is strictly
//! monotone, so each constraint `|φ(t, x)| <= b` carves out one interval of
//! initial states. The conditioned set is the set of grid points lying in
//! enough of these intervals; it is found by locating each interval's
//! endpoints on the grid and sweeping.

mod bins;

pub use bins::{
    bin_pipeline, coupling_tv, step5_feasibility, tail_ratio, BinPipelineResult, Pieces, PipelineChecks, Step5,
    TailRatio,
};

use std::collections::HashSet;

use rayon::prelude::*;
use serde::Serialize;

use crate::channels::ChannelModel;
use crate::error::{Error, Result};
use crate::models::{Control, Drift, MapKind, SystemModel};
use crate::policies::{closed_loop_run, PolicyState, ZoomConfig};
use crate::seeding::{stream_rng, Purpose};

/// Points used to bound `|f'|` from below over the search domain.
const SLOPE_SAMPLES: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionedSet {
    pub horizon: usize,
    pub b: f64,
    pub r_star: f64,
    /// Number of `t` in `[0, T-1]` that must satisfy the bound.
    pub required: usize,
    pub resolution: f64,
    /// Enclosing interval of the member grid points, `None` when empty.
    pub interval: Option<(f64, f64)>,
    pub midpoint: Option<f64>,
    /// `max - min + resolution`.
    pub diameter: Option<f64>,
}

impl ConditionedSet {
    pub fn is_empty(&self) -> bool {
        self.interval.is_none()
    }
}

/// Scalar additive drift `f` and the map `x -> f(x) + u + w`.
fn scalar_drift(model: &SystemModel) -> Result<&Drift> {
    match model.kind() {
        MapKind::Additive { drift, .. } if model.dimension() == 1 && model.noise_dim() == 1 => Ok(drift),
        _ => Err(Error::capability("state estimation needs a scalar additive model x' = f(x) + u + w")),
    }
}

/// `min |f'|` sampled over `domain`.
pub fn expansion_constant(model: &SystemModel, domain: (f64, f64)) -> Result<f64> {
    scalar_drift(model)?;
    check_domain(domain)?;
    let mut min = f64::INFINITY;
    for i in 0..=SLOPE_SAMPLES {
        let x = domain.0 + (domain.1 - domain.0) * i as f64 / SLOPE_SAMPLES as f64;
        min = min.min(model.jacobian_logdet(&[x])?);
    }
    Ok(min.exp2())
}

fn check_domain(domain: (f64, f64)) -> Result<()> {
    if !(domain.0 < domain.1) || !domain.0.is_finite() || !domain.1.is_finite() {
        return Err(Error::input(format!("search domain must be a bounded interval, got {domain:?}")));
    }
    Ok(())
}

/// `φ(t, x)` for `t = 0..=t_max`, stopping early on overflow.
fn flow(drift: &Drift, x: f64, controls: &[f64], noise: &[f64], t_max: usize) -> f64 {
    let mut v = x;
    for t in 0..t_max {
        v = drift.eval_scalar(v) + controls[t] + noise[t];
        if !v.is_finite() {
            return v;
        }
    }
    v
}

/// Last grid index `k` in `0..=n` with `pred(lo + k h)` true, for a predicate
/// that is true on a prefix. `None` when false at `0`.
fn last_true(n: usize, pred: impl Fn(usize) -> bool) -> Option<usize> {
    if !pred(0) {
        return None;
    }
    let (mut lo, mut hi) = (0usize, n + 1);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

/// Grid indices `[first, last]` with `|φ(t, x)| <= b`, or `None`.
#[allow(clippy::too_many_arguments)]
fn constraint_interval(
    drift: &Drift,
    controls: &[f64],
    noise: &[f64],
    t: usize,
    b: f64,
    lo: f64,
    h: f64,
    n: usize,
) -> Option<(usize, usize)> {
    let at = |k: usize| flow(drift, lo + k as f64 * h, controls, noise, t);
    let increasing = at(n) >= at(0);
    // With orientation fixed, "φ <= b" and "φ >= -b" are prefix or suffix sets.
    let below = |k: usize| at(k) <= b;
    let above = |k: usize| at(k) >= -b;
    let (first, last) = if increasing {
        let last = last_true(n, below)?;
        let first = match last_true(n, |k| !above(k)) {
            None => 0,
            Some(k) => k + 1,
        };
        (first, last)
    } else {
        let last = last_true(n, above)?;
        let first = match last_true(n, |k| !below(k)) {
            None => 0,
            Some(k) => k + 1,
        };
        (first, last)
    };
    (first <= last).then_some((first, last))
}

/// Initial states `x` in `domain` (on a grid of spacing `resolution`) with
/// `|φ(t, x, ū, w̄)| <= b` for at least `(1 - r_star) T` of the times
/// `t = 0..T-1`.
///
/// `resolution` defaults to half of `b c^{-T}` and may not exceed `b c^{-T}`.
#[allow(clippy::too_many_arguments)]
pub fn conditioned_set(
    model: &SystemModel,
    controls: &[f64],
    noise: &[f64],
    b: f64,
    r_star: f64,
    horizon: usize,
    domain: (f64, f64),
    c: f64,
    resolution: Option<f64>,
) -> Result<ConditionedSet> {
    let drift = scalar_drift(model)?;
    check_domain(domain)?;
    if horizon == 0 {
        return Err(Error::input("horizon T must be at least 1"));
    }
    if controls.len() < horizon || noise.len() < horizon {
        return Err(Error::input(format!(
            "need {horizon} controls and noise samples, got {} and {}",
            controls.len(),
            noise.len()
        )));
    }
    if !(b >= 0.0 && b.is_finite()) {
        return Err(Error::input(format!("b must be non-negative, got {b}")));
    }
    if !(0.0..1.0).contains(&r_star) {
        return Err(Error::input(format!("r_star must lie in [0, 1), got {r_star}")));
    }
    if !(c > 1.0) {
        return Err(Error::input(format!("expansion constant c must exceed 1, got {c}")));
    }
    let width = domain.1 - domain.0;
    let scale = b * c.powi(-(horizon as i32));
    let h = match resolution {
        Some(h) if h > 0.0 => h,
        Some(h) => return Err(Error::input(format!("grid resolution must be positive, got {h}"))),
        None if scale > 0.0 => scale / 2.0,
        None => width * 1e-12,
    };
    if b > 0.0 && h > scale {
        return Err(Error::input(format!(
            "grid resolution {h} is too coarse for T = {horizon}; need at most b c^-T = {scale}"
        )));
    }
    let n_f = (width / h).ceil();
    if n_f > (1u64 << 52) as f64 {
        return Err(Error::input(format!("grid of {n_f} points exceeds the 2^52 limit; narrow the domain or lower T")));
    }
    let n = n_f as usize;
    let required = ((1.0 - r_star) * horizon as f64 - 1e-9).ceil().max(0.0) as usize;
    let mut events: Vec<(usize, i32)> = Vec::with_capacity(2 * horizon);
    for t in 0..horizon {
        if let Some((first, last)) = constraint_interval(drift, controls, noise, t, b, domain.0, h, n) {
            events.push((first, 1));
            events.push((last + 1, -1));
        }
    }
    // At equal positions closings (index last + 1) act before openings.
    events.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut count = 0usize;
    let mut min: Option<usize> = None;
    let mut max: Option<usize> = None;
    let mut i = 0;
    if required == 0 {
        min = Some(0);
        max = Some(n);
    } else {
        while i < events.len() {
            let pos = events[i].0;
            while i < events.len() && events[i].0 == pos {
                count = (count as i64 + events[i].1 as i64) as usize;
                i += 1;
            }
            if count >= required {
                min.get_or_insert(pos);
                // Members run until the next event position.
                let end = events.get(i).map(|e| e.0 - 1).unwrap_or(n);
                max = Some(end);
            }
        }
    }
    let x = |k: usize| domain.0 + k as f64 * h;
    let interval = min.zip(max).map(|(a, z)| (x(a), x(z)));
    Ok(ConditionedSet {
        horizon,
        b,
        r_star,
        required,
        resolution: h,
        midpoint: interval.map(|(a, z)| 0.5 * (a + z)),
        diameter: interval.map(|(a, z)| z - a + h),
        interval,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Fresh noise per trial; frequencies average over noise realizations.
    Averaged,
    /// One noise realization shared by all trials; only `x_0` and the channel vary.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExceedancePoint {
    pub horizon: usize,
    /// `b c^{-(1 - 3 r*) T}`.
    pub threshold: f64,
    pub trials: usize,
    pub exceedances: usize,
    /// Trials whose conditioned set was empty; these count as exceedances.
    pub empty_sets: usize,
    pub frequency: f64,
    pub distinct_controls: usize,
    /// `log2(#distinct ū) / T`.
    pub control_rate: f64,
    pub max_diameter: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationSettings {
    pub b: f64,
    pub r_star: f64,
    pub horizons: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    /// Search domain for `x_0`; defaults to the initial law's support widened by `b`.
    pub domain: Option<(f64, f64)>,
    /// Defaults to the sampled `min |f'|` over the domain.
    pub c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationReport {
    pub c: f64,
    pub domain: (f64, f64),
    pub averaged: Vec<ExceedancePoint>,
    pub fixed: Vec<ExceedancePoint>,
    /// Estimates `x̂_0` at the largest horizon, one per distinct realized `ū`
    /// (averaged mode, empty sets skipped), in first-seen order.
    pub centers: Vec<f64>,
    pub note: String,
}

const MODE_NOTE: &str = "averaged: noise redrawn per trial; fixed: one noise realization for all trials, \
only x_0 and channel randomness vary";

struct TrialPath {
    x0: f64,
    controls: Vec<f64>,
    noise: Vec<f64>,
}

fn summarize(
    model: &SystemModel,
    paths: &[TrialPath],
    settings: &EstimationSettings,
    domain: (f64, f64),
    c: f64,
) -> Result<Vec<ExceedancePoint>> {
    settings
        .horizons
        .iter()
        .map(|&t_len| {
            let threshold = settings.b * c.powf(-(1.0 - 3.0 * settings.r_star) * t_len as f64);
            let sets = paths
                .par_iter()
                .map(|p| {
                    conditioned_set(model, &p.controls, &p.noise, settings.b, settings.r_star, t_len, domain, c, None)
                        .map(|s| (s, p.x0))
                })
                .collect::<Result<Vec<_>>>()?;
            let empty_sets = sets.iter().filter(|(s, _)| s.is_empty()).count();
            let exceedances =
                sets.iter().filter(|(s, x0)| s.midpoint.is_none_or(|m| (x0 - m).abs() > threshold)).count();
            let distinct: HashSet<Vec<u64>> =
                paths.iter().map(|p| p.controls[..t_len].iter().map(|v| v.to_bits()).collect()).collect();
            Ok(ExceedancePoint {
                horizon: t_len,
                threshold,
                trials: paths.len(),
                exceedances,
                empty_sets,
                frequency: exceedances as f64 / paths.len() as f64,
                distinct_controls: distinct.len(),
                control_rate: (distinct.len() as f64).log2() / t_len as f64,
                max_diameter: sets.iter().filter_map(|(s, _)| s.diameter).reduce(f64::max),
            })
        })
        .collect()
}

/// Runs closed loops under `policy` and reports, per horizon, how often the
/// midpoint estimate of `x_0` misses by more than `b c^{-(1-3 r*) T}`.
pub fn estimation_experiment(
    model: &SystemModel,
    channel: &ChannelModel,
    policy: &ZoomConfig,
    settings: &EstimationSettings,
) -> Result<EstimationReport> {
    scalar_drift(model)?;
    if settings.trials == 0 {
        return Err(Error::input("trials must be at least 1"));
    }
    if settings.horizons.is_empty() || settings.horizons.contains(&0) {
        return Err(Error::input("horizon list must be non-empty with entries >= 1"));
    }
    if !(settings.r_star > 0.0 && settings.r_star < 1.0 / 3.0) {
        return Err(Error::input(format!("r_star must lie in (0, 1/3), got {}", settings.r_star)));
    }
    let domain = match settings.domain {
        Some(d) => d,
        None if model.init().is_compactly_supported() => {
            let (lo, hi) = model.init().support();
            (lo.min(-settings.b) - settings.b, hi.max(settings.b) + settings.b)
        }
        None => return Err(Error::input("initial law is not compactly supported; give a search domain")),
    };
    let c = match settings.c {
        Some(c) => c,
        None => expansion_constant(model, domain)?,
    };
    if !(c > 1.0) {
        return Err(Error::input(format!("model is not expanding on the domain: min |f'| = {c}")));
    }
    let t_max = *settings.horizons.iter().max().unwrap();
    let state = PolicyState::new(policy, model)?;

    let run = closed_loop_run(model, &state, channel, t_max, settings.trials, settings.seed)?;
    let averaged_paths: Vec<TrialPath> = run
        .ensemble
        .trajectories
        .iter()
        .zip(&run.logs)
        .map(|(tr, log)| TrialPath {
            x0: tr.state(0)[0],
            controls: log.iter().map(|r| r.control[0]).collect(),
            noise: (0..t_max).map(|t| tr.noise(t)[0]).collect(),
        })
        .collect();

    let mut noise_rng = stream_rng(settings.seed, Purpose::Estimation, 0);
    let fixed_noise: Vec<f64> = (0..t_max).map(|_| model.noise().sample(&mut noise_rng)).collect();
    channel.validate()?;
    state.check_channel(channel)?;
    let fixed_paths = (0..settings.trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(settings.seed, Purpose::Estimation, 1 + i as u64);
            let x0 = model.init().sample(&mut rng);
            let mut x = x0;
            let mut st = state.clone();
            let mut controls = Vec::with_capacity(t_max);
            for (t, w) in fixed_noise.iter().enumerate() {
                let step = st.step(&[x], channel, &mut rng).map_err(|e| e.at_step(t))?;
                x = model.step(&[x], &Control::additive(step.control.clone()), &[*w]).map_err(|e| e.at_step(t))?[0];
                controls.push(step.control[0]);
                st = step.next;
            }
            Ok(TrialPath { x0, controls, noise: fixed_noise.clone() })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut seen = HashSet::new();
    let mut centers = Vec::new();
    for p in &averaged_paths {
        if seen.insert(p.controls.iter().map(|v| v.to_bits()).collect::<Vec<u64>>()) {
            let s = conditioned_set(model, &p.controls, &p.noise, settings.b, settings.r_star, t_max, domain, c, None)?;
            centers.extend(s.midpoint);
        }
    }
    Ok(EstimationReport {
        c,
        domain,
        centers,
        averaged: summarize(model, &averaged_paths, settings, domain, c)?,
        fixed: summarize(model, &fixed_paths, settings, domain, c)?,
        note: MODE_NOTE.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Distribution;

    fn doubling(noise: Distribution) -> SystemModel {
        SystemModel::additive(Drift::scalar_linear(2.0), noise, Distribution::Uniform { low: -1.0, high: 1.0 }).unwrap()
    }

    #[test]
    fn noise_free_doubling_sets() {
        let m = doubling(Distribution::Zero);
        let z = [0.0; 8];
        let s = conditioned_set(&m, &z, &z, 1.0, 0.0, 1, (-4.0, 4.0), 2.0, None).unwrap();
        let (a, b) = s.interval.unwrap();
        assert!((a + 1.0).abs() <= s.resolution && (b - 1.0).abs() <= s.resolution);
        assert!(s.midpoint.unwrap().abs() <= s.resolution);
        let s = conditioned_set(&m, &z, &z, 1.0, 0.0, 3, (-4.0, 4.0), 2.0, None).unwrap();
        let (a, b) = s.interval.unwrap();
        assert!((a + 0.25).abs() <= s.resolution && (b - 0.25).abs() <= s.resolution, "{a} {b}");
        assert!((s.diameter.unwrap() - 0.5).abs() <= 2.0 * s.resolution);
    }

    #[test]
    fn allowed_failures_widen_the_set() {
        let m = doubling(Distribution::Zero);
        let z = [0.0; 8];
        // T = 4 with one failure allowed: |x| <= 1/4 (t = 0, 1, 2 hold).
        let s = conditioned_set(&m, &z, &z, 1.0, 0.25, 4, (-4.0, 4.0), 2.0, None).unwrap();
        let (a, b) = s.interval.unwrap();
        assert!((a + 0.25).abs() <= s.resolution && (b - 0.25).abs() <= s.resolution, "{a} {b}");
    }

    #[test]
    fn zero_bound_with_noise_is_empty() {
        let m = doubling(Distribution::Gaussian { mean: 0.0, std_dev: 1.0 });
        let w = [0.3, -0.7, 1.1, 0.2];
        let s = conditioned_set(&m, &[0.0; 4], &w, 0.0, 0.0, 4, (-4.0, 4.0), 2.0, None).unwrap();
        assert!(s.is_empty());
        assert!(s.midpoint.is_none() && s.diameter.is_none());
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let m = doubling(Distribution::Zero);
        let err = conditioned_set(&m, &[0.0; 5], &[0.0; 5], 1.0, 0.0, 5, (-1.0, 1.0), 2.0, Some(0.1)).unwrap_err();
        assert!(err.to_string().contains("0.03125"), "{err}");
    }

    #[test]
    fn estimation_with_enough_rate_contracts() {
        let m = doubling(Distribution::Zero);
        let settings = EstimationSettings {
            b: 1.0,
            r_star: 0.1,
            horizons: vec![4, 8, 12],
            trials: 200,
            seed: 7,
            domain: None,
            c: None,
        };
        let r =
            estimation_experiment(&m, &ChannelModel::noiseless(4).unwrap(), &ZoomConfig::new(2), &settings).unwrap();
        assert_eq!(r.c, 2.0);
        let last = r.averaged.last().unwrap();
        assert!(last.frequency <= r.averaged[0].frequency);
        assert!(last.frequency < 0.05, "{:?}", r.averaged);
        let again =
            estimation_experiment(&m, &ChannelModel::noiseless(4).unwrap(), &ZoomConfig::new(2), &settings).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn zero_rate_gives_one_control_sequence() {
        let m = doubling(Distribution::Zero);
        let settings =
            EstimationSettings { b: 1.0, r_star: 0.1, horizons: vec![10], trials: 100, seed: 3, domain: None, c: None };
        let r =
            estimation_experiment(&m, &ChannelModel::noiseless(1).unwrap(), &ZoomConfig::new(0), &settings).unwrap();
        assert_eq!(r.averaged[0].distinct_controls, 1);
        assert_eq!(r.averaged[0].control_rate, 0.0);
        assert!(r.averaged[0].frequency > 0.95);
    }
}
