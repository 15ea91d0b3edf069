//! Spanning sets of open-loop control sequences and the growth rate of their size.
//!
//! A sample `(x_0, w̄)` is covered by a control sequence `ū` when the state
//! `x_t`, `t in [0, T-1]`, lies in `B` for a fraction at least `1 - r` of the
//! steps. A greedy set cover over a finite candidate pool then yields a
//! spanning set for a `1 - ρ` fraction of the samples.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ams::Region;
use crate::channels::ChannelModel;
use crate::error::{Error, Result};
use crate::models::{Control, SystemModel};
use crate::policies::{PolicyState, ZoomConfig};
use crate::seeding::{stream_rng, Purpose};

/// Largest candidate pool enumerated by the lattice source.
pub const MAX_LATTICE_CANDIDATES: usize = 1 << 18;

/// Minimal number of sequences for `x' = a x + u` with `π0` uniform on `B`, `ρ = r = 0`:
/// `ceil(|a|^(T-1))`.
pub fn spanning_count_oracle_affine(a: f64, b_half: f64, horizon: usize) -> Result<u64> {
    if !(a.abs() > 1.0) || !a.is_finite() {
        return Err(Error::input(format!("oracle needs |a| > 1 (count is 1 otherwise), got a={a}")));
    }
    if !(b_half > 0.0 && b_half.is_finite()) || horizon == 0 {
        return Err(Error::input("oracle needs b_half > 0 and T >= 1"));
    }
    let v = a.abs().powi(horizon as i32 - 1);
    let r = v.round();
    let count = if (v - r).abs() <= 1e-9 * v { r } else { v.ceil() };
    if count > u64::MAX as f64 {
        return Err(Error::numeric("oracle count overflows u64"));
    }
    Ok(count as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum CandidateSource {
    /// One candidate per sample: the controls the zoom policy realizes on it
    /// over a noiseless channel. The zero sequence is always added first.
    Policy { policy: ZoomConfig },
    /// Piecewise-constant inputs from `2^bits` uniform levels on
    /// `[-u_max, u_max]` per coordinate, held for `hold` steps.
    Lattice { bits: u32, u_max: f64, hold: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpanningSet {
    pub horizon: usize,
    pub region: Region,
    pub rho: f64,
    pub r: f64,
    pub samples: usize,
    pub candidates: usize,
    pub selected_indices: Vec<usize>,
    /// Selected control sequences, inputs per step.
    pub selected: Vec<Vec<Vec<f64>>>,
    pub covered: usize,
    pub covered_fraction: f64,
    /// Per sample, the best in-`B` frequency over the selected sequences.
    pub best_frequency: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpanningEstimate {
    pub count: usize,
    /// Greedy guarantee: the optimum over the same candidates is at least `count / (1 + ln n)`.
    pub lower_bracket: f64,
    pub set: SpanningSet,
}

struct Sample {
    x0: Vec<f64>,
    noise: Vec<Vec<f64>>,
}

fn draw_samples(model: &SystemModel, horizon: usize, n: usize, seed: u64) -> Vec<Sample> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, Purpose::Spanning, i as u64);
            let mut x0 = vec![0.0; model.dimension()];
            model.init().sample_into(&mut rng, &mut x0);
            let noise = (0..horizon)
                .map(|_| {
                    let mut w = vec![0.0; model.noise_dim()];
                    model.noise().sample_into(&mut rng, &mut w);
                    w
                })
                .collect();
            Sample { x0, noise }
        })
        .collect()
}

/// Steps in `[0, T-1]` with the state in `B`; divergence stops the count.
fn in_region_steps(model: &SystemModel, region: &Region, s: &Sample, controls: &[Control]) -> usize {
    let mut x = s.x0.clone();
    let mut next = vec![0.0; x.len()];
    let mut hits = 0;
    for (t, u) in controls.iter().enumerate() {
        if region.contains(&x) {
            hits += 1;
        }
        if t + 1 == controls.len() {
            break;
        }
        if model.step_into(&x, u, &s.noise[t], &mut next).is_err() {
            break;
        }
        std::mem::swap(&mut x, &mut next);
    }
    hits
}

fn policy_candidates(
    model: &SystemModel,
    config: &ZoomConfig,
    samples: &[Sample],
    horizon: usize,
) -> Result<Vec<Vec<Control>>> {
    let policy = PolicyState::new(config, model)?;
    let channel = ChannelModel::noiseless(policy.params.alphabet())?;
    let mut out = vec![vec![Control::additive(vec![0.0; model.input_dim()]); horizon]];
    let generated = samples
        .par_iter()
        .map(|s| {
            // The channel is noiseless, so no randomness is consumed.
            let mut rng = stream_rng(0, Purpose::Custom, 0);
            let mut state = policy.clone();
            let mut x = s.x0.clone();
            let mut controls = Vec::with_capacity(horizon);
            for t in 0..horizon {
                let step = state.step(&x, &channel, &mut rng).map_err(|e| e.at_step(t))?;
                let u = Control::additive(step.control);
                if t + 1 < horizon {
                    x = model.step(&x, &u, &s.noise[t]).map_err(|e| e.at_step(t))?;
                }
                controls.push(u);
                state = step.next;
            }
            Ok(controls)
        })
        .collect::<Result<Vec<_>>>()?;
    out.extend(generated);
    Ok(out)
}

fn lattice_candidates(
    model: &SystemModel,
    bits: u32,
    u_max: f64,
    hold: usize,
    horizon: usize,
) -> Result<Vec<Vec<Control>>> {
    if hold == 0 || !(u_max >= 0.0 && u_max.is_finite()) {
        return Err(Error::input("lattice needs hold >= 1 and a finite u_max >= 0"));
    }
    let m = model.input_dim();
    if m == 0 {
        return Err(Error::capability("lattice candidates need an additive control input"));
    }
    let levels = 1usize << bits;
    let blocks = horizon.div_ceil(hold);
    let count = (levels as f64).powi((blocks * m) as i32);
    if count > MAX_LATTICE_CANDIDATES as f64 {
        return Err(Error::capability(format!(
            "lattice of {count:e} candidates exceeds {MAX_LATTICE_CANDIDATES}; lower bits or raise hold"
        )));
    }
    let value = |k: usize| if levels == 1 { 0.0 } else { -u_max + 2.0 * u_max * k as f64 / (levels - 1) as f64 };
    let count = count as usize;
    Ok((0..count)
        .map(|mut idx| {
            let digits: Vec<usize> = (0..blocks * m)
                .map(|_| {
                    let d = idx % levels;
                    idx /= levels;
                    d
                })
                .collect();
            (0..horizon)
                .map(|t| {
                    let b = t / hold;
                    Control::additive((0..m).map(|j| value(digits[b * m + j])).collect())
                })
                .collect()
        })
        .collect())
}

/// Greedy spanning set over `n` samples of `(x_0, w̄)`.
#[allow(clippy::too_many_arguments)]
pub fn greedy_spanning_estimate(
    model: &SystemModel,
    region: &Region,
    horizon: usize,
    rho: f64,
    r: f64,
    samples: usize,
    source: &CandidateSource,
    seed: u64,
) -> Result<SpanningEstimate> {
    if samples == 0 || horizon == 0 {
        return Err(Error::input("need at least one sample and T >= 1"));
    }
    if !(0.0..1.0).contains(&rho) || !(0.0..1.0).contains(&r) {
        return Err(Error::input(format!("rho and r must lie in [0, 1), got rho={rho}, r={r}")));
    }
    region.validate(model.dimension())?;
    let pool = draw_samples(model, horizon, samples, seed);
    let candidates = match source {
        CandidateSource::Policy { policy } => policy_candidates(model, policy, &pool, horizon)?,
        CandidateSource::Lattice { bits, u_max, hold } => lattice_candidates(model, *bits, *u_max, *hold, horizon)?,
    };
    // Covered iff hits >= (1 - r) T, evaluated in integers.
    let need_hits = ((1.0 - r) * horizon as f64 - 1e-9).ceil() as usize;
    let words = samples.div_ceil(64);
    let coverage: Vec<Vec<u64>> = candidates
        .par_iter()
        .map(|c| {
            let mut bits = vec![0u64; words];
            for (i, s) in pool.iter().enumerate() {
                if in_region_steps(model, region, s, c) >= need_hits {
                    bits[i / 64] |= 1 << (i % 64);
                }
            }
            bits
        })
        .collect();
    let required = (((1.0 - rho) * samples as f64) - 1e-9).ceil().max(1.0) as usize;

    let mut uncovered = vec![u64::MAX; words];
    if !samples.is_multiple_of(64) {
        uncovered[words - 1] = (1u64 << (samples % 64)) - 1;
    }
    let mut covered = 0usize;
    let mut chosen = Vec::new();
    while covered < required {
        let (best, gain) = coverage
            .par_iter()
            .enumerate()
            .map(|(j, bits)| {
                (j, bits.iter().zip(&uncovered).map(|(a, b)| (a & b).count_ones() as usize).sum::<usize>())
            })
            .reduce(|| (usize::MAX, 0), |a, b| if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a });
        if gain == 0 {
            return Err(Error::CoverageUnreachable { achievable: covered, required });
        }
        for (u, b) in uncovered.iter_mut().zip(&coverage[best]) {
            *u &= !b;
        }
        covered += gain;
        chosen.push(best);
    }

    let best_frequency: Vec<f64> = pool
        .par_iter()
        .map(|s| {
            chosen.iter().map(|&j| in_region_steps(model, region, s, &candidates[j])).max().unwrap_or(0) as f64
                / horizon as f64
        })
        .collect();
    let count = chosen.len();
    let set = SpanningSet {
        horizon,
        region: region.clone(),
        rho,
        r,
        samples,
        candidates: candidates.len(),
        selected: chosen.iter().map(|&j| candidates[j].iter().map(|u| u.input.clone()).collect()).collect(),
        selected_indices: chosen,
        covered,
        covered_fraction: covered as f64 / samples as f64,
        best_frequency,
    };
    Ok(SpanningEstimate { count, lower_bracket: count as f64 / (1.0 + (samples as f64).ln()), set })
}

/// Replays every selected sequence and checks the coverage claims of a spanning set.
pub fn verify_spanning_set(model: &SystemModel, set: &SpanningSet, seed: u64) -> Result<bool> {
    let pool = draw_samples(model, set.horizon, set.samples, seed);
    let need_hits = ((1.0 - set.r) * set.horizon as f64 - 1e-9).ceil() as usize;
    let seqs: Vec<Vec<Control>> =
        set.selected.iter().map(|s| s.iter().map(|u| Control::additive(u.clone())).collect()).collect();
    let covered =
        pool.par_iter().filter(|s| seqs.iter().any(|c| in_region_steps(model, &set.region, s, c) >= need_hits)).count();
    Ok(covered == set.covered && covered as f64 >= (1.0 - set.rho) * set.samples as f64 - 1e-9)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    /// Least-squares slope of `log2(count)` against `T`, bits per step.
    pub slope: f64,
    pub intercept: f64,
    pub residuals: Vec<f64>,
    pub max_abs_residual: f64,
    pub caveat: &'static str,
}

pub const RATE_FIT_CAVEAT: &str =
    "a finite-horizon slope cannot distinguish the limit superior from the limit inferior";

pub fn entropy_rate_fit(counts: &[(usize, f64)]) -> Result<RateFit> {
    if counts.len() < 3 {
        return Err(Error::input(format!("rate fit needs at least 3 horizons, got {}", counts.len())));
    }
    if counts.iter().any(|(_, c)| !(*c >= 1.0) || !c.is_finite()) {
        return Err(Error::input("counts must be finite and at least 1"));
    }
    let xs: Vec<f64> = counts.iter().map(|(t, _)| *t as f64).collect();
    let ys: Vec<f64> = counts.iter().map(|(_, c)| c.log2()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::input("rate fit needs at least two distinct horizons"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y - (intercept + slope * x)).collect();
    let max_abs_residual = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    Ok(RateFit { slope, intercept, residuals, max_abs_residual, caveat: RATE_FIT_CAVEAT })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Distribution, Drift};

    fn affine(a: f64) -> SystemModel {
        SystemModel::additive(
            Drift::scalar_linear(a),
            Distribution::Zero,
            Distribution::Uniform { low: -1.0, high: 1.0 },
        )
        .unwrap()
    }

    #[test]
    fn oracle_examples() {
        assert_eq!(spanning_count_oracle_affine(2.0, 1.0, 1).unwrap(), 1);
        assert_eq!(spanning_count_oracle_affine(2.0, 1.0, 4).unwrap(), 8);
        assert_eq!(spanning_count_oracle_affine(3.0, 1.0, 3).unwrap(), 9);
        assert_eq!(spanning_count_oracle_affine(1.5, 1.0, 3).unwrap(), 3);
        assert!(spanning_count_oracle_affine(0.5, 1.0, 3).is_err());
    }

    #[test]
    fn greedy_within_guarantee_at_t4() {
        let m = affine(2.0);
        let b = Region::interval(-1.0, 1.0);
        let src = CandidateSource::Policy { policy: ZoomConfig::new(3) };
        let e = greedy_spanning_estimate(&m, &b, 4, 0.0, 0.0, 1000, &src, 7).unwrap();
        assert!(e.count >= 8 && (e.count as f64) <= 8.0 * (1.0 + 1000f64.ln()), "{}", e.count);
        assert!(verify_spanning_set(&m, &e.set, 7).unwrap());
        assert!(e.set.best_frequency.iter().all(|f| *f == 1.0));
    }

    #[test]
    fn trivial_cases() {
        let stable = SystemModel::additive(
            Drift::scalar_linear(0.5),
            Distribution::Zero,
            Distribution::Uniform { low: -1.0, high: 1.0 },
        )
        .unwrap();
        let b = Region::interval(-1.0, 1.0);
        let src = CandidateSource::Policy { policy: ZoomConfig { gain: Some(vec![0.5]), ..ZoomConfig::new(2) } };
        assert_eq!(greedy_spanning_estimate(&stable, &b, 6, 0.0, 0.0, 100, &src, 1).unwrap().count, 1);
        let e = greedy_spanning_estimate(&affine(2.0), &b, 6, 0.99, 0.0, 100, &src, 1).unwrap();
        assert_eq!(e.count, 1);
    }

    #[test]
    fn lattice_source_and_unreachable_cover() {
        let m = affine(2.0);
        let b = Region::interval(-1.0, 1.0);
        let src = CandidateSource::Lattice { bits: 1, u_max: 0.0, hold: 1 };
        let err = greedy_spanning_estimate(&m, &b, 4, 0.0, 0.0, 200, &src, 3).unwrap_err();
        assert!(matches!(err, Error::CoverageUnreachable { .. }));
        let src = CandidateSource::Lattice { bits: 3, u_max: 1.5, hold: 1 };
        let e = greedy_spanning_estimate(&m, &b, 3, 0.0, 0.0, 200, &src, 3).unwrap();
        assert!(e.count >= 4);
        assert!(verify_spanning_set(&m, &e.set, 3).unwrap());
    }

    #[test]
    fn rate_fit_examples() {
        let geo: Vec<(usize, f64)> = (2..=10).map(|t| (t, 2f64.powi(t as i32 - 1))).collect();
        assert!((entropy_rate_fit(&geo).unwrap().slope - 1.0).abs() < 1e-12);
        let flat: Vec<(usize, f64)> = (2..=6).map(|t| (t, 5.0)).collect();
        assert!(entropy_rate_fit(&flat).unwrap().slope.abs() < 1e-12);
        let four: Vec<(usize, f64)> = (1..=6).map(|t| (t, 4f64.powi(t as i32))).collect();
        assert!((entropy_rate_fit(&four).unwrap().slope - 2.0).abs() < 1e-12);
        assert!(entropy_rate_fit(&geo[..2]).is_err());
    }
}
