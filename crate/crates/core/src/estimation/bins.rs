//! Bins around estimator centers: B (all), C (disjoint subcollection), D (C plus
//! leftover), E (groups of `L` consecutive D sets), and the quantities built on them.

use serde::Serialize;

use crate::combinatorics::{disjoint_subcollection, measure, merge_intervals};
use crate::error::{Error, Result};
use crate::models::Distribution;

pub type Pieces = Vec<(f64, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineChecks {
    pub c_disjoint: bool,
    pub d_disjoint: bool,
    pub e_partition: bool,
    pub n3_formula: bool,
    /// `m(M_T) <= 2 n3 L ρ_T`.
    pub mt_bound: bool,
    /// `m(D_k \ C_k) <= m(C_k)` for every `k`.
    pub leftover_bound: bool,
    /// `m(E_n) >= L ρ_T` for every full group.
    pub e_floor: bool,
}

impl PipelineChecks {
    pub fn all(&self) -> bool {
        self.c_disjoint
            && self.d_disjoint
            && self.e_partition
            && self.n3_formula
            && self.mt_bound
            && self.leftover_bound
            && self.e_floor
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinPipelineResult {
    pub centers: Vec<f64>,
    pub radius: f64,
    /// Bin length `ρ_T = 2 * radius`.
    pub rho_t: f64,
    pub group_size: usize,
    pub support: (f64, f64),
    /// Bins kept (fully inside the support), in input order of their centers.
    pub b_bins: Vec<(f64, f64)>,
    /// Input positions of centers whose bin left the support.
    pub dropped: Vec<usize>,
    /// Indices into `b_bins` of the selected C bins, by left endpoint.
    pub c_indices: Vec<usize>,
    pub c_bins: Vec<(f64, f64)>,
    pub d_sets: Vec<Pieces>,
    pub e_groups: Vec<Pieces>,
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub m_t: Pieces,
    pub m_bar: Pieces,
    pub measure_m_t: f64,
    pub measure_m_bar: f64,
    pub e_measures: Vec<f64>,
    /// `[p_min m(.), p_max m(.)]` enclosure of `π0(M_T)`.
    pub pi0_m_t_bounds: (f64, f64),
    /// `P(i) = π0(E_i)`, from the initial law if supplied, else uniform on the support.
    pub group_probabilities: Vec<f64>,
    pub group_probability_bounds: Vec<(f64, f64)>,
    pub coupling_beta: f64,
    pub checks: PipelineChecks,
}

fn subtract(a: &[(f64, f64)], b: &[(f64, f64)]) -> Pieces {
    let b = merge_intervals(b);
    let mut out = Vec::new();
    for &(lo, hi) in a {
        let mut cur = lo;
        for &(blo, bhi) in &b {
            if bhi <= cur || blo >= hi {
                continue;
            }
            if blo > cur {
                out.push((cur, blo));
            }
            cur = cur.max(bhi);
            if cur >= hi {
                break;
            }
        }
        if cur < hi {
            out.push((cur, hi));
        }
    }
    out
}

fn intersect(a: &[(f64, f64)], lo: f64, hi: f64) -> Pieces {
    a.iter()
        .filter_map(|&(x, y)| {
            let (x, y) = (x.max(lo), y.min(hi));
            (y > x).then_some((x, y))
        })
        .collect()
}

fn pairwise_disjoint(sets: &[Pieces]) -> bool {
    let total: f64 = sets.iter().map(|s| measure(&merge_intervals(s))).sum();
    let all: Pieces = sets.iter().flatten().copied().collect();
    let union = measure(&merge_intervals(&all));
    (total - union).abs() <= 1e-12 * (1.0 + union)
}

/// Runs the B to E construction for estimator `centers`.
pub fn bin_pipeline(
    centers: &[f64],
    radius: f64,
    group_size: usize,
    support: (f64, f64),
    p_min: f64,
    p_max: f64,
    init: Option<&Distribution>,
) -> Result<BinPipelineResult> {
    if !(p_min > 0.0) || !(p_max >= p_min) || !p_max.is_finite() {
        return Err(Error::input(format!("need 0 < p_min <= p_max < inf, got p_min={p_min}, p_max={p_max}")));
    }
    if group_size == 0 {
        return Err(Error::input("group size L must be at least 1"));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::input(format!("bin radius must be positive, got {radius}")));
    }
    let (k_lo, k_hi) = support;
    if !(k_lo < k_hi) || !k_lo.is_finite() || !k_hi.is_finite() {
        return Err(Error::input("support K must be a bounded interval with low < high"));
    }
    if centers.iter().any(|c| !c.is_finite()) {
        return Err(Error::input("centers must be finite"));
    }
    let mut b_bins = Vec::new();
    let mut dropped = Vec::new();
    for (i, &c) in centers.iter().enumerate() {
        let bin = (c - radius, c + radius);
        if bin.0 >= k_lo && bin.1 <= k_hi {
            b_bins.push(bin);
        } else {
            dropped.push(i);
        }
    }
    if b_bins.is_empty() {
        return Err(Error::input("no bin lies fully inside the support"));
    }
    let rho_t = 2.0 * radius;
    let sel = disjoint_subcollection(&b_bins)?;
    let c_indices = sel.selected.clone();
    let c_bins: Vec<(f64, f64)> = c_indices.iter().map(|&i| b_bins[i]).collect();
    let n1 = b_bins.len();
    let n2 = c_bins.len();
    let d_sets: Vec<Pieces> = (0..n2)
        .map(|k| {
            let mut d = vec![c_bins[k]];
            if k + 1 < n2 {
                d.extend(sel.leftovers[k].pieces.iter().copied());
            }
            merge_intervals(&d)
        })
        .collect();
    let n3 = n2 / group_size + 1;
    let e_groups: Vec<Pieces> = (0..n3)
        .map(|n| {
            let parts: Pieces =
                (n * group_size..((n + 1) * group_size).min(n2)).flat_map(|k| d_sets[k].iter().copied()).collect();
            merge_intervals(&parts)
        })
        .collect();
    let m_t = merge_intervals(&b_bins);
    // Remove D_{iL} \ C_{iL} (1-based) from the union of the groups.
    let ambiguous: Pieces = (1..=n3)
        .filter_map(|i| {
            let k = i * group_size;
            (k <= n2).then(|| subtract(&d_sets[k - 1], &[c_bins[k - 1]]))
        })
        .flatten()
        .collect();
    let e_union: Pieces = merge_intervals(&e_groups.iter().flatten().copied().collect::<Vec<_>>());
    let m_bar = subtract(&e_union, &ambiguous);
    let measure_m_t = measure(&m_t);
    let e_measures: Vec<f64> = e_groups.iter().map(|e| measure(e)).collect();
    let k_len = k_hi - k_lo;
    let group_probabilities: Vec<f64> = e_groups
        .iter()
        .map(|e| match init {
            Some(d) => intersect(e, k_lo, k_hi).iter().map(|&(a, b)| d.interval_mass(a, b)).sum(),
            None => measure(&intersect(e, k_lo, k_hi)) / k_len,
        })
        .collect();
    let group_probability_bounds = e_measures.iter().map(|m| (p_min * m, p_max * m)).collect();
    let coupling_beta = coupling_tv(&group_probabilities, n3)?;

    let d_union = measure(&merge_intervals(&d_sets.iter().flatten().copied().collect::<Vec<_>>()));
    let tol = 1e-12 * (1.0 + measure_m_t);
    let checks = PipelineChecks {
        c_disjoint: c_bins.windows(2).all(|w| w[0].1 < w[1].0),
        d_disjoint: pairwise_disjoint(&d_sets),
        e_partition: pairwise_disjoint(&e_groups) && (e_measures.iter().sum::<f64>() - d_union).abs() <= tol,
        n3_formula: n3 == n2 / group_size + 1,
        mt_bound: measure_m_t <= 2.0 * (n3 * group_size) as f64 * rho_t + tol,
        leftover_bound: (0..n2).all(|k| measure(&d_sets[k]) - rho_t <= rho_t + tol),
        e_floor: (0..n3)
            .filter(|n| (n + 1) * group_size <= n2)
            .all(|n| e_measures[n] >= group_size as f64 * rho_t - tol),
    };
    Ok(BinPipelineResult {
        centers: centers.to_vec(),
        radius,
        rho_t,
        group_size,
        support,
        b_bins,
        dropped,
        c_indices,
        c_bins,
        d_sets,
        e_groups,
        n1,
        n2,
        n3,
        measure_m_bar: measure(&m_bar),
        m_t,
        m_bar,
        measure_m_t,
        e_measures,
        pi0_m_t_bounds: (p_min * measure_m_t, p_max * measure_m_t),
        group_probabilities,
        group_probability_bounds,
        coupling_beta,
        checks,
    })
}

/// `1 - sum_i min(P(i), 1/n)`, the disagreement probability of the best coupling
/// of `P` with the uniform law on `n` points. `P` may be a sub-probability.
pub fn coupling_tv(p: &[f64], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::input("uniform support size must be at least 1"));
    }
    if let Some(v) = p.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::input(format!("probabilities must be non-negative, got {v}")));
    }
    let total: f64 = p.iter().sum();
    if total > 1.0 + 1e-9 {
        return Err(Error::input(format!("probabilities sum to {total} > 1")));
    }
    let u = 1.0 / n as f64;
    Ok((1.0 - p.iter().take(n).map(|v| v.min(u)).sum::<f64>()).max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Step5 {
    pub value: f64,
    /// `value < 1`.
    pub contradiction: bool,
    pub coupling_term: f64,
    pub grouping_term: f64,
    pub estimation_term: f64,
    /// Extra term for the truncated-support variant, `0` when `epsilon = 0`.
    pub tail_term: f64,
}

/// Asymptotic error bound of the auxiliary code; `epsilon > 0` adds the
/// truncated-support term.
pub fn step5_feasibility(
    p_min: f64,
    p_max: f64,
    r_star: f64,
    alpha: f64,
    group_size: usize,
    epsilon: f64,
) -> Result<Step5> {
    if !(p_min > 0.0 && p_max >= p_min && p_max.is_finite()) {
        return Err(Error::input(format!("need 0 < p_min <= p_max < inf, got {p_min}, {p_max}")));
    }
    if !(alpha > 0.0 && alpha < r_star && r_star < 1.0 / 3.0) {
        return Err(Error::input(format!("need 0 < alpha < r_star < 1/3, got alpha={alpha}, r_star={r_star}")));
    }
    if group_size == 0 {
        return Err(Error::input("L must be at least 1"));
    }
    if !(epsilon >= 0.0 && epsilon < 1.0 - alpha / r_star) {
        return Err(Error::input(format!("epsilon must lie in [0, 1 - alpha/r_star), got {epsilon}")));
    }
    let ratio = p_max / p_min;
    let coupling_term = 1.0 - 0.5 / ratio * (r_star - alpha) / r_star;
    let grouping_term = ratio * ratio / (2.0 * group_size as f64);
    let estimation_term = 2.0 * ratio * alpha / (r_star - alpha);
    let tail_term = 2.0 * epsilon * ratio / (1.0 - alpha / r_star - epsilon);
    let value = coupling_term + grouping_term + estimation_term + tail_term;
    Ok(Step5 { value, contradiction: value < 1.0, coupling_term, grouping_term, estimation_term, tail_term })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailRatio {
    pub epsilon: f64,
    /// `K_ε`.
    pub interval: (f64, f64),
    pub tail_mass: f64,
    pub density_inf: f64,
    pub ratio: f64,
}

/// `π0(R \ K_ε) / essinf_{K_ε} p` for the symmetric quantile interval `K_ε` of mass `1 - ε`.
///
/// Compactly supported laws use `K_ε = supp π0`, so the tail vanishes.
pub fn tail_ratio(density: &Distribution, eps_grid: &[f64]) -> Result<Vec<TailRatio>> {
    density.validate()?;
    if matches!(density, Distribution::Zero | Distribution::PointMass { .. }) {
        return Err(Error::capability(format!("{} has no Lebesgue density", density.name())));
    }
    eps_grid
        .iter()
        .map(|&eps| {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(Error::input(format!("epsilon must lie in (0, 1), got {eps}")));
            }
            let interval = if density.is_compactly_supported() {
                density.support()
            } else {
                (density.quantile(eps / 2.0)?, density.quantile(1.0 - eps / 2.0)?)
            };
            let tail_mass = if density.is_compactly_supported() {
                0.0
            } else {
                density.cdf(interval.0) + density.upper_tail(interval.1)
            };
            let density_inf = density_inf(density, interval);
            if !(density_inf > 0.0) {
                return Err(Error::numeric(format!("density vanishes on K_eps for eps={eps}")));
            }
            Ok(TailRatio { epsilon: eps, interval, tail_mass, density_inf, ratio: tail_mass / density_inf })
        })
        .collect()
}

// Unimodal families attain the infimum at an endpoint; the interior grid guards the rest.
fn density_inf(d: &Distribution, (a, b): (f64, f64)) -> f64 {
    let pdf = |x: f64| d.density(x).unwrap_or(0.0);
    let mut m = pdf(a).min(pdf(b));
    for i in 1..256 {
        m = m.min(pdf(a + (b - a) * i as f64 / 256.0));
    }
    m
}
