//! Binomial tail rates and the disjoint-subcollection construction for equal-length intervals.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use serde::Serialize;

use crate::error::{Error, Result};

/// Above this horizon binomial coefficients are evaluated through log-factorials.
pub const EXACT_BINOMIAL_LIMIT: usize = 10_000;

const PROB_SUM_TOLERANCE: f64 = 1e-12;

/// Binary entropy in bits.
pub fn entropy2(p: f64) -> f64 {
    crate::channels::binary_entropy(p)
}

fn log2_big(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 1000 {
        return x.to_f64().unwrap_or(f64::INFINITY).log2();
    }
    let shift = bits - 64;
    let top = (x >> shift).to_u64().unwrap_or(u64::MAX);
    (top as f64).log2() + shift as f64
}

/// `log2 C(T, t)` for `t = 0..=T`.
fn log2_binomial_row(t_max: usize) -> Vec<f64> {
    if t_max <= EXACT_BINOMIAL_LIMIT {
        let mut c = BigUint::one();
        let mut row = Vec::with_capacity(t_max + 1);
        for t in 0..=t_max {
            row.push(log2_big(&c));
            c = c * BigUint::from(t_max - t) / BigUint::from(t + 1);
        }
        row
    } else {
        let mut lf = vec![0.0; t_max + 1];
        for i in 1..=t_max {
            lf[i] = lf[i - 1] + (i as f64).log2();
        }
        (0..=t_max).map(|t| lf[t_max] - lf[t] - lf[t_max - t]).collect()
    }
}

fn log2_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let terms: Vec<f64> = terms.collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|v| (v - max).exp2()).sum::<f64>().log2()
}

fn check_params(r: f64, alpha: f64, beta: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0 && beta > 0.0 && beta < 1.0) {
        return Err(Error::input(format!("alpha and beta must lie in (0, 1), got {alpha}, {beta}")));
    }
    if (alpha + beta - 1.0).abs() > PROB_SUM_TOLERANCE {
        return Err(Error::input(format!("alpha + beta must equal 1, got {}", alpha + beta)));
    }
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::input(format!("r must lie in (0, 1], got {r}")));
    }
    Ok(())
}

fn lower_index(t: usize, r: f64) -> usize {
    ((1.0 - r) * t as f64 - 1e-9).ceil().max(0.0) as usize
}

/// `(1/T) log2 sum_{t >= ceil((1-r) T)} C(T, t) α^t β^(T-t)`.
pub fn binomial_tail_rate(t_len: usize, r: f64, alpha: f64, beta: f64) -> Result<f64> {
    check_params(r, alpha, beta)?;
    if t_len == 0 {
        return Err(Error::input("T must be at least 1"));
    }
    let row = log2_binomial_row(t_len);
    let (la, lb) = (alpha.log2(), beta.log2());
    let start = lower_index(t_len, r);
    let total = log2_sum((start..=t_len).map(|t| row[t] + t as f64 * la + (t_len - t) as f64 * lb));
    Ok(total / t_len as f64)
}

/// Large-deviation limit of [`binomial_tail_rate`].
pub fn sanov_rate(r: f64, alpha: f64, beta: f64) -> Result<f64> {
    check_params(r, alpha, beta)?;
    if beta > r {
        Ok(entropy2(r) + r * beta.log2() + (1.0 - r) * alpha.log2())
    } else {
        Ok(0.0)
    }
}

/// `(1/T) log2 #{subsets of {1..T} with at most r T elements}`, exact.
pub fn subset_count_rate(t_len: usize, r: f64) -> Result<f64> {
    if t_len == 0 || !(r > 0.0 && r <= 1.0) {
        return Err(Error::input(format!("need T >= 1 and r in (0, 1], got T={t_len}, r={r}")));
    }
    let k_max = t_len - lower_index(t_len, r);
    if t_len > EXACT_BINOMIAL_LIMIT {
        let row = log2_binomial_row(t_len);
        return Ok(log2_sum((0..=k_max).map(|k| row[k])) / t_len as f64);
    }
    let mut c = BigUint::one();
    let mut sum = BigUint::from(0u32);
    for k in 0..=k_max {
        sum += &c;
        c = c * BigUint::from(t_len - k) / BigUint::from(k + 1);
    }
    Ok(log2_big(&sum) / t_len as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Leftover {
    /// Position of the selected interval it follows, in selection order.
    pub after: usize,
    pub pieces: Vec<(f64, f64)>,
    pub measure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisjointSelection {
    pub length: f64,
    /// Indices into the input, in increasing order of left endpoint.
    pub selected: Vec<usize>,
    /// `leftovers[k]` lies between selected `k` and `k + 1`.
    pub leftovers: Vec<Leftover>,
    /// Part of the union to the right of the last selected interval.
    pub trailing: Vec<(f64, f64)>,
    pub selected_measure: f64,
    pub union_measure: f64,
}

/// Union of closed intervals as sorted disjoint pieces.
pub fn merge_intervals(intervals: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = intervals.to_vec();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (a, b) in v {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

pub fn measure(pieces: &[(f64, f64)]) -> f64 {
    pieces.iter().map(|(a, b)| b - a).sum()
}

fn clip(pieces: &[(f64, f64)], lo: f64, hi: f64) -> Vec<(f64, f64)> {
    pieces
        .iter()
        .filter_map(|&(a, b)| {
            let (a, b) = (a.max(lo), b.min(hi));
            (b > a).then_some((a, b))
        })
        .collect()
}

/// Greedy disjoint subcollection of equal-length closed intervals.
///
/// Intervals are visited by left endpoint (stable); one is taken when it
/// does not meet the last taken one. Touching endpoints count as meeting.
pub fn disjoint_subcollection(intervals: &[(f64, f64)]) -> Result<DisjointSelection> {
    if intervals.is_empty() {
        return Err(Error::input("interval collection is empty"));
    }
    if intervals.iter().any(|(a, b)| !a.is_finite() || !b.is_finite() || b < a) {
        return Err(Error::input("intervals must be finite with left <= right"));
    }
    let length = intervals[0].1 - intervals[0].0;
    let tol = 1e-12 * (1.0 + length.abs());
    if let Some(i) = intervals.iter().position(|(a, b)| ((b - a) - length).abs() > tol) {
        return Err(Error::input(format!(
            "interval {i} has length {}, expected {length}",
            intervals[i].1 - intervals[i].0
        )));
    }
    let mut order: Vec<usize> = (0..intervals.len()).collect();
    order.sort_by(|&i, &j| intervals[i].0.total_cmp(&intervals[j].0));
    let mut selected = vec![order[0]];
    for &i in &order[1..] {
        let last = intervals[*selected.last().unwrap()];
        if intervals[i].0 > last.1 {
            selected.push(i);
        }
    }
    let union = merge_intervals(intervals);
    let leftovers = selected
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let pieces = clip(&union, intervals[w[0]].1, intervals[w[1]].0);
            Leftover { after: k, measure: measure(&pieces), pieces }
        })
        .collect();
    let trailing = clip(&union, intervals[*selected.last().unwrap()].1, f64::INFINITY);
    Ok(DisjointSelection {
        length,
        selected_measure: selected.len() as f64 * length,
        union_measure: measure(&union),
        selected,
        leftovers,
        trailing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_rate_examples() {
        let r = binomial_tail_rate(4, 0.5, 0.5, 0.5).unwrap();
        assert!((r - 0.25 * (11.0f64 / 16.0).log2()).abs() < 1e-14);
        assert!(binomial_tail_rate(1, 1.0, 0.3, 0.7).unwrap().abs() < 1e-15);
        let exact = binomial_tail_rate(512, 0.25, 0.5, 0.5).unwrap();
        let limit = sanov_rate(0.25, 0.5, 0.5).unwrap();
        assert!((exact - limit).abs() < 0.03);
        assert!(binomial_tail_rate(4, 0.5, 0.5, 0.6).is_err());
        assert!(binomial_tail_rate(4, 0.0, 0.5, 0.5).is_err());
    }

    #[test]
    fn sanov_examples() {
        let v = sanov_rate(0.25, 0.5, 0.5).unwrap();
        assert!((v - (entropy2(0.25) - 1.0)).abs() < 1e-15);
        assert!((v + 0.188_721_875_540_867).abs() < 1e-12);
        assert_eq!(sanov_rate(0.5, 0.6, 0.4).unwrap(), 0.0);
        assert!((sanov_rate(1e-12, 0.5, 0.5).unwrap() + 1.0).abs() < 1e-9);
    }

    #[test]
    fn subset_rate_matches_shifted_tail() {
        for t in [10, 64, 200] {
            let a = subset_count_rate(t, 0.25).unwrap();
            let b = binomial_tail_rate(t, 0.25, 0.5, 0.5).unwrap() + 1.0;
            assert!((a - b).abs() < 1e-12, "T={t}: {a} vs {b}");
        }
        // Sum_{k<=1} C(4,k) = 5.
        assert!((subset_count_rate(4, 0.25).unwrap() - 5f64.log2() / 4.0).abs() < 1e-15);
    }

    #[test]
    fn large_t_switches_to_log_factorials() {
        let a = binomial_tail_rate(20_000, 0.25, 0.5, 0.5).unwrap();
        let limit = sanov_rate(0.25, 0.5, 0.5).unwrap();
        assert!((a - limit).abs() < 1e-3);
    }

    #[test]
    fn interval_examples() {
        let s = disjoint_subcollection(&[(0.0, 1.0), (2.0, 3.0)]).unwrap();
        assert_eq!(s.selected, vec![0, 1]);
        let s = disjoint_subcollection(&[(0.0, 1.0), (0.5, 1.5), (1.0, 2.0)]).unwrap();
        assert_eq!(s.selected, vec![0]);
        assert_eq!(s.selected_measure, 1.0);
        assert_eq!(s.union_measure, 2.0);
        let s = disjoint_subcollection(&[(0.0, 1.0); 5]).unwrap();
        assert_eq!(s.selected, vec![0]);
        assert!(disjoint_subcollection(&[(0.0, 1.0), (0.0, 2.0)]).is_err());
    }

    #[test]
    fn leftover_between_selected() {
        // Sorted: [0,1], [0.8,1.8], [1.5,2.5]. Selected 0 and 2; leftover (1, 1.5).
        let s = disjoint_subcollection(&[(1.5, 2.5), (0.0, 1.0), (0.8, 1.8)]).unwrap();
        assert_eq!(s.selected, vec![1, 0]);
        assert_eq!(s.leftovers.len(), 1);
        assert_eq!(s.leftovers[0].pieces, vec![(1.0, 1.5)]);
        assert!(s.trailing.is_empty());
    }
}
