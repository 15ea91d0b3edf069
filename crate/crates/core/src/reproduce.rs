//! Packaged worked examples with known answers, run by the `reproduce` verb.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::bounds::{cocycle_rate_lower, linear_bound, logdet_profile, moment_bound};
use crate::channels::{binary_entropy, dmc_capacity, ChannelModel};
use crate::combinatorics::{binomial_tail_rate, disjoint_subcollection, entropy2, sanov_rate, subset_count_rate};
use crate::error::Result;
use crate::models::{Distribution, Drift, SemilinearModel, SystemModel};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub expected: f64,
    pub observed: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, expected: f64, observed: f64, tolerance: f64) -> Self {
        Check { name: name.into(), expected, observed, tolerance, passed: (observed - expected).abs() <= tolerance }
    }
}

/// Profile grid for the scalar moment example.
const PROFILE_POINTS: usize = 401;
const MOMENT_GRID: usize = 400;

/// `f' = 2` on `[-1, 1]`, `2^(1/sqrt|x|)` outside, with `M = p = 1`.
pub fn moment_example() -> Result<Vec<Check>> {
    let model = SystemModel::additive(Drift::InverseSqrtExpanding, Distribution::Zero, Distribution::Zero)?;
    let r = moment_bound(logdet_profile(&model, PROFILE_POINTS), 1.0, 1.0, 100.0, MOMENT_GRID)?;
    Ok(vec![
        Check::new("moment bound: kappa*", 3.0, r.kappa_star, 1e-3),
        Check::new("moment bound: value", 2.0 / (3.0 * 3f64.sqrt()), r.value, 1e-6),
    ])
}

pub fn linear_examples() -> Result<Vec<Check>> {
    let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0, 0.5]));
    let rot = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, 1.0]);
    // Roots of λ² - tr λ + det give |λ| = sqrt(det) for a complex pair.
    let (tr, det): (f64, f64) = (rot.trace(), rot.determinant());
    let pair_oracle = if tr * tr < 4.0 * det { 2.0 * det.sqrt().log2().max(0.0) } else { f64::NAN };
    Ok(vec![
        Check::new("linear bound: diag(2, 3, 1/2)", 6f64.log2(), linear_bound(&diag)?.value, 1e-9),
        Check::new("linear bound: eigenpair 1 +- i", pair_oracle, linear_bound(&rot)?.value, 1e-9),
    ])
}

pub fn semilinear_example() -> Result<Vec<Check>> {
    let family = SemilinearModel::homogeneous(
        vec!["u1".into(), "u2".into()],
        vec![DMatrix::from_element(1, 1, 2.0), DMatrix::from_element(1, 1, 3.0)],
    )?;
    let r = cocycle_rate_lower(&family, &[0], 12, None)?;
    let worst = r.rates.iter().copied().max_by(|a, b| (a - 1.0).abs().total_cmp(&(b - 1.0).abs())).unwrap_or(f64::NAN);
    Ok(vec![
        Check::new("cocycle: horizons computed", 12.0, r.rates.len() as f64, 0.0),
        Check::new("cocycle: a_n/n furthest from log 2 over n <= 12", 1.0, worst, 0.0),
    ])
}

pub fn lemma_examples() -> Result<Vec<Check>> {
    let tail = binomial_tail_rate(512, 0.25, 0.5, 0.5)?;
    let sanov = sanov_rate(0.25, 0.5, 0.5)?;
    let count = subset_count_rate(512, 0.25)?;
    let sel = disjoint_subcollection(&[(0.0, 1.0), (2.0, 3.0)])?;
    let sel2 = disjoint_subcollection(&[(-0.05, 0.05), (0.05, 0.15), (0.25, 0.35), (0.45, 0.55)])?;
    Ok(vec![
        Check::new("binomial tail rate T=512 vs large-deviation limit", sanov, tail, 0.03),
        Check::new("subset count rate T=512 vs H(0.25)", entropy2(0.25), count, 0.03),
        Check::new("disjoint intervals: both selected", 2.0, sel.selected.len() as f64, 0.0),
        Check::new("touching bins: selected count", 3.0, sel2.selected.len() as f64, 0.0),
    ])
}

pub fn capacity_example() -> Result<Vec<Check>> {
    let r = dmc_capacity(&ChannelModel::bsc(0.11)?, 1e-9)?;
    Ok(vec![Check::new("BSC(0.11) capacity", 1.0 - binary_entropy(0.11), r.capacity, 1e-6)])
}

/// All packaged examples, in a fixed order.
pub fn worked_examples() -> Result<Vec<Check>> {
    let mut out = moment_example()?;
    out.extend(linear_examples()?);
    out.extend(semilinear_example()?);
    out.extend(lemma_examples()?);
    out.extend(capacity_example()?);
    Ok(out)
}
