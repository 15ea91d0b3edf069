//! Finite-horizon minima of the log-determinant cocycle on a constant invariant block.

use nalgebra::DMatrix;
use serde::Serialize;

use super::{BoundReport, Certification, Theorem};
use crate::error::{Error, Result};
use crate::models::SemilinearModel;

/// Default branch-and-bound node budget.
pub const DEFAULT_NODE_BUDGET: u64 = 50_000_000;

const SUPERADDITIVITY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CocycleResult {
    pub block: Vec<usize>,
    /// `a_n` for `n = 1, 2, ...`, in bits.
    pub a_n: Vec<f64>,
    /// `a_n / n`.
    pub rates: Vec<f64>,
    /// A minimizing control sequence per `n`, as label indices.
    pub minimizers: Vec<Vec<usize>>,
    /// `max_n a_n / n` before clamping.
    pub certified_rate: f64,
    /// Largest gap between `a_n` and `log2|det|` of the explicit block product along the minimizer.
    pub product_discrepancy: f64,
    /// Search budget ran out before `n_max`.
    pub partial: bool,
    pub nodes: u64,
    pub report: BoundReport,
}

struct Search<'a> {
    steps: &'a [(usize, f64)],
    min_step: f64,
    n: usize,
    best: f64,
    best_seq: Vec<usize>,
    prefix: Vec<usize>,
    nodes: u64,
    budget: u64,
}

impl Search<'_> {
    fn dfs(&mut self, partial: f64) -> bool {
        self.nodes += 1;
        if self.nodes > self.budget {
            return false;
        }
        let depth = self.prefix.len();
        if depth == self.n {
            if partial < self.best {
                self.best = partial;
                self.best_seq = self.prefix.clone();
            }
            return true;
        }
        for &(mode, v) in self.steps {
            let s = partial + v;
            // Any completion adds at least (remaining) * min_step.
            if s + (self.n - depth - 1) as f64 * self.min_step >= self.best {
                continue;
            }
            self.prefix.push(mode);
            let ok = self.dfs(s);
            self.prefix.pop();
            if !ok {
                return false;
            }
        }
        true
    }
}

fn block_logdet(m: &DMatrix<f64>) -> f64 {
    m.determinant().abs().log2()
}

/// Computes `a_n = min_{ū in U^n} log2|det Φ(n, ū)|_block|` for `n <= n_max` by
/// exhaustive branch and bound, and certifies `max_n a_n / n` as a lower bound
/// on the limit rate via superadditivity.
pub fn cocycle_rate_lower(
    model: &SemilinearModel,
    block: &[usize],
    n_max: usize,
    node_budget: Option<u64>,
) -> Result<CocycleResult> {
    if n_max == 0 {
        return Err(Error::input("horizon n_max must be at least 1"));
    }
    model.check_invariant_block(block)?;
    let budget = node_budget.unwrap_or(DEFAULT_NODE_BUDGET);
    let blocks: Vec<DMatrix<f64>> = (0..model.alphabet_size()).map(|u| model.block_matrix(u, block)).collect();
    let mut steps: Vec<(usize, f64)> = blocks.iter().enumerate().map(|(u, b)| (u, block_logdet(b))).collect();
    if steps.iter().any(|(_, v)| !v.is_finite()) {
        return Err(Error::numeric("block restriction is singular or overflowed"));
    }
    steps.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let min_step = steps[0].1;

    let mut a_n = Vec::new();
    let mut minimizers = Vec::new();
    let mut nodes = 0u64;
    let mut partial = false;
    let mut discrepancy: f64 = 0.0;
    for n in 1..=n_max {
        let mut s = Search {
            steps: &steps,
            min_step,
            n,
            best: f64::INFINITY,
            best_seq: Vec::new(),
            prefix: Vec::with_capacity(n),
            nodes: 0,
            budget: budget.saturating_sub(nodes),
        };
        let complete = s.dfs(0.0);
        nodes += s.nodes;
        if !complete {
            partial = true;
            break;
        }
        let product = s.best_seq.iter().fold(DMatrix::identity(block.len(), block.len()), |acc, &u| &blocks[u] * acc);
        discrepancy = discrepancy.max((block_logdet(&product) - s.best).abs());
        a_n.push(s.best);
        minimizers.push(s.best_seq);
    }
    if a_n.is_empty() {
        return Err(Error::numeric(format!("node budget {budget} exhausted before n = 1 finished")));
    }
    for i in 0..a_n.len() {
        for j in 0..a_n.len() - i - 1 {
            // a_{(i+1)+(j+1)} at index i+j+1.
            let lhs = a_n[i + j + 1];
            if lhs < a_n[i] + a_n[j] - SUPERADDITIVITY_SLACK {
                return Err(Error::Invariant(format!(
                    "superadditivity violated: a_{} = {lhs} < a_{} + a_{} = {}",
                    i + j + 2,
                    i + 1,
                    j + 1,
                    a_n[i] + a_n[j]
                )));
            }
        }
    }
    let rates: Vec<f64> = a_n.iter().enumerate().map(|(i, a)| a / (i + 1) as f64).collect();
    let certified_rate = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut report = BoundReport::new(Theorem::Cocycle, certified_rate, Certification::CertifiedLowerBound)
        .param("n_max", a_n.len() as f64)
        .param("alphabet", model.alphabet_size() as f64)
        .param("block_size", block.len() as f64);
    if partial {
        report = report
            .note(format!("search budget exhausted; rates certified up to n = {} of requested {n_max}", a_n.len()));
    }
    Ok(CocycleResult {
        block: block.to_vec(),
        a_n,
        rates,
        minimizers,
        certified_rate,
        product_discrepancy: discrepancy,
        partial,
        nodes,
        report,
    })
}

/// Sum of the strictly positive block rates.
pub fn selgrade_sum(block_rates: &[f64]) -> Result<BoundReport> {
    if block_rates.iter().any(|r| r.is_nan()) {
        return Err(Error::input("block rates must not be NaN"));
    }
    let positive: Vec<f64> = block_rates.iter().copied().filter(|r| *r > 0.0).collect();
    let raw: f64 = positive.iter().sum();
    Ok(BoundReport::new(Theorem::Selgrade, raw, Certification::CertifiedLowerBound)
        .param("blocks", block_rates.len() as f64)
        .param("positive_blocks", positive.len() as f64))
}
