//! Closed-form drifts for additive models `x' = f(x) + u + w`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Evaluable drift `f`. Logs are base 2 throughout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Drift {
    /// `f(x) = A x`, rows of `A` given in order.
    Linear { matrix: Vec<Vec<f64>> },
    /// Scalar polynomial `f(x) = sum_k c_k x^k`.
    Polynomial { coefficients: Vec<f64> },
    /// Odd scalar map with `f(0) = 0` and derivative
    /// `2` on `|x| <= 1`, `2^(1/sqrt|x|)` beyond.
    InverseSqrtExpanding,
}

impl Drift {
    pub fn scalar_linear(a: f64) -> Self {
        Drift::Linear { matrix: vec![vec![a]] }
    }

    pub fn diagonal(entries: &[f64]) -> Self {
        let n = entries.len();
        let matrix = (0..n).map(|i| (0..n).map(|j| if i == j { entries[i] } else { 0.0 }).collect()).collect();
        Drift::Linear { matrix }
    }

    /// State dimension the drift acts on.
    pub fn dimension(&self) -> usize {
        match self {
            Drift::Linear { matrix } => matrix.len(),
            Drift::Polynomial { .. } | Drift::InverseSqrtExpanding => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Drift::Linear { matrix } => {
                let n = matrix.len();
                if n == 0 {
                    return Err(Error::input("drift.matrix must be non-empty"));
                }
                if let Some((i, row)) = matrix.iter().enumerate().find(|(_, r)| r.len() != n) {
                    return Err(Error::input(format!(
                        "drift.matrix must be square: row {i} has {} entries, expected {n}",
                        row.len()
                    )));
                }
                if matrix.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::input("drift.matrix entries must be finite"));
                }
                Ok(())
            }
            Drift::Polynomial { coefficients } => {
                if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) {
                    Err(Error::input("drift.coefficients must be a non-empty list of finite numbers"))
                } else {
                    Ok(())
                }
            }
            Drift::InverseSqrtExpanding => Ok(()),
        }
    }

    pub fn matrix(&self) -> Option<DMatrix<f64>> {
        match self {
            Drift::Linear { matrix } => {
                let n = matrix.len();
                Some(DMatrix::from_fn(n, n, |i, j| matrix[i][j]))
            }
            _ => None,
        }
    }

    /// Writes `f(x)` into `out`.
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Drift::Linear { matrix } => {
                for (o, row) in out.iter_mut().zip(matrix) {
                    *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
                }
            }
            Drift::Polynomial { coefficients } => out[0] = horner(coefficients, x[0]),
            Drift::InverseSqrtExpanding => out[0] = inverse_sqrt_expanding(x[0]),
        }
    }

    pub fn eval_scalar(&self, x: f64) -> f64 {
        let mut out = [0.0];
        self.eval(&[x], &mut out);
        out[0]
    }

    /// `log2 |det Df(x)|`. `linear_logdet` is the precomputed constant for
    /// linear drifts.
    pub(crate) fn logdet(&self, x: &[f64], linear_logdet: Option<f64>) -> f64 {
        match self {
            Drift::Linear { .. } => linear_logdet.expect("linear drift carries its log-determinant"),
            Drift::Polynomial { coefficients } => {
                let deriv: Vec<f64> = coefficients.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect();
                horner(&deriv, x[0]).abs().log2()
            }
            Drift::InverseSqrtExpanding => {
                let a = x[0].abs();
                if a <= 1.0 {
                    1.0
                } else {
                    1.0 / a.sqrt()
                }
            }
        }
    }
}

fn horner(coefficients: &[f64], x: f64) -> f64 {
    coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

// 10-point Gauss-Legendre nodes and weights on [-1, 1].
const GL_NODES: [f64; 5] = [
    0.148_874_338_981_631_2,
    0.433_395_394_129_247_2,
    0.679_409_568_299_024_4,
    0.865_063_366_688_984_5,
    0.973_906_528_517_171_7,
];
const GL_WEIGHTS: [f64; 5] = [
    0.295_524_224_714_752_9,
    0.269_266_719_309_996_4,
    0.219_086_362_515_982,
    0.149_451_349_150_580_6,
    0.066_671_344_308_688_1,
];

fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (&node, &w) in GL_NODES.iter().zip(&GL_WEIGHTS) {
        acc += w * (f(mid - half * node) + f(mid + half * node));
    }
    acc * half
}

/// `f(x) = 2x` on `[-1, 1]`, `sign(x) (2 + int_1^|x| 2^(1/sqrt s) ds)` beyond.
///
/// The integral is taken in the variable `v = sqrt(s)` over geometric panels,
/// where the integrand `2 v 2^(1/v)` is smooth.
fn inverse_sqrt_expanding(x: f64) -> f64 {
    let a = x.abs();
    if a <= 1.0 {
        return 2.0 * x;
    }
    let v_end = a.sqrt();
    let integrand = |v: f64| 2.0 * v * (1.0 / v).exp2();
    let mut lo = 1.0;
    let mut total = 0.0;
    while lo < v_end {
        let hi = (lo * 1.5).min(v_end);
        total += gauss_legendre(integrand, lo, hi);
        lo = hi;
    }
    x.signum() * (2.0 + total)
}
