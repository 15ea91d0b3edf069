use serde::Serialize;

use super::ChannelModel;
use crate::error::{Error, Result};

pub const MAX_BA_ITERATIONS: usize = 100_000;
/// Cap on the accelerated update exponent.
const MAX_STEP_EXPONENT: f64 = 1024.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityReport {
    /// Capacity estimate in bits per use (the lower bracket).
    pub capacity: f64,
    /// Mutual information of the current input law.
    pub lower: f64,
    /// `max_x D(W(.|x) || q)` for the current output law.
    pub upper: f64,
    pub iterations: usize,
    pub input_distribution: Vec<f64>,
}

/// Relative entropies `D(W(.|x) || q)` in bits for every input `x`.
fn divergences(w: &[Vec<f64>], q: &[f64]) -> Vec<f64> {
    w.iter()
        .map(|row| row.iter().zip(q).filter(|(wy, _)| **wy > 0.0).map(|(wy, qy)| wy * (wy / qy).log2()).sum())
        .collect()
}

fn output_law(w: &[Vec<f64>], p: &[f64], q: &mut [f64]) {
    q.iter_mut().for_each(|v| *v = 0.0);
    for (px, row) in p.iter().zip(w) {
        for (qy, wy) in q.iter_mut().zip(row) {
            *qy += px * wy;
        }
    }
}

/// `p_x <- p_x 2^(mu (d_x - max d))`, normalized.
fn reweight(p: &[f64], d: &[f64], dmax: f64, mu: f64, out: &mut [f64]) {
    let mut z = 0.0;
    for ((o, px), dx) in out.iter_mut().zip(p).zip(d) {
        *o = px * (mu * (dx - dmax)).exp2();
        z += *o;
    }
    out.iter_mut().for_each(|o| *o /= z);
}

fn mutual_information(w: &[Vec<f64>], p: &[f64], q: &mut [f64]) -> f64 {
    output_law(w, p, q);
    p.iter().zip(divergences(w, q)).map(|(px, dx)| px * dx).sum()
}

/// Blahut–Arimoto alternating maximization with the standard max–min stopping bracket.
///
/// Each step also tries the exponent `mu > 1` on the multiplicative update and
/// keeps it when mutual information improves on the plain step. Plain steps
/// crawl when the rows of `W` are nearly equal. The bracket
/// `I(p) <= C <= max_x D(W(.|x) || q)` holds for every `p`, so the certificate is unaffected.
pub fn dmc_capacity(channel: &ChannelModel, tol: f64) -> Result<CapacityReport> {
    if !(tol > 0.0) {
        return Err(Error::input(format!("tolerance must be positive, got {tol}")));
    }
    channel.validate()?;
    let w = channel.matrix();
    let m_in = w.len();
    let m_out = w[0].len();
    let mut p = vec![1.0 / m_in as f64; m_in];
    let mut q = vec![0.0; m_out];
    let mut scratch = vec![0.0; m_out];
    let mut plain = vec![0.0; m_in];
    let mut fast = vec![0.0; m_in];
    let mut mu = 2.0;

    for iteration in 0..=MAX_BA_ITERATIONS {
        output_law(&w, &p, &mut q);
        let d = divergences(&w, &q);
        let lower: f64 = p.iter().zip(&d).map(|(px, dx)| px * dx).sum();
        let upper = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if upper - lower < tol {
            return Ok(CapacityReport {
                capacity: lower.max(0.0),
                lower: lower.max(0.0),
                upper: upper.max(0.0),
                iterations: iteration,
                input_distribution: p,
            });
        }
        reweight(&p, &d, upper, 1.0, &mut plain);
        reweight(&p, &d, upper, mu, &mut fast);
        if mutual_information(&w, &fast, &mut scratch) >= mutual_information(&w, &plain, &mut scratch) {
            std::mem::swap(&mut p, &mut fast);
            mu = (2.0 * mu).min(MAX_STEP_EXPONENT);
        } else {
            std::mem::swap(&mut p, &mut plain);
            mu = (0.5 * mu).max(2.0);
        }
    }
    Err(Error::numeric(format!("Blahut-Arimoto did not reach bracket gap {tol} within {MAX_BA_ITERATIONS} iterations")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::binary_entropy;

    #[test]
    fn bsc_examples() {
        let c = dmc_capacity(&ChannelModel::bsc(0.0).unwrap(), 1e-9).unwrap();
        assert!((c.capacity - 1.0).abs() < 1e-9);
        let c = dmc_capacity(&ChannelModel::bsc(0.5).unwrap(), 1e-9).unwrap();
        assert!(c.capacity.abs() < 1e-9);
        let c = dmc_capacity(&ChannelModel::bsc(0.11).unwrap(), 1e-7).unwrap();
        let oracle = 1.0 - binary_entropy(0.11);
        assert!((c.capacity - oracle).abs() < 1e-6);
        assert!((oracle - 0.50009).abs() < 1e-5);
    }

    #[test]
    fn z_channel_against_closed_form() {
        // Z-channel: 0 -> 0 always, 1 -> 0 with probability e.
        // C = log2(1 + (1-e) e^{e/(1-e)}).
        let e: f64 = 0.3;
        let c = ChannelModel::dmc(vec![vec![1.0, 0.0], vec![e, 1.0 - e]]).unwrap();
        let r = dmc_capacity(&c, 1e-10).unwrap();
        let oracle = (1.0 + (1.0 - e) * e.powf(e / (1.0 - e))).log2();
        assert!((r.capacity - oracle).abs() < 1e-8, "{} vs {oracle}", r.capacity);
        assert!(r.lower <= r.upper && r.upper - r.lower < 1e-10);
    }

    #[test]
    fn nearly_identical_rows_converge() {
        let c = ChannelModel::dmc(vec![
            vec![0.23077076917193817, 0.7692292308280618],
            vec![0.22511108225324916, 0.774888917746751],
        ])
        .unwrap();
        let r = dmc_capacity(&c, 1e-12).unwrap();
        // Two-input capacity by dense search over P(x = 0).
        let mut q = [0.0; 2];
        let best = (0..=200_000)
            .map(|i| mutual_information(&c.matrix(), &[i as f64 / 2e5, 1.0 - i as f64 / 2e5], &mut q))
            .fold(0.0, f64::max);
        assert!(r.capacity >= best - 1e-12 && r.capacity <= best + 1e-9, "{} vs {best}", r.capacity);
    }

    #[test]
    fn rejects_nonpositive_tolerance() {
        assert!(dmc_capacity(&ChannelModel::bsc(0.1).unwrap(), 0.0).is_err());
    }
}
