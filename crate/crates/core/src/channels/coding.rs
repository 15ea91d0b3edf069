//! Random-coding block-error experiments with maximum-likelihood decoding.
//!
//! Small codebooks (at most [`EXPLICIT_CODEBOOK_CAP`] codewords) are drawn
//! explicitly: `M` distinct codewords uniform over the input alphabet, a
//! uniform message, symbol-by-symbol transmission and exhaustive ML decoding
//! with uniform tie breaking.
//!
//! Larger codebooks are only supported over q-ary symmetric channels. There
//! the ML metric of a codeword is its number of agreements with the received
//! word, so the transmitted codeword and the channel are simulated literally
//! while the `M - 1` competitors (i.i.d. uniform codewords) enter through the
//! exact law of their agreement counts, `Binomial(n, 1/q)`. The trial then
//! draws the decoding outcome from its exact conditional success probability.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashSet;

use super::ChannelModel;
use crate::error::{Error, Result};
use crate::seeding::{stream_rng, Purpose};

/// Largest codebook that is materialized.
pub const EXPLICIT_CODEBOOK_CAP: usize = 1 << 16;
/// Largest `rate * n` (bits) accepted in the symmetric-channel mode.
pub const MAX_LOG2_CODEBOOK: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CodingMode {
    Explicit,
    SymmetricEnsemble,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CodingReport {
    pub rate: f64,
    pub blocklength: usize,
    pub trials: usize,
    pub codebook_log2: f64,
    pub mode: CodingMode,
    pub errors: usize,
    /// Empirical block-error frequency.
    pub error_rate: f64,
    /// Average of the exact per-trial error probabilities (symmetric mode only).
    pub mean_error_probability: Option<f64>,
}

pub fn random_code_experiment(
    channel: &ChannelModel,
    rate: f64,
    blocklength: usize,
    trials: usize,
    seed: u64,
) -> Result<CodingReport> {
    channel.validate()?;
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::input(format!("rate must be positive, got {rate}")));
    }
    if blocklength == 0 || trials == 0 {
        return Err(Error::input("blocklength and trials must be at least 1"));
    }
    let q = channel.input_size();
    let max_rate = (q as f64).log2();
    if rate > max_rate + 1e-12 {
        return Err(Error::input(format!(
            "rate {rate} exceeds log2 of the input alphabet ({max_rate}); codewords cannot be distinct"
        )));
    }
    let codebook_log2 = rate * blocklength as f64;
    let explicit_size = if codebook_log2 <= (EXPLICIT_CODEBOOK_CAP as f64).log2() {
        Some((codebook_log2.exp2() + 1e-9).floor().max(1.0) as usize)
    } else {
        None
    };

    let (mode, outcomes): (CodingMode, Vec<(bool, Option<f64>)>) = match explicit_size {
        Some(m) => {
            let outcomes = (0..trials)
                .into_par_iter()
                .map(|k| explicit_trial(channel, m, blocklength, &mut stream_rng(seed, Purpose::Coding, k as u64)))
                .map(|r| r.map(|e| (e, None)))
                .collect::<Result<Vec<_>>>()?;
            (CodingMode::Explicit, outcomes)
        }
        None => {
            let (q, p) = channel.as_q_ary_symmetric().ok_or_else(|| {
                Error::capability(format!(
                    "a codebook of 2^{codebook_log2:.1} words exceeds the explicit cap of {EXPLICIT_CODEBOOK_CAP} \
                     and the channel is not q-ary symmetric; use a smaller n*rate"
                ))
            })?;
            if codebook_log2 > MAX_LOG2_CODEBOOK {
                return Err(Error::capability(format!(
                    "codebook of 2^{codebook_log2:.1} words exceeds 2^{MAX_LOG2_CODEBOOK}; use a smaller n*rate"
                )));
            }
            let ensemble = SymmetricEnsemble::new(q, p, blocklength, codebook_log2.exp2());
            let outcomes = (0..trials)
                .into_par_iter()
                .map(|k| ensemble.trial(channel, &mut stream_rng(seed, Purpose::Coding, k as u64)))
                .map(|r| r.map(|(e, pe)| (e, Some(pe))))
                .collect::<Result<Vec<_>>>()?;
            (CodingMode::SymmetricEnsemble, outcomes)
        }
    };

    let errors = outcomes.iter().filter(|(e, _)| *e).count();
    let mean_error_probability = match mode {
        CodingMode::Explicit => None,
        CodingMode::SymmetricEnsemble => Some(outcomes.iter().filter_map(|(_, p)| *p).sum::<f64>() / trials as f64),
    };
    Ok(CodingReport {
        rate,
        blocklength,
        trials,
        codebook_log2,
        mode,
        errors,
        error_rate: errors as f64 / trials as f64,
        mean_error_probability,
    })
}

fn explicit_trial<R: Rng>(channel: &ChannelModel, m: usize, n: usize, rng: &mut R) -> Result<bool> {
    let q = channel.input_size();
    let mut seen = HashSet::with_capacity(m);
    let mut codebook = Vec::with_capacity(m);
    while codebook.len() < m {
        let word: Vec<usize> = (0..n).map(|_| rng.random_range(0..q)).collect();
        if seen.insert(word.clone()) {
            codebook.push(word);
        }
    }
    let message = rng.random_range(0..m);
    let received = codebook[message].iter().map(|&s| channel.transmit(s, rng)).collect::<Result<Vec<_>>>()?;

    let mut best = f64::NEG_INFINITY;
    let mut ties: Vec<usize> = Vec::new();
    for (idx, word) in codebook.iter().enumerate() {
        let ll: f64 = word.iter().zip(&received).map(|(&x, &y)| channel.transition(x, y).ln()).sum();
        if ll > best {
            best = ll;
            ties.clear();
            ties.push(idx);
        } else if ll == best {
            ties.push(idx);
        }
    }
    let decoded = ties[rng.random_range(0..ties.len())];
    Ok(decoded != message)
}

struct SymmetricEnsemble {
    q: usize,
    n: usize,
    codebook_size: f64,
    /// +1 when more agreements mean higher likelihood, -1 when fewer, 0 when all tie.
    direction: i8,
    /// `ln P(A = k)` for a uniform competitor, `A ~ Binomial(n, 1/q)`.
    log_pmf: Vec<f64>,
}

impl SymmetricEnsemble {
    fn new(q: usize, p: f64, n: usize, codebook_size: f64) -> Self {
        let match_ll = (1.0 - p).ln();
        let miss_ll = (p / (q - 1) as f64).ln();
        let direction = if match_ll > miss_ll {
            1
        } else if match_ll < miss_ll {
            -1
        } else {
            0
        };
        let mut ln_fact = vec![0.0; n + 1];
        for i in 1..=n {
            ln_fact[i] = ln_fact[i - 1] + (i as f64).ln();
        }
        let pa = 1.0 / q as f64;
        let log_pmf = (0..=n)
            .map(|k| ln_fact[n] - ln_fact[k] - ln_fact[n - k] + k as f64 * pa.ln() + (n - k) as f64 * (1.0 - pa).ln())
            .collect();
        SymmetricEnsemble { q, n, codebook_size, direction, log_pmf }
    }

    fn mass(&self, ks: impl Iterator<Item = usize>) -> f64 {
        let terms: Vec<f64> = ks.map(|k| self.log_pmf[k]).collect();
        let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return 0.0;
        }
        (max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()).exp()
    }

    /// Exact probability that ML decoding succeeds given the true codeword has `a` agreements.
    fn success_probability(&self, a: usize) -> f64 {
        let (better, tie) = match self.direction {
            1 => (self.mass(a + 1..=self.n), self.mass(a..=a)),
            -1 => (self.mass(0..a), self.mass(a..=a)),
            _ => (0.0, 1.0),
        };
        let m = self.codebook_size;
        let none_better = ((m - 1.0) * (-better).ln_1p()).exp();
        let pi = if better < 1.0 { (tie / (1.0 - better)).min(1.0) } else { 1.0 };
        // E[1 / (K + 1)] for K ~ Binomial(M - 1, pi).
        let tie_share = if pi == 0.0 {
            1.0
        } else if pi == 1.0 {
            1.0 / m
        } else {
            -(m * (-pi).ln_1p()).exp_m1() / (m * pi)
        };
        (none_better * tie_share).clamp(0.0, 1.0)
    }

    fn trial<R: Rng>(&self, channel: &ChannelModel, rng: &mut R) -> Result<(bool, f64)> {
        let mut agreements = 0;
        for _ in 0..self.n {
            let x = rng.random_range(0..self.q);
            if channel.transmit(x, rng)? == x {
                agreements += 1;
            }
        }
        let p_err = 1.0 - self.success_probability(agreements);
        Ok((rng.random::<f64>() < p_err, p_err))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_half_rate_is_error_free() {
        let c = ChannelModel::noiseless(2).unwrap();
        let r = random_code_experiment(&c, 0.5, 8, 200, 1).unwrap();
        assert_eq!(r.mode, CodingMode::Explicit);
        assert_eq!(r.errors, 0);
    }

    #[test]
    fn useless_channel_explicit_errors_are_frequent() {
        let c = ChannelModel::bsc(0.5).unwrap();
        let r = random_code_experiment(&c, 0.5, 8, 400, 2).unwrap();
        // 16 codewords, decoding is a uniform guess: error 15/16.
        assert!((r.error_rate - 15.0 / 16.0).abs() < 0.05, "{}", r.error_rate);
    }

    #[test]
    fn symmetric_mode_matches_explicit_on_overlap() {
        // Same channel and codebook size in both modes; agreement up to
        // Monte Carlo noise and the with/without replacement difference.
        let c = ChannelModel::bsc(0.11).unwrap();
        let explicit = random_code_experiment(&c, 0.5, 24, 400, 3).unwrap();
        let ens = SymmetricEnsemble::new(2, 0.11, 24, 2f64.powi(12));
        let mut rng = stream_rng(3, Purpose::Custom, 0);
        let mean: f64 = (0..4000).map(|_| ens.trial(&c, &mut rng).unwrap().1).sum::<f64>() / 4000.0;
        assert!((explicit.error_rate - mean).abs() < 0.07, "{} vs {mean}", explicit.error_rate);
    }

    #[test]
    fn unsupported_large_codebook() {
        let z = ChannelModel::dmc(vec![vec![1.0, 0.0], vec![0.2, 0.8]]).unwrap();
        assert!(matches!(random_code_experiment(&z, 0.5, 100, 10, 1), Err(Error::Capability(_))));
    }

    #[test]
    fn rate_above_alphabet_rejected() {
        let c = ChannelModel::noiseless(2).unwrap();
        assert!(matches!(random_code_experiment(&c, 1.5, 8, 10, 1), Err(Error::Input(_))));
    }
}
