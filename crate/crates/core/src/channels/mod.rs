//! Noiseless finite-alphabet channels and discrete memoryless channels.
//!
//! Channels are memoryless; feedback of the received symbol to the encoder is
//! handled by the closed-loop driver in [`crate::policies`].

mod capacity;
mod coding;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use capacity::{dmc_capacity, CapacityReport, MAX_BA_ITERATIONS};
pub use coding::{random_code_experiment, CodingMode, CodingReport, EXPLICIT_CODEBOOK_CAP, MAX_LOG2_CODEBOOK};

use crate::error::{Error, Result};

const ROW_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelModel {
    /// Identity channel over `alphabet` symbols.
    Noiseless { alphabet: usize },
    /// Row-stochastic transition matrix, rows indexed by input symbols.
    Dmc { matrix: Vec<Vec<f64>> },
}

impl ChannelModel {
    pub fn noiseless(alphabet: usize) -> Result<Self> {
        let c = ChannelModel::Noiseless { alphabet };
        c.validate()?;
        Ok(c)
    }

    pub fn dmc(matrix: Vec<Vec<f64>>) -> Result<Self> {
        let c = ChannelModel::Dmc { matrix };
        c.validate()?;
        Ok(c)
    }

    /// Binary symmetric channel with crossover probability `p`.
    pub fn bsc(p: f64) -> Result<Self> {
        Self::q_ary_symmetric(2, p)
    }

    /// `q`-ary symmetric channel: correct with probability `1-p`, otherwise
    /// uniformly one of the other `q-1` symbols.
    pub fn q_ary_symmetric(q: usize, p: f64) -> Result<Self> {
        if q < 2 || !(0.0..=1.0).contains(&p) {
            return Err(Error::input(format!("q-ary symmetric channel needs q >= 2 and p in [0,1], got q={q}, p={p}")));
        }
        let off = p / (q - 1) as f64;
        let matrix = (0..q).map(|i| (0..q).map(|j| if i == j { 1.0 - p } else { off }).collect()).collect();
        Self::dmc(matrix)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ChannelModel::Noiseless { alphabet } => {
                if *alphabet == 0 {
                    Err(Error::input("noiseless channel alphabet must be non-empty"))
                } else {
                    Ok(())
                }
            }
            ChannelModel::Dmc { matrix } => {
                if matrix.is_empty() {
                    return Err(Error::input("transition matrix must have at least one row"));
                }
                let m_out = matrix[0].len();
                if m_out == 0 {
                    return Err(Error::input("transition matrix must have at least one column"));
                }
                for (i, row) in matrix.iter().enumerate() {
                    if row.len() != m_out {
                        return Err(Error::input(format!(
                            "transition matrix row {i} has {} entries, expected {m_out}",
                            row.len()
                        )));
                    }
                    if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
                        return Err(Error::input(format!("transition matrix row {i} has invalid entry {v}")));
                    }
                    let s: f64 = row.iter().sum();
                    if (s - 1.0).abs() > ROW_TOLERANCE {
                        return Err(Error::input(format!("transition matrix row {i} sums to {s}, not 1")));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn input_size(&self) -> usize {
        match self {
            ChannelModel::Noiseless { alphabet } => *alphabet,
            ChannelModel::Dmc { matrix } => matrix.len(),
        }
    }

    pub fn output_size(&self) -> usize {
        match self {
            ChannelModel::Noiseless { alphabet } => *alphabet,
            ChannelModel::Dmc { matrix } => matrix[0].len(),
        }
    }

    /// `P(q' | q)`.
    pub fn transition(&self, input: usize, output: usize) -> f64 {
        match self {
            ChannelModel::Noiseless { .. } => f64::from(u8::from(input == output)),
            ChannelModel::Dmc { matrix } => matrix[input][output],
        }
    }

    /// Transition matrix, with the identity for noiseless channels.
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        match self {
            ChannelModel::Dmc { matrix } => matrix.clone(),
            ChannelModel::Noiseless { alphabet } => {
                (0..*alphabet).map(|i| (0..*alphabet).map(|j| f64::from(u8::from(i == j))).collect()).collect()
            }
        }
    }

    pub fn transmit<R: Rng + ?Sized>(&self, input: usize, rng: &mut R) -> Result<usize> {
        if input >= self.input_size() {
            return Err(Error::input(format!("symbol {input} outside input alphabet of size {}", self.input_size())));
        }
        match self {
            ChannelModel::Noiseless { .. } => Ok(input),
            ChannelModel::Dmc { matrix } => {
                let row = &matrix[input];
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (j, p) in row.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return Ok(j);
                    }
                }
                // Rounding left u above the cumulative sum; take the last symbol with mass.
                Ok(row.iter().rposition(|p| *p > 0.0).unwrap_or(row.len() - 1))
            }
        }
    }

    /// `(q, p)` when the channel is `q`-ary symmetric, including noiseless channels.
    pub fn as_q_ary_symmetric(&self) -> Option<(usize, f64)> {
        match self {
            ChannelModel::Noiseless { alphabet } => Some((*alphabet, 0.0)),
            ChannelModel::Dmc { matrix } => {
                let q = matrix.len();
                if q < 2 || matrix[0].len() != q {
                    return None;
                }
                let p: f64 = matrix[0][1..].iter().sum();
                let off = p / (q - 1) as f64;
                let ok = matrix.iter().enumerate().all(|(i, row)| {
                    row.iter().enumerate().all(|(j, v)| {
                        let target = if i == j { 1.0 - p } else { off };
                        (v - target).abs() <= 1e-12
                    })
                });
                ok.then_some((q, p))
            }
        }
    }
}

/// Binary entropy in bits.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::{stream_rng, Purpose};

    #[test]
    fn transmit_examples() {
        let mut rng = stream_rng(1, Purpose::Channel, 0);
        let c = ChannelModel::noiseless(8).unwrap();
        assert_eq!(c.transmit(3, &mut rng).unwrap(), 3);
        let c = ChannelModel::bsc(0.0).unwrap();
        assert_eq!(c.transmit(1, &mut rng).unwrap(), 1);
        let c = ChannelModel::bsc(0.5).unwrap();
        let flips = (0..100_000).filter(|_| c.transmit(0, &mut rng).unwrap() == 1).count();
        let rate = flips as f64 / 1e5;
        assert!((rate - 0.5).abs() < 0.01, "flip rate {rate}");
    }

    #[test]
    fn out_of_alphabet_rejected() {
        let mut rng = stream_rng(1, Purpose::Channel, 0);
        let c = ChannelModel::bsc(0.1).unwrap();
        assert!(matches!(c.transmit(2, &mut rng), Err(Error::Input(_))));
    }

    #[test]
    fn non_stochastic_rows_rejected() {
        assert!(ChannelModel::dmc(vec![vec![0.5, 0.6], vec![0.5, 0.5]]).is_err());
        assert!(ChannelModel::dmc(vec![vec![1.5, -0.5]]).is_err());
        assert!(ChannelModel::dmc(vec![vec![1.0], vec![0.5, 0.5]]).is_err());
    }

    #[test]
    fn recognises_symmetric_channels() {
        assert_eq!(ChannelModel::bsc(0.11).unwrap().as_q_ary_symmetric(), Some((2, 0.11)));
        assert_eq!(ChannelModel::noiseless(4).unwrap().as_q_ary_symmetric(), Some((4, 0.0)));
        let z = ChannelModel::dmc(vec![vec![1.0, 0.0], vec![0.3, 0.7]]).unwrap();
        assert_eq!(z.as_q_ary_symmetric(), None);
    }
}
