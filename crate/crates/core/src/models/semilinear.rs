//! Inhomogeneous semilinear systems `x' = A(u) x + B v + w` over a finite
//! control alphabet.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SemilinearModel {
    labels: Vec<String>,
    matrices: Vec<DMatrix<f64>>,
    input_matrix: DMatrix<f64>,
}

impl SemilinearModel {
    /// Builds the model; every `A(u)` must be square, of common size and invertible.
    pub fn new(labels: Vec<String>, matrices: Vec<DMatrix<f64>>, input_matrix: DMatrix<f64>) -> Result<Self> {
        if labels.is_empty() || labels.len() != matrices.len() {
            return Err(Error::input(format!(
                "semilinear model needs one matrix per control label ({} labels, {} matrices)",
                labels.len(),
                matrices.len()
            )));
        }
        let n = matrices[0].nrows();
        for (label, a) in labels.iter().zip(&matrices) {
            if a.nrows() != n || a.ncols() != n {
                return Err(Error::input(format!(
                    "matrix for control '{label}' must be {n}x{n}, got {}x{}",
                    a.nrows(),
                    a.ncols()
                )));
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::input(format!("matrix for control '{label}' has non-finite entries")));
            }
            let det = a.determinant();
            if det == 0.0 || !det.is_finite() {
                return Err(Error::input(format!("matrix for control '{label}' is not invertible")));
            }
        }
        if input_matrix.nrows() != n {
            return Err(Error::input(format!("input matrix must have {n} rows, got {}", input_matrix.nrows())));
        }
        Ok(SemilinearModel { labels, matrices, input_matrix })
    }

    /// Convenience constructor for models without additive control (`M = 0`).
    pub fn homogeneous(labels: Vec<String>, matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = matrices.first().map_or(0, |m| m.nrows());
        Self::new(labels, matrices, DMatrix::zeros(n, 0))
    }

    pub fn dimension(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn alphabet_size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn matrix(&self, mode: usize) -> &DMatrix<f64> {
        &self.matrices[mode]
    }

    pub fn input_matrix(&self) -> &DMatrix<f64> {
        &self.input_matrix
    }

    pub fn input_dim(&self) -> usize {
        self.input_matrix.ncols()
    }

    /// `log2 |det A(u)|`.
    pub fn mode_logdet(&self, mode: usize) -> f64 {
        self.matrices[mode].determinant().abs().log2()
    }

    pub(crate) fn apply(&self, mode: usize, x: &[f64], v: &[f64], w: &[f64], out: &mut [f64]) {
        let a = &self.matrices[mode];
        let n = a.nrows();
        for (i, o) in out.iter_mut().enumerate().take(n) {
            let mut acc = w[i];
            for j in 0..n {
                acc += a[(i, j)] * x[j];
            }
            for (k, vk) in v.iter().enumerate() {
                acc += self.input_matrix[(i, k)] * vk;
            }
            *o = acc;
        }
    }

    /// Transition matrix `A(u_{t-1}) ... A(u_0)` of the homogeneous system.
    pub fn transition(&self, modes: &[usize]) -> DMatrix<f64> {
        let n = self.dimension();
        modes.iter().fold(DMatrix::identity(n, n), |acc, &m| &self.matrices[m] * acc)
    }

    /// Inhomogeneous term of the variation-of-constants formula,
    /// `sum_{s<t} A(u_{t-1}) ... A(u_{s+1}) (B v_s + w_s)`.
    pub fn inhomogeneous_term(&self, modes: &[usize], inputs: &[Vec<f64>], noise: &[Vec<f64>]) -> DVector<f64> {
        let n = self.dimension();
        let mut acc = DVector::zeros(n);
        for (s, &mode) in modes.iter().enumerate() {
            let v = DVector::from_column_slice(&inputs[s]);
            let w = DVector::from_column_slice(&noise[s]);
            acc = &self.matrices[mode] * acc + &self.input_matrix * v + w;
        }
        acc
    }

    /// Checks that the coordinate block is invariant under every `A(u)`, i.e.
    /// `A(u)[i, j] == 0` for `j` in the block and `i` outside it.
    pub fn check_invariant_block(&self, block: &[usize]) -> Result<()> {
        let n = self.dimension();
        if block.is_empty() {
            return Err(Error::input("block must contain at least one coordinate"));
        }
        let mut inside = vec![false; n];
        for &b in block {
            if b >= n {
                return Err(Error::input(format!("block index {b} out of range for dimension {n}")));
            }
            if inside[b] {
                return Err(Error::input(format!("block index {b} listed twice")));
            }
            inside[b] = true;
        }
        for (label, a) in self.labels.iter().zip(&self.matrices) {
            for &j in block {
                for i in (0..n).filter(|&i| !inside[i]) {
                    if a[(i, j)] != 0.0 {
                        return Err(Error::input(format!(
                            "block {block:?} is not invariant under A({label}): entry ({i}, {j}) = {}",
                            a[(i, j)]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Restriction of `A(u)` to an invariant coordinate block.
    pub fn block_matrix(&self, mode: usize, block: &[usize]) -> DMatrix<f64> {
        let a = &self.matrices[mode];
        DMatrix::from_fn(block.len(), block.len(), |i, j| a[(block[i], block[j])])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_singular_matrix() {
        let m =
            SemilinearModel::homogeneous(vec!["a".into()], vec![DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0])]);
        assert!(m.is_err());
    }

    #[test]
    fn block_invariance() {
        let m =
            SemilinearModel::homogeneous(vec!["a".into()], vec![DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 3.0])])
                .unwrap();
        // e_0 is invariant (upper triangular), e_1 is not.
        assert!(m.check_invariant_block(&[0]).is_ok());
        assert!(m.check_invariant_block(&[1]).is_err());
        assert!(m.check_invariant_block(&[0, 1]).is_ok());
        assert!(m.check_invariant_block(&[2]).is_err());
    }
}
