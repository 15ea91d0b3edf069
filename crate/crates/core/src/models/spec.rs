//! Serializable model description, the `model` section of an experiment config.
//!
//! ```json
//! {
//!   "map": { "kind": "additive", "drift": { "type": "linear", "matrix": [[2.0]] } },
//!   "noise": { "family": "uniform", "low": -1.0, "high": 1.0 },
//!   "init": { "family": "uniform", "low": -1.0, "high": 1.0 },
//!   "density_bounds": { "p_min": 0.5, "p_max": 0.5, "support": [-1.0, 1.0] },
//!   "volume_expanding": true
//! }
//! ```

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{DensityBounds, Distribution, Drift, SemilinearModel, SystemModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapSpec {
    Additive { drift: Drift },
    Semilinear(SemilinearSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemilinearSpec {
    pub labels: Vec<String>,
    /// One row-major square matrix per label.
    pub matrices: Vec<Vec<Vec<f64>>>,
    /// `N x M` input matrix; omitted means no additive control.
    #[serde(default)]
    pub input_matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Optional consistency check against the map's own dimension.
    #[serde(default)]
    pub dimension: Option<usize>,
    pub map: MapSpec,
    #[serde(default = "zero")]
    pub noise: Distribution,
    pub init: Distribution,
    #[serde(default)]
    pub density_bounds: Option<DensityBounds>,
    #[serde(default)]
    pub volume_expanding: bool,
}

fn zero() -> Distribution {
    Distribution::Zero
}

fn rows_to_matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::input(format!("{name} rows must all have the same length")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl SemilinearSpec {
    pub fn build(&self) -> Result<SemilinearModel> {
        let matrices = self
            .matrices
            .iter()
            .enumerate()
            .map(|(i, m)| rows_to_matrix(&format!("map.matrices[{i}]"), m))
            .collect::<Result<Vec<_>>>()?;
        match &self.input_matrix {
            Some(b) => SemilinearModel::new(self.labels.clone(), matrices, rows_to_matrix("map.input_matrix", b)?),
            None => SemilinearModel::homogeneous(self.labels.clone(), matrices),
        }
    }
}

impl ModelSpec {
    pub fn build(&self) -> Result<SystemModel> {
        let mut model = match &self.map {
            MapSpec::Additive { drift } => SystemModel::additive(drift.clone(), self.noise.clone(), self.init.clone())?,
            MapSpec::Semilinear(s) => SystemModel::semilinear(s.build()?, self.noise.clone(), self.init.clone())?,
        };
        if let Some(n) = self.dimension {
            if n != model.dimension() {
                return Err(Error::input(format!(
                    "dimension {n} does not match the map's dimension {}",
                    model.dimension()
                )));
            }
        }
        if let Some(b) = self.density_bounds {
            model = model.with_density_bounds(b)?;
        }
        if self.volume_expanding {
            model = model.flagged_volume_expanding();
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_example() {
        let json = r#"{
            "map": { "kind": "additive", "drift": { "type": "linear", "matrix": [[2.0]] } },
            "noise": { "family": "uniform", "low": -1.0, "high": 1.0 },
            "init": { "family": "uniform", "low": -1.0, "high": 1.0 },
            "density_bounds": { "p_min": 0.5, "p_max": 0.5, "support": [-1.0, 1.0] },
            "volume_expanding": true
        }"#;
        let spec: ModelSpec = serde_json::from_str(json).unwrap();
        let m = spec.build().unwrap();
        assert_eq!(m.dimension(), 1);
        assert!(m.is_flagged_volume_expanding());
        assert_eq!(m.density_bounds().unwrap().p_max, 0.5);
    }

    #[test]
    fn parses_semilinear() {
        let json = r#"{
            "map": { "kind": "semilinear", "labels": ["u1", "u2"],
                     "matrices": [[[2.0]], [[3.0]]] },
            "init": { "family": "uniform", "low": -1.0, "high": 1.0 }
        }"#;
        let spec: ModelSpec = serde_json::from_str(json).unwrap();
        let m = spec.build().unwrap();
        assert_eq!(m.input_dim(), 0);
        assert_eq!(m.noise(), &Distribution::Zero);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let spec = ModelSpec {
            dimension: Some(2),
            map: MapSpec::Additive { drift: Drift::scalar_linear(2.0) },
            noise: Distribution::Zero,
            init: Distribution::Zero,
            density_bounds: None,
            volume_expanding: false,
        };
        assert!(spec.build().is_err());
    }
}
