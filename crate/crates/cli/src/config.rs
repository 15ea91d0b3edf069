//! Experiment configuration file.
//!
//! One JSON document holds the shared `model`, `channel` and `policy`
//! sections plus one optional section per verb. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use stabent::ams::Region;
use stabent::channels::ChannelModel;
use stabent::entropy::CandidateSource;
use stabent::models::ModelSpec;
use stabent::policies::ZoomConfig;
use stabent::Error;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<ChannelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<ZoomConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ams: Option<AmsParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy: Option<EntropyParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coding: Option<CodingParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemmas: Option<LemmaParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noisy_demo: Option<NoisyDemoParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelSpec {
    Noiseless {
        alphabet: usize,
    },
    Dmc {
        matrix: Vec<Vec<f64>>,
    },
    /// Headerless CSV, one row per input symbol; relative paths resolve against the config file.
    DmcCsv {
        path: PathBuf,
    },
    Bsc {
        p: f64,
    },
    QArySymmetric {
        q: usize,
        p: f64,
    },
}

impl ChannelSpec {
    pub fn build(&self, base: &Path) -> Result<ChannelModel, CliError> {
        let built = match self {
            ChannelSpec::Noiseless { alphabet } => ChannelModel::noiseless(*alphabet),
            ChannelSpec::Dmc { matrix } => ChannelModel::dmc(matrix.clone()),
            ChannelSpec::DmcCsv { path } => ChannelModel::dmc(read_matrix_csv(&base.join(path))?),
            ChannelSpec::Bsc { p } => ChannelModel::bsc(*p),
            ChannelSpec::QArySymmetric { q, p } => ChannelModel::q_ary_symmetric(*q, *p),
        };
        Ok(built.map_err(|e| keyed("channel", e))?)
    }
}

fn read_matrix_csv(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let bad = |msg: String| CliError::Core(Error::Input(format!("channel.path: {}: {msg}", path.display())));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let row = rec
            .iter()
            .map(|v| v.parse::<f64>().map_err(|_| bad(format!("row {i}: '{v}' is not a number"))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    pub horizon: usize,
    pub count: usize,
    /// Open-loop inputs per step; zeros when omitted. Ignored in closed loop.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controls: Option<Vec<Vec<f64>>>,
    /// Switching modes per step for semilinear models; mode 0 when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<Vec<usize>>,
}

fn default_windows() -> usize {
    4
}

fn default_eps() -> f64 {
    stabent::ams::DEFAULT_EPS_AMS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmsParams {
    pub horizon: usize,
    pub count: usize,
    pub regions: Vec<Region>,
    #[serde(default)]
    pub moments: Vec<f64>,
    #[serde(default = "default_windows")]
    pub windows: usize,
    #[serde(default = "default_eps")]
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TheoremArg {
    Volume,
    Moment,
    Linear,
    Cocycle,
    Selgrade,
    LogdetIntegral,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theorem: Option<TheoremArg>,
    /// Volume: region `B` and its mass `Q(B)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<Region>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    /// Moment: `E|x|^p <= m_p`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moment_grid: Option<usize>,
    /// Linear: explicit matrix; falls back to the model's linear drift.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    /// Cocycle and Selgrade: invariant coordinate blocks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_budget: Option<u64>,
    /// Selgrade: block rates given directly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_rates: Option<Vec<f64>>,
    /// Log-determinant integral: ensemble size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropyParams {
    pub region: Region,
    pub horizons: Vec<usize>,
    #[serde(default)]
    pub rho: f64,
    #[serde(default)]
    pub r: f64,
    pub samples: usize,
    /// Candidate pool; the top-level policy (or a 3-bit zoom) when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<CandidateSource>,
}

fn default_tol() -> f64 {
    1e-9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodingParams {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub rates: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocklength: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateLemma {
    pub horizon: usize,
    pub r: f64,
    #[serde(default = "half")]
    pub alpha: f64,
    #[serde(default = "half")]
    pub beta: f64,
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateLemma>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervals: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoisyDemoParams {
    pub b: f64,
    pub r_star: f64,
    pub horizons: Vec<usize>,
    pub trials: usize,
    pub alpha: f64,
    /// Group size `L` of the bin pipeline.
    pub group_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// Support `K` and density bounds; default to `model.density_bounds`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_max: Option<f64>,
    /// Tail-ratio check of the initial law at these masses.
    #[serde(default)]
    pub eps_grid: Vec<f64>,
}

/// Prefixes a library error with the config key it came from, keeping its class.
pub fn keyed(key: &str, e: Error) -> Error {
    match e {
        Error::Input(m) => Error::Input(format!("{key}: {m}")),
        Error::Numeric(m) => Error::Numeric(format!("{key}: {m}")),
        Error::Capability(m) => Error::Capability(format!("{key}: {m}")),
        Error::Invariant(m) => Error::Invariant(format!("{key}: {m}")),
        Error::AtStep { t, source } => Error::AtStep { t, source: Box::new(keyed(key, *source)) },
        other => other,
    }
}

pub fn missing(key: &str) -> CliError {
    CliError::Core(Error::Input(format!("{key}: missing from the config")))
}

pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Core(Error::Input(format!("cannot read config {}: {e}", path.display()))))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        CliError::Core(Error::Input(format!("config {}: key '{key}': {}", path.display(), e.inner())))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_configs_parse() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let mut n = 0;
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            let cfg = load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            if let Some(m) = &cfg.model {
                m.build().unwrap();
            }
            n += 1;
        }
        assert!(n >= 7);
    }

    #[test]
    fn keyed_keeps_class() {
        let e = keyed("bound.q", Error::Numeric("overflow".into()));
        assert_eq!(e.class(), stabent::ErrorClass::Numeric);
        assert!(e.to_string().contains("bound.q: overflow"));
    }

    #[test]
    fn bad_nested_key_is_reported_with_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{ "ams": { "horizon": "ten", "count": 1, "regions": [] } }"#).unwrap();
        let msg = load(&p).unwrap_err().to_string();
        assert!(msg.contains("ams.horizon"), "{msg}");
    }

    #[test]
    fn config_round_trips_through_json() {
        let json = r#"{ "seed": 3, "channel": { "kind": "q_ary_symmetric", "q": 4, "p": 0.1 },
                        "lemmas": { "intervals": [[0.0, 1.0]] } }"#;
        let cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, back);
    }
}
