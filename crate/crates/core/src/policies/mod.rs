//! Causal coding-and-control over a channel: a zoom quantizer and the closed-loop driver.
//!
//! The zoom policy keeps, per coordinate, a range `[c - Δ, c + Δ]`. The
//! encoder splits it into `2^R - 1` equal cells and reserves one more symbol
//! for "outside". The controller only sees received symbols; the encoder
//! tracks the same state through noiseless feedback of what was received, so
//! both halves run the identical update driven by `q'`.
//!
//! Vector models are handled coordinate-wise and require a diagonal linear
//! drift (or an explicit per-coordinate gain). Each coordinate uses `R` bits,
//! and the per-coordinate symbols are packed into one channel symbol.

use std::collections::HashSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::ChannelModel;
use crate::error::{Error, Result};
use crate::models::{Control, Drift, MapKind, SeedProvenance, SystemModel, Trajectory, TrajectoryEnsemble};
use crate::seeding::{stream_rng, Purpose};

/// Smallest range kept after a contraction, so that `Δ > 0` survives underflow.
pub const MIN_RANGE: f64 = 1e-250;

/// Mass left outside the default noise margin for unbounded noise laws.
const MARGIN_TAIL: f64 = 1e-4;

/// Largest packed symbol width (`R * N` bits).
const MAX_SYMBOL_BITS: u32 = 30;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlLaw {
    /// `u = -a * m`, `m` the decoded cell midpoint.
    #[default]
    Gain,
    /// `u = -f(m)`, cancelling the model drift at the midpoint.
    CancelDrift,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoomConfig {
    /// Bits per coordinate and step.
    pub rate_bits: u32,
    /// Escape growth; defaults to `2 max(|a|, 1)` per coordinate.
    #[serde(default)]
    pub g_out: Option<f64>,
    #[serde(default = "default_g_in")]
    pub g_in: f64,
    #[serde(default = "default_kappa")]
    pub kappa_safety: f64,
    #[serde(default = "default_range")]
    pub initial_range: f64,
    #[serde(default)]
    pub initial_center: Option<Vec<f64>>,
    /// Per-coordinate gain; defaults to the diagonal of a linear drift.
    #[serde(default)]
    pub gain: Option<Vec<f64>>,
    /// Added to `Δ` at every update; defaults to `sup |w|` for bounded noise
    /// and to the two-sided `1e-4` quantile of `|w|` otherwise.
    #[serde(default)]
    pub noise_margin: Option<f64>,
    #[serde(default)]
    pub control_law: ControlLaw,
}

fn default_g_in() -> f64 {
    1.0
}

fn default_kappa() -> f64 {
    1.2
}

fn default_range() -> f64 {
    1.0
}

impl ZoomConfig {
    pub fn new(rate_bits: u32) -> Self {
        ZoomConfig {
            rate_bits,
            g_out: None,
            g_in: default_g_in(),
            kappa_safety: default_kappa(),
            initial_range: default_range(),
            initial_center: None,
            gain: None,
            noise_margin: None,
            control_law: ControlLaw::Gain,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZoomState {
    pub center: Vec<f64>,
    pub range: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZoomParams {
    pub rate_bits: u32,
    pub gains: Vec<f64>,
    pub g_out: Vec<f64>,
    pub g_in: f64,
    pub kappa_safety: f64,
    pub noise_margin: f64,
    pub control_law: ControlLaw,
    #[serde(skip)]
    drift: Option<Drift>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyState {
    pub params: ZoomParams,
    pub encoder: ZoomState,
    pub decoder: ZoomState,
}

/// Result of one policy step.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoomStep {
    pub control: Vec<f64>,
    pub sent: usize,
    pub received: usize,
    pub next: PolicyState,
}

impl ZoomParams {
    fn cells(&self) -> usize {
        (1usize << self.rate_bits) - 1
    }

    fn escape(&self) -> usize {
        self.cells()
    }

    pub fn dimension(&self) -> usize {
        self.gains.len()
    }

    /// Size of the packed symbol alphabet, `2^(R N)`.
    pub fn alphabet(&self) -> usize {
        1usize << (self.rate_bits as usize * self.dimension())
    }

    /// Bits used per step across all coordinates.
    pub fn bits_per_step(&self) -> u32 {
        self.rate_bits * self.dimension() as u32
    }

    fn encode(&self, state: &ZoomState, x: &[f64]) -> usize {
        let k = self.cells();
        let mut symbol = 0usize;
        for i in (0..self.dimension()).rev() {
            let (c, d) = (state.center[i], state.range[i]);
            let s = if k == 0 || !(x[i] >= c - d && x[i] <= c + d) {
                self.escape()
            } else {
                let width = 2.0 * d / k as f64;
                (((x[i] - (c - d)) / width).floor() as usize).min(k - 1)
            };
            symbol = (symbol << self.rate_bits) | s;
        }
        symbol
    }

    fn unpack(&self, symbol: usize) -> Vec<usize> {
        if symbol >= self.alphabet() {
            return vec![self.escape(); self.dimension()];
        }
        let mask = (1usize << self.rate_bits) - 1;
        (0..self.dimension()).map(|i| (symbol >> (i as u32 * self.rate_bits)) & mask).collect()
    }

    fn drift_at(&self, m: &[f64]) -> Vec<f64> {
        match &self.drift {
            Some(f) => {
                let mut out = vec![0.0; m.len()];
                f.eval(m, &mut out);
                out
            }
            None => m.iter().zip(&self.gains).map(|(mi, a)| a * mi).collect(),
        }
    }

    /// Controller and state update driven only by the received symbol.
    fn decode(&self, state: &ZoomState, received: usize) -> Result<(Vec<f64>, ZoomState)> {
        let n = self.dimension();
        let symbols = self.unpack(received);
        let k = self.cells();
        let mut mid = vec![0.0; n];
        let mut hit = vec![false; n];
        for i in 0..n {
            if symbols[i] < k {
                let (c, d) = (state.center[i], state.range[i]);
                mid[i] = c - d + (symbols[i] as f64 + 0.5) * (2.0 * d / k as f64);
                hit[i] = true;
            }
        }
        // Where the coordinate escaped, the best guess is the current center.
        let guess: Vec<f64> = (0..n).map(|i| if hit[i] { mid[i] } else { state.center[i] }).collect();
        let image = match self.control_law {
            ControlLaw::Gain => guess.iter().zip(&self.gains).map(|(g, a)| a * g).collect(),
            ControlLaw::CancelDrift => self.drift_at(&guess),
        };
        let mut u = vec![0.0; n];
        let mut next = ZoomState { center: vec![0.0; n], range: vec![0.0; n] };
        for i in 0..n {
            let d = state.range[i];
            if hit[i] {
                u[i] = -image[i];
                next.center[i] = image[i] + u[i];
                next.range[i] =
                    self.g_in * self.gains[i].abs() * d * (-(self.rate_bits as f64)).exp2() * self.kappa_safety
                        + self.noise_margin;
            } else {
                next.center[i] = image[i];
                next.range[i] = self.g_out[i] * d + self.noise_margin;
            }
            next.range[i] = next.range[i].max(MIN_RANGE);
            if !(next.range[i] > 0.0) || !next.range[i].is_finite() || !next.center[i].is_finite() {
                return Err(Error::Invariant(format!(
                    "zoom range for coordinate {i} became {} (center {})",
                    next.range[i], next.center[i]
                )));
            }
        }
        Ok((u, next))
    }
}

impl PolicyState {
    /// Binds a zoom policy to an additive model.
    pub fn new(config: &ZoomConfig, model: &SystemModel) -> Result<Self> {
        let drift = match model.kind() {
            MapKind::Additive { drift, .. } => drift.clone(),
            _ => return Err(Error::capability("the zoom policy supports additive models x' = f(x) + u + w only")),
        };
        let n = model.dimension();
        let gains = match &config.gain {
            Some(g) => {
                if g.len() != n {
                    return Err(Error::input(format!("policy.gain has {} entries, model dimension is {n}", g.len())));
                }
                g.clone()
            }
            None => diagonal_gains(&drift)?,
        };
        if gains.iter().any(|a| !a.is_finite()) {
            return Err(Error::input("policy.gain entries must be finite"));
        }
        if config.rate_bits as usize * n > MAX_SYMBOL_BITS as usize {
            return Err(Error::input(format!(
                "policy.rate_bits * dimension = {} exceeds {MAX_SYMBOL_BITS} bits per step",
                config.rate_bits as usize * n
            )));
        }
        let g_out: Vec<f64> = match config.g_out {
            Some(g) => vec![g; n],
            None => gains.iter().map(|a| 2.0 * a.abs().max(1.0)).collect(),
        };
        if g_out.iter().any(|g| !(*g > 1.0) || !g.is_finite()) {
            return Err(Error::input("policy.g_out must be a finite number > 1"));
        }
        if !(config.g_in > 0.0 && config.g_in <= 1.0) {
            return Err(Error::input(format!("policy.g_in must lie in (0, 1], got {}", config.g_in)));
        }
        if !(config.kappa_safety > 0.0 && config.kappa_safety.is_finite()) {
            return Err(Error::input("policy.kappa_safety must be positive"));
        }
        if !(config.initial_range > 0.0 && config.initial_range.is_finite()) {
            return Err(Error::input("policy.initial_range must be positive"));
        }
        let noise_margin = match config.noise_margin {
            Some(m) if m >= 0.0 && m.is_finite() => m,
            Some(m) => return Err(Error::input(format!("policy.noise_margin must be >= 0, got {m}"))),
            None => default_margin(model)?,
        };
        let center = match &config.initial_center {
            Some(c) if c.len() == n => c.clone(),
            Some(c) => {
                return Err(Error::input(format!(
                    "policy.initial_center has {} entries, model dimension is {n}",
                    c.len()
                )))
            }
            None => vec![0.0; n],
        };
        let state = ZoomState { center, range: vec![config.initial_range; n] };
        Ok(PolicyState {
            params: ZoomParams {
                rate_bits: config.rate_bits,
                gains,
                g_out,
                g_in: config.g_in,
                kappa_safety: config.kappa_safety,
                noise_margin,
                control_law: config.control_law,
                drift: Some(drift),
            },
            encoder: state.clone(),
            decoder: state,
        })
    }

    /// Checks that the channel carries the packed symbols.
    pub fn check_channel(&self, channel: &ChannelModel) -> Result<()> {
        if self.params.rate_bits > 0 && channel.input_size() < self.params.alphabet() {
            return Err(Error::input(format!(
                "channel input alphabet {} is smaller than the policy alphabet 2^{} = {}",
                channel.input_size(),
                self.params.bits_per_step(),
                self.params.alphabet()
            )));
        }
        Ok(())
    }

    /// One causal step: encode `x`, transmit, decode, and advance both halves.
    pub fn step<R: Rng + ?Sized>(&self, x: &[f64], channel: &ChannelModel, rng: &mut R) -> Result<ZoomStep> {
        if x.len() != self.params.dimension() {
            return Err(Error::input(format!(
                "state has dimension {}, policy expects {}",
                x.len(),
                self.params.dimension()
            )));
        }
        let sent = self.params.encode(&self.encoder, x);
        let received = if self.params.rate_bits == 0 { sent } else { channel.transmit(sent, rng)? };
        let (control, decoder) = self.params.decode(&self.decoder, received)?;
        let (_, encoder) = self.params.decode(&self.encoder, received)?;
        Ok(ZoomStep { control, sent, received, next: PolicyState { params: self.params.clone(), encoder, decoder } })
    }

    /// Replays the decoder alone on a received-symbol log and returns the controls.
    pub fn replay_controls(&self, received: &[usize]) -> Result<Vec<Vec<f64>>> {
        let mut state = self.decoder.clone();
        let mut out = Vec::with_capacity(received.len());
        for &q in received {
            let (u, next) = self.params.decode(&state, q)?;
            out.push(u);
            state = next;
        }
        Ok(out)
    }
}

pub fn zoom_policy_step<R: Rng + ?Sized>(
    policy: &PolicyState,
    x: &[f64],
    channel: &ChannelModel,
    rng: &mut R,
) -> Result<ZoomStep> {
    policy.step(x, channel, rng)
}

fn diagonal_gains(drift: &Drift) -> Result<Vec<f64>> {
    match drift {
        Drift::Linear { matrix } => {
            let off_diagonal =
                matrix.iter().enumerate().any(|(i, row)| row.iter().enumerate().any(|(j, v)| i != j && *v != 0.0));
            if off_diagonal {
                return Err(Error::capability(
                    "the zoom policy needs a diagonal linear part; change coordinates or set policy.gain",
                ));
            }
            Ok(matrix.iter().enumerate().map(|(i, row)| row[i]).collect())
        }
        _ => Err(Error::input("nonlinear drift: policy.gain must be given")),
    }
}

fn default_margin(model: &SystemModel) -> Result<f64> {
    let noise = model.noise();
    if let Some(b) = noise.abs_bound() {
        return Ok(b);
    }
    let lo = noise.quantile(MARGIN_TAIL / 2.0)?;
    let hi = noise.quantile(1.0 - MARGIN_TAIL / 2.0)?;
    Ok(lo.abs().max(hi.abs()))
}

/// One `(t, q, q', u)` record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymbolRecord {
    pub t: usize,
    pub sent: usize,
    pub received: usize,
    pub control: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopRun {
    pub ensemble: TrajectoryEnsemble,
    /// One symbol log per trajectory.
    pub logs: Vec<Vec<SymbolRecord>>,
    pub bits_per_step: u32,
}

impl ClosedLoopRun {
    /// Number of distinct realized control sequences `u_0..u_{t-1}` across the ensemble.
    pub fn distinct_control_sequences(&self, t: usize) -> usize {
        let set: HashSet<Vec<u64>> = self
            .logs
            .iter()
            .map(|log| log.iter().take(t).flat_map(|r| r.control.iter().map(|v| v.to_bits())).collect())
            .collect();
        set.len()
    }

    /// `log2(#distinct control sequences of length t) / t`.
    pub fn control_rate(&self, t: usize) -> f64 {
        if t == 0 {
            return 0.0;
        }
        (self.distinct_control_sequences(t) as f64).log2() / t as f64
    }

    /// Distinct symbols sent at each step, across the ensemble.
    pub fn distinct_symbols_per_step(&self) -> Vec<usize> {
        let horizon = self.logs.iter().map(Vec::len).min().unwrap_or(0);
        (0..horizon).map(|t| self.logs.iter().map(|l| l[t].sent).collect::<HashSet<_>>().len()).collect()
    }
}

/// Runs `count` independent closed loops of length `horizon`.
///
/// Loop `i` draws from stream `i` of the closed-loop purpose: the initial
/// state, then per step the channel randomness followed by the noise sample.
pub fn closed_loop_run(
    model: &SystemModel,
    policy: &PolicyState,
    channel: &ChannelModel,
    horizon: usize,
    count: usize,
    seed: u64,
) -> Result<ClosedLoopRun> {
    if count == 0 {
        return Err(Error::input("closed-loop count must be at least 1"));
    }
    if policy.params.dimension() != model.dimension() || model.input_dim() != model.dimension() {
        return Err(Error::input(format!(
            "policy dimension {} does not match model dimension {} with additive control",
            policy.params.dimension(),
            model.dimension()
        )));
    }
    channel.validate()?;
    policy.check_channel(channel)?;
    let runs = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, Purpose::ClosedLoop, i as u64);
            let n = model.dimension();
            let mut x = vec![0.0; n];
            model.init().sample_into(&mut rng, &mut x);
            let mut traj = Trajectory::with_capacity(n, n, model.noise_dim(), horizon);
            traj.seed = Some(SeedProvenance { master: seed, index: i as u64 });
            traj.push_initial(&x);
            let mut log = Vec::with_capacity(horizon);
            let mut state = policy.clone();
            let mut w = vec![0.0; model.noise_dim()];
            let mut next = vec![0.0; n];
            for t in 0..horizon {
                let step = state.step(&x, channel, &mut rng).map_err(|e| e.at_step(t))?;
                model.noise().sample_into(&mut rng, &mut w);
                let u = Control::additive(step.control.clone());
                model.step_into(&x, &u, &w, &mut next).map_err(|e| e.at_step(t))?;
                traj.push_step(&u, &w, &next);
                log.push(SymbolRecord { t, sent: step.sent, received: step.received, control: step.control });
                x.copy_from_slice(&next);
                state = step.next;
            }
            Ok((traj, log))
        })
        .collect::<Result<Vec<_>>>()?;
    let (trajectories, logs) = runs.into_iter().unzip();
    Ok(ClosedLoopRun {
        ensemble: TrajectoryEnsemble { trajectories, master_seed: Some(seed) },
        logs,
        bits_per_step: policy.params.bits_per_step(),
    })
}
