//! System models `x_{t+1} = f(x_t, u_t, w_t)` and open-loop simulation.

mod distribution;
mod drift;
mod semilinear;
mod spec;

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

pub use distribution::{DensityBounds, Distribution};
pub use drift::Drift;
pub use semilinear::SemilinearModel;
pub use spec::{MapSpec, ModelSpec, SemilinearSpec};

use crate::error::{Error, Result};
use crate::seeding::{stream_rng, Purpose};

/// User-supplied map for models that are neither additive nor semilinear.
pub trait GeneralMap: Send + Sync + fmt::Debug {
    fn control_dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    fn apply(&self, x: &[f64], u: &[f64], w: &[f64], out: &mut [f64]);
    fn jacobian_logdet(&self, _x: &[f64]) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone)]
pub enum MapKind {
    /// `x' = f(x) + u + w`.
    Additive {
        drift: Drift,
        linear_logdet: Option<f64>,
    },
    /// `x' = A(u) x + B v + w`.
    Semilinear(SemilinearModel),
    General(Arc<dyn GeneralMap>),
}

/// One control value: a mode label index (semilinear models) and a real input vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    pub mode: usize,
    pub input: Vec<f64>,
}

impl Control {
    pub fn additive(input: Vec<f64>) -> Self {
        Control { mode: 0, input }
    }

    pub fn scalar(u: f64) -> Self {
        Control { mode: 0, input: vec![u] }
    }

    pub fn switched(mode: usize, input: Vec<f64>) -> Self {
        Control { mode, input }
    }
}

#[derive(Debug, Clone)]
pub struct SystemModel {
    dimension: usize,
    kind: MapKind,
    noise: Distribution,
    init: Distribution,
    density_bounds: Option<DensityBounds>,
    volume_expanding: bool,
}

impl SystemModel {
    pub fn additive(drift: Drift, noise: Distribution, init: Distribution) -> Result<Self> {
        drift.validate()?;
        let linear_logdet = drift.matrix().map(|a| a.determinant().abs().log2());
        Self::build(drift.dimension(), MapKind::Additive { drift, linear_logdet }, noise, init)
    }

    pub fn semilinear(model: SemilinearModel, noise: Distribution, init: Distribution) -> Result<Self> {
        Self::build(model.dimension(), MapKind::Semilinear(model), noise, init)
    }

    pub fn general(
        dimension: usize,
        map: Arc<dyn GeneralMap>,
        noise: Distribution,
        init: Distribution,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::input("dimension must be positive"));
        }
        Self::build(dimension, MapKind::General(map), noise, init)
    }

    fn build(dimension: usize, kind: MapKind, noise: Distribution, init: Distribution) -> Result<Self> {
        noise.validate()?;
        init.validate()?;
        Ok(SystemModel { dimension, kind, noise, init, density_bounds: None, volume_expanding: false })
    }

    pub fn with_density_bounds(mut self, bounds: DensityBounds) -> Result<Self> {
        bounds.validate()?;
        self.density_bounds = Some(bounds);
        Ok(self)
    }

    /// Flags the model as volume-expanding. The flag is checked lazily by
    /// [`SystemModel::check_volume_expanding`].
    pub fn flagged_volume_expanding(mut self) -> Self {
        self.volume_expanding = true;
        self
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn kind(&self) -> &MapKind {
        &self.kind
    }

    pub fn noise(&self) -> &Distribution {
        &self.noise
    }

    pub fn init(&self) -> &Distribution {
        &self.init
    }

    pub fn density_bounds(&self) -> Option<&DensityBounds> {
        self.density_bounds.as_ref()
    }

    pub fn is_flagged_volume_expanding(&self) -> bool {
        self.volume_expanding
    }

    pub fn drift(&self) -> Option<&Drift> {
        match &self.kind {
            MapKind::Additive { drift, .. } => Some(drift),
            _ => None,
        }
    }

    pub fn input_dim(&self) -> usize {
        match &self.kind {
            MapKind::Additive { .. } => self.dimension,
            MapKind::Semilinear(m) => m.input_dim(),
            MapKind::General(g) => g.control_dim(),
        }
    }

    pub fn noise_dim(&self) -> usize {
        match &self.kind {
            MapKind::General(g) => g.noise_dim(),
            _ => self.dimension,
        }
    }

    fn mode_count(&self) -> usize {
        match &self.kind {
            MapKind::Semilinear(m) => m.alphabet_size(),
            _ => 1,
        }
    }

    /// Evaluates one step of the recursion into `out`.
    pub fn step_into(&self, x: &[f64], u: &Control, w: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.dimension {
            return Err(Error::input(format!("state has dimension {}, model expects {}", x.len(), self.dimension)));
        }
        if u.input.len() != self.input_dim() {
            return Err(Error::input(format!(
                "control input has dimension {}, model expects {}",
                u.input.len(),
                self.input_dim()
            )));
        }
        if u.mode >= self.mode_count() {
            return Err(Error::input(format!(
                "control mode {} out of range (alphabet size {})",
                u.mode,
                self.mode_count()
            )));
        }
        if w.len() != self.noise_dim() {
            return Err(Error::input(format!(
                "noise sample has dimension {}, model expects {}",
                w.len(),
                self.noise_dim()
            )));
        }
        match &self.kind {
            MapKind::Additive { drift, .. } => {
                drift.eval(x, out);
                for ((o, ui), wi) in out.iter_mut().zip(&u.input).zip(w) {
                    *o += ui + wi;
                }
            }
            MapKind::Semilinear(m) => m.apply(u.mode, x, &u.input, w, out),
            MapKind::General(g) => g.apply(x, &u.input, w, out),
        }
        if let Some(v) = out.iter().find(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("state overflowed to {v}")));
        }
        Ok(())
    }

    pub fn step(&self, x: &[f64], u: &Control, w: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dimension];
        self.step_into(x, u, w, &mut out)?;
        Ok(out)
    }

    /// `log2 |det Df(x)|`.
    pub fn jacobian_logdet(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dimension {
            return Err(Error::input(format!("state has dimension {}, model expects {}", x.len(), self.dimension)));
        }
        match &self.kind {
            MapKind::Additive { drift, linear_logdet } => Ok(drift.logdet(x, *linear_logdet)),
            MapKind::Semilinear(_) => Err(Error::capability(
                "semilinear models have a mode-dependent Jacobian; use SemilinearModel::mode_logdet",
            )),
            MapKind::General(g) => g
                .jacobian_logdet(x)
                .ok_or_else(|| Error::capability("model provides no Jacobian log-determinant profile")),
        }
    }

    pub fn has_jacobian_profile(&self) -> bool {
        match &self.kind {
            MapKind::Additive { .. } => true,
            MapKind::Semilinear(_) => false,
            MapKind::General(g) => g.jacobian_logdet(&vec![0.0; self.dimension]).is_some(),
        }
    }

    /// Samples `points` states uniformly from the box `[-radius, radius]^N` and
    /// fails if any has `log2 |det Df| < -1e-12`.
    pub fn check_volume_expanding(&self, radius: f64, points: usize, seed: u64) -> Result<()> {
        let mut rng = stream_rng(seed, Purpose::Custom, 0);
        let d = Distribution::Uniform { low: -radius, high: radius };
        let mut x = vec![0.0; self.dimension];
        for _ in 0..points {
            d.sample_into(&mut rng, &mut x);
            let ld = self.jacobian_logdet(&x)?;
            if ld.is_nan() || ld < -1e-12 {
                return Err(Error::input(format!("model flagged volume-expanding but log2|det Df({x:?})| = {ld}")));
            }
        }
        Ok(())
    }

    /// Runs the recursion from `x0` under given controls and noise.
    pub fn simulate(&self, x0: &[f64], controls: &[Control], noise: &[Vec<f64>]) -> Result<Trajectory> {
        if controls.len() != noise.len() {
            return Err(Error::input(format!(
                "controls ({}) and noise ({}) must have equal length",
                controls.len(),
                noise.len()
            )));
        }
        let mut traj = Trajectory::with_capacity(self.dimension, self.input_dim(), self.noise_dim(), controls.len());
        self.simulate_into(&mut traj, x0, controls, |t, w| w.copy_from_slice(&noise[t]))?;
        Ok(traj)
    }

    fn simulate_into(
        &self,
        traj: &mut Trajectory,
        x0: &[f64],
        controls: &[Control],
        mut noise_at: impl FnMut(usize, &mut [f64]),
    ) -> Result<()> {
        if x0.len() != self.dimension {
            return Err(Error::input(format!(
                "initial state has dimension {}, model expects {}",
                x0.len(),
                self.dimension
            )));
        }
        traj.states.extend_from_slice(x0);
        let mut w = vec![0.0; self.noise_dim()];
        let mut next = vec![0.0; self.dimension];
        for (t, u) in controls.iter().enumerate() {
            noise_at(t, &mut w);
            let x = traj.state(t);
            self.step_into(x, u, &w, &mut next).map_err(|e| e.at_step(t))?;
            traj.push_step(u, &w, &next);
        }
        Ok(())
    }

    /// Draws `count` independent trajectories under a common open-loop control sequence.
    ///
    /// Trajectory `i` uses stream `i` of the ensemble purpose under `seed`,
    /// drawing the initial state first and then the noise sequence.
    pub fn sample_ensemble(
        &self,
        controls: &[Control],
        count: usize,
        horizon: usize,
        seed: u64,
    ) -> Result<TrajectoryEnsemble> {
        if count == 0 {
            return Err(Error::input("ensemble count must be at least 1"));
        }
        if controls.len() != horizon {
            return Err(Error::input(format!("control sequence has length {}, horizon is {horizon}", controls.len())));
        }
        let trajectories = (0..count)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(seed, Purpose::Ensemble, i as u64);
                let mut x0 = vec![0.0; self.dimension];
                self.init.sample_into(&mut rng, &mut x0);
                let mut traj = Trajectory::with_capacity(self.dimension, self.input_dim(), self.noise_dim(), horizon);
                traj.seed = Some(SeedProvenance { master: seed, index: i as u64 });
                self.simulate_into(&mut traj, &x0, controls, |_, w| self.noise.sample_into(&mut rng, w))?;
                Ok(traj)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TrajectoryEnsemble { trajectories, master_seed: Some(seed) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedProvenance {
    pub master: u64,
    pub index: u64,
}

/// States `x_0..x_T`, controls and noise `0..T-1`, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    input_dim: usize,
    noise_dim: usize,
    states: Vec<f64>,
    modes: Vec<usize>,
    inputs: Vec<f64>,
    noise: Vec<f64>,
    pub seed: Option<SeedProvenance>,
}

impl Trajectory {
    pub fn with_capacity(dim: usize, input_dim: usize, noise_dim: usize, horizon: usize) -> Self {
        Trajectory {
            dim,
            input_dim,
            noise_dim,
            states: Vec::with_capacity(dim * (horizon + 1)),
            modes: Vec::with_capacity(horizon),
            inputs: Vec::with_capacity(input_dim * horizon),
            noise: Vec::with_capacity(noise_dim * horizon),
            seed: None,
        }
    }

    /// Builds a trajectory directly from a state list (no controls recorded).
    pub fn from_states(dim: usize, states: Vec<f64>) -> Result<Self> {
        if dim == 0 || states.is_empty() || !states.len().is_multiple_of(dim) {
            return Err(Error::input("state buffer length must be a positive multiple of dim"));
        }
        let horizon = states.len() / dim - 1;
        Ok(Trajectory {
            dim,
            input_dim: 0,
            noise_dim: 0,
            states,
            modes: vec![0; horizon],
            inputs: Vec::new(),
            noise: Vec::new(),
            seed: None,
        })
    }

    pub(crate) fn push_initial(&mut self, x0: &[f64]) {
        self.states.extend_from_slice(x0);
    }

    pub(crate) fn push_step(&mut self, u: &Control, w: &[f64], next: &[f64]) {
        self.modes.push(u.mode);
        self.inputs.extend_from_slice(&u.input);
        self.noise.extend_from_slice(w);
        self.states.extend_from_slice(next);
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    /// Number of transitions `T`.
    pub fn horizon(&self) -> usize {
        self.states.len() / self.dim - 1
    }

    pub fn state(&self, t: usize) -> &[f64] {
        &self.states[t * self.dim..(t + 1) * self.dim]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.dim)
    }

    pub fn mode(&self, t: usize) -> usize {
        self.modes[t]
    }

    pub fn input(&self, t: usize) -> &[f64] {
        &self.inputs[t * self.input_dim..(t + 1) * self.input_dim]
    }

    pub fn control(&self, t: usize) -> Control {
        Control { mode: self.modes[t], input: self.input(t).to_vec() }
    }

    pub fn controls(&self) -> Vec<Control> {
        (0..self.modes.len()).map(|t| self.control(t)).collect()
    }

    pub fn noise(&self, t: usize) -> &[f64] {
        &self.noise[t * self.noise_dim..(t + 1) * self.noise_dim]
    }

    pub fn noise_sequence(&self) -> Vec<Vec<f64>> {
        (0..self.modes.len()).map(|t| self.noise(t).to_vec()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    pub trajectories: Vec<Trajectory>,
    pub master_seed: Option<u64>,
}

impl TrajectoryEnsemble {
    pub fn new(trajectories: Vec<Trajectory>) -> Self {
        TrajectoryEnsemble { trajectories, master_seed: None }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Shortest horizon among members.
    pub fn horizon(&self) -> usize {
        self.trajectories.iter().map(Trajectory::horizon).min().unwrap_or(0)
    }
}
