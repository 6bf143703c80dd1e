//! Simulation of the true system `x_{t+1} = A x_t + B u_t + w_t` with
//! seeded standard-normal process noise and replayable trajectory logs.
//!
//! Reproducibility contract: every random quantity in a trial comes from a
//! counter-based generator seeded by the trial seed, with one independent
//! stream per purpose ([`NOISE_STREAM`], [`WARMUP_STREAM`],
//! [`AGENT_STREAM`]). Two trials with the same seed therefore see the exact
//! same noise sequence no matter which controller is running — the pairing
//! the benchmark harness relies on.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::fmt;
use std::marker::PhantomData;

use crate::riccati::{CostParams, SystemParams};
use crate::Real;

/// Stream index for process noise `w_t`.
pub const NOISE_STREAM: u64 = 0;
/// Stream index for the random inputs used during warm-up.
pub const WARMUP_STREAM: u64 = 1;
/// Stream index reserved for controller-internal randomness (sampling
/// controllers, restart perturbations).
pub const AGENT_STREAM: u64 = 2;

/// Errors from the simulation layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SystemError {
    /// Vectors or matrices had inconsistent dimensions.
    DimensionMismatch(&'static str),
    /// A scalar argument violated a documented precondition.
    InvalidArg(&'static str),
}

impl fmt::Display for SystemError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SystemError::DimensionMismatch(msg) => write!(f, "dimension mismatch: {msg}"),
            SystemError::InvalidArg(msg) => write!(f, "invalid argument: {msg}"),
        }
    }
}

impl std::error::Error for SystemError {}

/// Seeded source of iid standard-normal vectors.
///
/// Draws consume a dedicated stream of a counter-based generator, so models
/// created with the same `(seed, stream)` produce identical sequences and
/// models on different streams are independent for all practical purposes.
#[derive(Debug, Clone)]
pub struct NoiseModel<T> {
    dim: usize,
    rng: ChaCha8Rng,
    _scalar: PhantomData<T>,
}

impl<T: Real> NoiseModel<T>
where
    StandardNormal: Distribution<T>,
{
    /// Noise source on the default process-noise stream.
    pub fn new(dim: usize, seed: u64) -> Self {
        Self::with_stream(dim, seed, NOISE_STREAM)
    }

    /// Noise source on an explicit stream of the same seed family.
    pub fn with_stream(dim: usize, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            dim,
            rng,
            _scalar: PhantomData,
        }
    }

    /// Dimension of the drawn vectors.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Draws one iid standard-normal vector, advancing the stream.
    pub fn draw(&mut self) -> DVector<T> {
        DVector::from_fn(self.dim, |_, _| StandardNormal.sample(&mut self.rng))
    }
}

/// Generator for controller-internal randomness on [`AGENT_STREAM`].
pub fn agent_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(AGENT_STREAM);
    rng
}

/// One simulated transition: `x' = A x + B u + w`.
pub fn step<T: Real>(
    params: &SystemParams<T>,
    x: &DVector<T>,
    u: &DVector<T>,
    w: &DVector<T>,
) -> Result<DVector<T>, SystemError> {
    Ok(predict(params, x, u)? + w_checked(params, w)?)
}

/// Noise-free part of a transition, `A x + B u`, with the same rounding as
/// [`step`] so logs can be reconciled exactly.
pub fn predict<T: Real>(
    params: &SystemParams<T>,
    x: &DVector<T>,
    u: &DVector<T>,
) -> Result<DVector<T>, SystemError> {
    if x.len() != params.state_dim() {
        return Err(SystemError::DimensionMismatch("state length must equal n"));
    }
    if u.len() != params.input_dim() {
        return Err(SystemError::DimensionMismatch("input length must equal m"));
    }
    Ok(&params.a * x + &params.b * u)
}

fn w_checked<'a, T: Real>(
    params: &SystemParams<T>,
    w: &'a DVector<T>,
) -> Result<&'a DVector<T>, SystemError> {
    if w.len() != params.state_dim() {
        return Err(SystemError::DimensionMismatch("noise length must equal n"));
    }
    Ok(w)
}

/// Quadratic stage cost `x' Q x + u' R u`, clamped at zero against roundoff.
pub fn stage_cost<T: Real>(
    x: &DVector<T>,
    u: &DVector<T>,
    cost: &CostParams<T>,
) -> Result<T, SystemError> {
    if x.len() != cost.state_dim() {
        return Err(SystemError::DimensionMismatch("state length must match Q"));
    }
    if u.len() != cost.input_dim() {
        return Err(SystemError::DimensionMismatch("input length must match R"));
    }
    let c = (&cost.q * x).dot(x) + (&cost.r * u).dot(u);
    Ok(c.max(T::zero()))
}

/// Complete record of a simulated trajectory.
///
/// `states` holds `x_0 .. x_T` (one more entry than the other columns);
/// step `s` consists of `inputs[s]`, `noises[s]`, `costs[s]`, and the
/// resulting `states[s + 1]`, so the log can be replayed exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog<T: Real> {
    /// Visited states `x_0 .. x_T`.
    pub states: Vec<DVector<T>>,
    /// Applied inputs `u_0 .. u_{T-1}`.
    pub inputs: Vec<DVector<T>>,
    /// Realized process noise `w_0 .. w_{T-1}`.
    pub noises: Vec<DVector<T>>,
    /// Stage costs `c_0 .. c_{T-1}`.
    pub costs: Vec<T>,
}

impl<T: Real> TrajectoryLog<T> {
    /// Empty log starting from `x0`.
    pub fn new(x0: DVector<T>) -> Self {
        Self {
            states: vec![x0],
            inputs: Vec::new(),
            noises: Vec::new(),
            costs: Vec::new(),
        }
    }

    /// Appends one completed step.
    pub fn push(&mut self, u: DVector<T>, w: DVector<T>, x_next: DVector<T>, cost: T) {
        self.inputs.push(u);
        self.noises.push(w);
        self.states.push(x_next);
        self.costs.push(cost);
    }

    /// Number of completed steps.
    pub fn len(&self) -> usize {
        self.costs.len()
    }

    /// True when no steps have been logged.
    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    /// Final state of the log.
    pub fn last_state(&self) -> &DVector<T> {
        self.states.last().expect("log always holds x_0")
    }

    /// Checks that the log replays bit-for-bit under the given dynamics:
    /// every logged transition must satisfy
    /// `states[s + 1] == step(params, states[s], inputs[s], noises[s])`.
    pub fn replays_exactly(&self, params: &SystemParams<T>) -> Result<bool, SystemError> {
        for s in 0..self.len() {
            let expect = step(params, &self.states[s], &self.inputs[s], &self.noises[s])?;
            if expect != self.states[s + 1] {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Appends every step of `other`, whose initial state must be this
    /// log's final state.
    pub fn extend(&mut self, other: &TrajectoryLog<T>) -> Result<(), SystemError> {
        if other.states[0] != *self.last_state() {
            return Err(SystemError::InvalidArg(
                "continuation must start at the current final state",
            ));
        }
        for s in 0..other.len() {
            self.push(
                other.inputs[s].clone(),
                other.noises[s].clone(),
                other.states[s + 1].clone(),
                other.costs[s],
            );
        }
        Ok(())
    }
}

impl TrajectoryLog<f64> {
    /// Renders the log as CSV with 17 significant digits, one row per step:
    /// `t, x_0.., u_0.., w_0.., cost` where the state columns hold `x_t`
    /// (the state the step started from).
    pub fn to_csv(&self) -> String {
        let n = self.states[0].len();
        let m = self.inputs.first().map_or(0, |u| u.len());
        let mut out = String::new();
        out.push('t');
        for i in 0..n {
            out.push_str(&format!(",x_{i}"));
        }
        for i in 0..m {
            out.push_str(&format!(",u_{i}"));
        }
        for i in 0..n {
            out.push_str(&format!(",w_{i}"));
        }
        out.push_str(",cost\n");
        for s in 0..self.len() {
            out.push_str(&s.to_string());
            for v in self.states[s].iter() {
                out.push(',');
                out.push_str(&crate::harness::format_value(*v));
            }
            for v in self.inputs[s].iter() {
                out.push(',');
                out.push_str(&crate::harness::format_value(*v));
            }
            for v in self.noises[s].iter() {
                out.push(',');
                out.push_str(&crate::harness::format_value(*v));
            }
            out.push(',');
            out.push_str(&crate::harness::format_value(self.costs[s]));
            out.push('\n');
        }
        out
    }
}

/// Runs the randomized warm-up phase: from `x_0 = 0`, applies iid
/// standard-normal inputs for `horizon` steps under the true dynamics.
///
/// # Arguments
///
/// * `params` - true system dynamics.
/// * `cost` - stage-cost weights used for logging.
/// * `noise` - process-noise source (consumed sequentially).
/// * `inputs` - input source, conventionally on [`WARMUP_STREAM`].
/// * `horizon` - number of warm-up steps, at least 1.
pub fn warmup<T: Real>(
    params: &SystemParams<T>,
    cost: &CostParams<T>,
    noise: &mut NoiseModel<T>,
    inputs: &mut NoiseModel<T>,
    horizon: usize,
) -> Result<TrajectoryLog<T>, SystemError>
where
    StandardNormal: Distribution<T>,
{
    if horizon == 0 {
        return Err(SystemError::InvalidArg("warm-up horizon must be at least 1"));
    }
    if noise.dim() != params.state_dim() || inputs.dim() != params.input_dim() {
        return Err(SystemError::DimensionMismatch(
            "noise and input sources must match the system dimensions",
        ));
    }
    let mut log = TrajectoryLog::new(DVector::zeros(params.state_dim()));
    for _ in 0..horizon {
        let x = log.last_state().clone();
        let u = inputs.draw();
        let w = noise.draw();
        let c = stage_cost(&x, &u, cost)?;
        let x_next = step(params, &x, &u, &w)?;
        log.push(u, w, x_next, c);
    }
    Ok(log)
}
