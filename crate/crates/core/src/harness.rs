//! Benchmark harness: seeded trials, regret and diagnostic curves, the
//! additive regret decomposition, multi-seed aggregation, and CSV output.
//!
//! A trial is fully determined by `(config, agent kind, seed)`: every
//! random draw comes from counter-mode generators keyed by the seed, so
//! reruns are bit-identical and agents compared under one seed consume the
//! same warm-up inputs and the same process noise. Experiments fan trials
//! out across threads, but aggregation is an order-independent reduction,
//! so thread count never changes a single output byte.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::agents::{Agent, AgentConfig, AgentError, AgentKind, SelectionInfo};
use crate::estimation::{regressor, EstimationError, GramState};
use crate::riccati::{
    solve_dare_with, CostParams, DareOptions, RiccatiError, RiccatiSolution, SystemParams,
};
use crate::system::{
    predict, stage_cost, step, warmup, NoiseModel, SystemError, TrajectoryLog, WARMUP_STREAM,
};
use crate::{Matrix, Real, Vector};

/// Serializes one floating-point value with 17 significant digits so the
/// exact bit pattern survives a CSV round trip.
pub fn format_value(x: f64) -> String {
    format!("{x:.16e}")
}

/// Errors raised by configuration, trial execution, and output writing.
#[derive(Debug)]
pub enum HarnessError {
    /// The requested benchmark key is not in the registry.
    UnknownBenchmark(String),
    /// A configuration field violates its documented range.
    InvalidConfig(String),
    /// Matrix shapes disagree.
    DimensionMismatch(&'static str),
    /// Filesystem failure while writing outputs.
    Io(std::io::Error),
    /// Unexpected agent failure (not the counted per-trial kind).
    Agent(AgentError),
    /// Simulation-layer failure.
    System(SystemError),
    /// Estimator-layer failure.
    Estimation(EstimationError),
    /// Riccati failure on the true parameters (the benchmark itself must
    /// be stabilizable).
    Riccati(RiccatiError),
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::UnknownBenchmark(key) => write!(f, "unknown benchmark: {key}"),
            HarnessError::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
            HarnessError::DimensionMismatch(msg) => write!(f, "dimension mismatch: {msg}"),
            HarnessError::Io(e) => write!(f, "i/o error: {e}"),
            HarnessError::Agent(e) => write!(f, "agent error: {e}"),
            HarnessError::System(e) => write!(f, "system error: {e}"),
            HarnessError::Estimation(e) => write!(f, "estimation error: {e}"),
            HarnessError::Riccati(e) => write!(f, "riccati error: {e}"),
        }
    }
}

impl std::error::Error for HarnessError {}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e)
    }
}

impl From<SystemError> for HarnessError {
    fn from(e: SystemError) -> Self {
        HarnessError::System(e)
    }
}

impl From<EstimationError> for HarnessError {
    fn from(e: EstimationError) -> Self {
        HarnessError::Estimation(e)
    }
}

impl From<RiccatiError> for HarnessError {
    fn from(e: RiccatiError) -> Self {
        HarnessError::Riccati(e)
    }
}

/// Which plant an experiment runs on.
#[derive(Debug, Clone, PartialEq)]
pub enum SystemSpec {
    /// A named benchmark from [`benchmark_registry`].
    Registry(String),
    /// Caller-supplied matrices.
    Inline {
        /// True dynamics.
        params: SystemParams<f64>,
        /// Stage-cost weights.
        cost: CostParams<f64>,
    },
}

/// Agent families selectable in a config; `rbmle` expands over the
/// configured `alpha0` list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentSelector {
    /// Cost-biased selection.
    Rbmle,
    /// Confidence-ball optimism.
    Ofu,
    /// Thompson sampling.
    Ts,
    /// Certainty equivalence.
    Ce,
    /// True-parameter baseline.
    Oracle,
}

impl AgentSelector {
    /// Lowercase config/file label.
    pub fn label(&self) -> &'static str {
        match self {
            AgentSelector::Rbmle => "rbmle",
            AgentSelector::Ofu => "ofu",
            AgentSelector::Ts => "ts",
            AgentSelector::Ce => "ce",
            AgentSelector::Oracle => "oracle",
        }
    }
}

impl FromStr for AgentSelector {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "rbmle" => Ok(AgentSelector::Rbmle),
            "ofu" => Ok(AgentSelector::Ofu),
            "ts" => Ok(AgentSelector::Ts),
            "ce" => Ok(AgentSelector::Ce),
            "oracle" => Ok(AgentSelector::Oracle),
            other => Err(HarnessError::InvalidConfig(format!("unknown agent: {other}"))),
        }
    }
}

/// Complete description of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Plant selection.
    pub system: SystemSpec,
    /// Agent families to run (shared noise per seed).
    pub agents: Vec<AgentSelector>,
    /// Number of controlled steps `T` after warm-up.
    pub horizon: usize,
    /// Number of random-input warm-up steps priming the estimator.
    pub warmup: usize,
    /// Number of seeds per agent.
    pub seeds: usize,
    /// First seed; trials use `base_seed .. base_seed + seeds`.
    pub base_seed: u64,
    /// Confidence level of the ellipsoids.
    pub delta: f64,
    /// Ridge weight of the estimator.
    pub lambda: f64,
    /// Sub-Gaussian noise scale `L`.
    pub noise_bound: f64,
    /// Frobenius bound `c` of the parameter set; `None` resolves to
    /// `2 * ||[A|B]||_F` of the selected benchmark.
    pub norm_bound: Option<f64>,
    /// Bias pre-factors; each spawns one `rbmle` variant.
    pub alpha0: Vec<f64>,
    /// Directory for CSV output.
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: SystemSpec::Registry("scalar".to_owned()),
            agents: vec![AgentSelector::Rbmle, AgentSelector::Ofu, AgentSelector::Ts],
            horizon: 2000,
            warmup: 10,
            seeds: 200,
            base_seed: 0,
            delta: 0.05,
            lambda: 1.0,
            noise_bound: 1.0,
            norm_bound: None,
            alpha0: vec![1.0],
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// Checks every field against its documented range.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: &str| Err(HarnessError::InvalidConfig(msg.to_owned()));
        if self.horizon < 1 {
            return bad("T must be at least 1");
        }
        if self.seeds < 1 {
            return bad("seeds must be at least 1");
        }
        if self.agents.is_empty() {
            return bad("at least one agent is required");
        }
        for (i, a) in self.agents.iter().enumerate() {
            if self.agents[..i].contains(a) {
                return bad("duplicate agent");
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta must lie strictly in (0, 1)");
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return bad("lambda must be positive and finite");
        }
        if !(self.noise_bound > 0.0) || !self.noise_bound.is_finite() {
            return bad("L must be positive and finite");
        }
        if let Some(c) = self.norm_bound {
            if !(c > 0.0) || !c.is_finite() {
                return bad("c must be positive and finite");
            }
        }
        if self.agents.contains(&AgentSelector::Rbmle) {
            if self.alpha0.is_empty() {
                return bad("alpha0 must be nonempty when rbmle is selected");
            }
            if self.alpha0.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
                return bad("alpha0 values must be nonnegative and finite");
            }
        }
        Ok(())
    }

    /// Resolves the plant to concrete matrices.
    pub fn resolve_system(&self) -> Result<(SystemParams<f64>, CostParams<f64>), HarnessError> {
        match &self.system {
            SystemSpec::Registry(key) => benchmark_registry(key),
            SystemSpec::Inline { params, cost } => Ok((params.clone(), cost.clone())),
        }
    }

    /// The Frobenius bound actually used: the configured value, or twice
    /// the true parameter norm (a set comfortably containing the truth).
    pub fn resolved_norm_bound(&self, params: &SystemParams<f64>) -> f64 {
        self.norm_bound.unwrap_or_else(|| 2.0 * params.to_theta().norm())
    }

    /// Expands agent families into concrete named agents: one per selector,
    /// except `rbmle`, which spawns one variant per `alpha0` value
    /// (suffixed `_a<value>` when the sweep has several).
    pub fn expanded_agents(&self) -> Vec<(String, AgentKind<f64>)> {
        let mut out = Vec::new();
        for selector in &self.agents {
            match selector {
                AgentSelector::Rbmle => {
                    for &alpha0 in &self.alpha0 {
                        let name = if self.alpha0.len() == 1 {
                            "rbmle".to_owned()
                        } else {
                            format!("rbmle_a{alpha0}")
                        };
                        out.push((name, AgentKind::Rbmle { alpha0 }));
                    }
                }
                AgentSelector::Ofu => out.push(("ofu".to_owned(), AgentKind::Ofu)),
                AgentSelector::Ts => out.push(("ts".to_owned(), AgentKind::Ts)),
                AgentSelector::Ce => out.push(("ce".to_owned(), AgentKind::Ce)),
                AgentSelector::Oracle => out.push(("oracle".to_owned(), AgentKind::Oracle)),
            }
        }
        out
    }
}

/// Returns the exact matrices of a named benchmark.
///
/// Known keys: `scalar`, `laplacian3`, `integrator2`.
pub fn benchmark_registry(key: &str) -> Result<(SystemParams<f64>, CostParams<f64>), HarnessError> {
    let (a, b, q, r) = match key {
        "scalar" => (
            Matrix::from_element(1, 1, 1.0),
            Matrix::from_element(1, 1, 1.0),
            Matrix::from_element(1, 1, 10.0),
            Matrix::from_element(1, 1, 1.0),
        ),
        "laplacian3" => (
            Matrix::from_row_slice(
                3,
                3,
                &[1.01, 0.01, 0.0, 0.01, 1.01, 0.01, 0.0, 0.01, 1.01],
            ),
            Matrix::identity(3, 3),
            Matrix::identity(3, 3) * 10.0,
            Matrix::identity(3, 3),
        ),
        "integrator2" => (
            Matrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]),
            Matrix::identity(2, 2),
            Matrix::identity(2, 2) * 10.0,
            Matrix::identity(2, 2),
        ),
        other => return Err(HarnessError::UnknownBenchmark(other.to_owned())),
    };
    let params = SystemParams::new(a, b).map_err(HarnessError::Riccati)?;
    let cost = CostParams::new(q, r).map_err(HarnessError::Riccati)?;
    Ok((params, cost))
}

/// Registry keys in listing order.
pub fn benchmark_keys() -> &'static [&'static str] {
    &["scalar", "laplacian3", "integrator2"]
}

/// Why a trial was abandoned (counted in reports, never silently dropped).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialFailure {
    /// The agent found no stabilizable parameter even through fallbacks.
    NoFeasiblePoint,
    /// The state, cost, or estimator left the representable range.
    NumericalOverflow,
}

impl fmt::Display for TrialFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrialFailure::NoFeasiblePoint => write!(f, "no feasible point"),
            TrialFailure::NumericalOverflow => write!(f, "numerical overflow"),
        }
    }
}

/// Outcome of one trial: completed with full curves, or failed for one of
/// the expected adaptive-control reasons.
#[derive(Debug, Clone, PartialEq)]
pub enum TrialResult {
    /// The trial ran all `T` steps.
    Completed(Box<RunResult>),
    /// The trial was abandoned; the seed is reported as failed.
    Failed(TrialFailure),
}

/// Test and diagnostic switches for a single trial.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrialOptions {
    /// Replaces every process-noise draw with zero (deterministic decay
    /// mode used to pin closed-form expectations in tests).
    pub zero_noise: bool,
}

/// One frozen policy: the parameters selected at an episode boundary and
/// their Riccati solution (cached so the decomposition needs exactly one
/// solve per episode).
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEpisode {
    /// Post-warm-up time at which this policy took effect.
    pub start_time: usize,
    /// Selected parameters `[A | B]`.
    pub theta: Matrix,
    /// Riccati solution at `theta`.
    pub solution: RiccatiSolution<f64>,
}

/// The full policy history of a trial.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySequence {
    /// One entry per selection, in order.
    pub episodes: Vec<PolicyEpisode>,
    /// For `s = 0..=T`: index into `episodes` of the policy held entering
    /// step `s` (the final entry is the policy after the last advance).
    pub step_episode: Vec<usize>,
}

impl PolicySequence {
    /// The episode governing step `s`.
    pub fn at_step(&self, s: usize) -> &PolicyEpisode {
        &self.episodes[self.step_episode[s]]
    }
}

/// Cumulative curves of the four-term regret decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    /// Martingale term: realized minus conditionally expected value.
    pub r1: Vec<f64>,
    /// Policy-switch term; nonzero only across episode boundaries.
    pub r2: Vec<f64>,
    /// Model-mismatch term: true versus selected one-step prediction.
    pub r3: Vec<f64>,
    /// Optimism term: selected minus true average cost.
    pub r4: Vec<f64>,
}

/// Everything measured in one completed trial.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    /// Seed that generated every random draw.
    pub seed: u64,
    /// Warm-up trajectory (its costs are excluded from regret).
    pub warmup_log: TrajectoryLog<f64>,
    /// The `T` controlled steps, starting from the final warm-up state.
    pub log: TrajectoryLog<f64>,
    /// `R(t) = sum_{s<t} c_s - t J*(true)` for `t = 1..=T`.
    pub regret: Vec<f64>,
    /// Frobenius distance of the active parameters from the truth, per step.
    pub delta: Vec<f64>,
    /// Frobenius distance of the active gain from the optimal gain, per step.
    pub gain_error: Vec<f64>,
    /// Confidence radius of the ball used at the governing selection, per step.
    pub beta: Vec<f64>,
    /// Weighted distance of the selected parameters in that ball, per step.
    pub weighted_distance: Vec<f64>,
    /// Cumulative decomposition curves.
    pub decomposition: Decomposition,
    /// Diagnostics of each selection, in order.
    pub selections: Vec<SelectionInfo<f64>>,
    /// Policy history.
    pub policy: PolicySequence,
    /// Riccati solution at the true parameters.
    pub true_solution: RiccatiSolution<f64>,
}

/// Runs one seeded trial of one agent under the default options.
pub fn run_trial(
    cfg: &ExperimentConfig,
    kind: AgentKind<f64>,
    seed: u64,
) -> Result<TrialResult, HarnessError> {
    run_trial_with_options(cfg, kind, seed, TrialOptions::default())
}

/// Runs one seeded trial of one agent.
///
/// Protocol: from `x_0 = 0`, `cfg.warmup` steps with standard-normal
/// inputs prime the estimator; the agent then makes its first selection
/// and runs `T` steps of observe, act, pay, perturb, update, advance. The
/// warm-up inputs, process noise, and agent randomness live on separate
/// counter streams of the seed, so every agent kind sees identical data
/// for a given seed.
pub fn run_trial_with_options(
    cfg: &ExperimentConfig,
    kind: AgentKind<f64>,
    seed: u64,
    options: TrialOptions,
) -> Result<TrialResult, HarnessError> {
    cfg.validate()?;
    let (params, cost) = cfg.resolve_system()?;
    let n = params.state_dim();
    let m = params.input_dim();
    let true_solution = solve_dare_with(&params, &cost, &DareOptions::default(), None)?;
    let true_theta = params.to_theta();

    let mut noise = NoiseModel::<f64>::new(n, seed);
    let mut warm_inputs = NoiseModel::<f64>::with_stream(m, seed, WARMUP_STREAM);
    let warmup_log = if cfg.warmup == 0 {
        TrajectoryLog::new(DVector::zeros(n))
    } else if options.zero_noise {
        // Same warm-up inputs as the noisy variant, zero process noise.
        let mut log = TrajectoryLog::new(DVector::zeros(n));
        for _ in 0..cfg.warmup {
            let x = log.last_state().clone();
            let u = warm_inputs.draw();
            let c = stage_cost(&x, &u, &cost)?;
            let w = DVector::zeros(n);
            let x_next = step(&params, &x, &u, &w)?;
            log.push(u, w, x_next, c);
        }
        log
    } else {
        warmup(&params, &cost, &mut noise, &mut warm_inputs, cfg.warmup)?
    };

    let mut gram = GramState::new(n, m, cfg.lambda)?;
    for s in 0..warmup_log.len() {
        gram.update(
            &regressor(&warmup_log.states[s], &warmup_log.inputs[s]),
            &warmup_log.states[s + 1],
        )?;
    }

    let agent_cfg =
        AgentConfig::new(cfg.delta, cfg.noise_bound, cfg.resolved_norm_bound(&params));
    let mut agent = match Agent::new(
        kind,
        agent_cfg,
        cost.clone(),
        &gram,
        Some(params.clone()),
        crate::system::agent_rng(seed),
    ) {
        Ok(agent) => agent,
        Err(AgentError::NoFeasiblePoint) => {
            return Ok(TrialResult::Failed(TrialFailure::NoFeasiblePoint))
        }
        Err(e) => return Err(HarnessError::Agent(e)),
    };

    let mut log = TrajectoryLog::new(warmup_log.last_state().clone());
    let mut selections = vec![agent.last_selection().clone()];
    let mut policy = PolicySequence {
        episodes: vec![PolicyEpisode {
            start_time: 0,
            theta: agent.theta().clone(),
            solution: agent.solution().clone(),
        }],
        step_episode: Vec::with_capacity(cfg.horizon + 1),
    };

    for _ in 0..cfg.horizon {
        policy.step_episode.push(policy.episodes.len() - 1);
        let x = log.last_state().clone();
        let u = agent.control(&x);
        let c = stage_cost(&x, &u, &cost)?;
        let w = if options.zero_noise {
            DVector::zeros(n)
        } else {
            noise.draw()
        };
        let x_next = step(&params, &x, &u, &w)?;
        if !c.is_finite() || x_next.iter().any(|v| !v.is_finite()) {
            return Ok(TrialResult::Failed(TrialFailure::NumericalOverflow));
        }
        log.push(u.clone(), w, x_next.clone(), c);
        match gram.update(&regressor(&x, &u), &x_next) {
            Ok(()) => {}
            Err(EstimationError::NonFinite) | Err(EstimationError::IllConditioned) => {
                // An exploding closed loop defeats the running statistics long
                // before the raw state overflows; both are the same failure.
                return Ok(TrialResult::Failed(TrialFailure::NumericalOverflow))
            }
            Err(e) => return Err(e.into()),
        }
        match agent.advance(&gram) {
            Ok(Some(info)) => {
                selections.push(info);
                policy.episodes.push(PolicyEpisode {
                    start_time: agent.last_selection().time,
                    theta: agent.theta().clone(),
                    solution: agent.solution().clone(),
                });
            }
            Ok(None) => {}
            Err(AgentError::NoFeasiblePoint) => {
                return Ok(TrialResult::Failed(TrialFailure::NoFeasiblePoint))
            }
            Err(e) => return Err(HarnessError::Agent(e)),
        }
    }
    policy.step_episode.push(policy.episodes.len() - 1);

    let regret = regret_curve(&log, &true_solution);
    let decomposition = decompose_regret(&log, &policy, &params, &true_solution)?;
    let steps = cfg.horizon;
    let mut delta = Vec::with_capacity(steps);
    let mut gain_error = Vec::with_capacity(steps);
    let mut beta = Vec::with_capacity(steps);
    let mut weighted_distance = Vec::with_capacity(steps);
    for s in 0..steps {
        let idx = policy.step_episode[s];
        let episode = &policy.episodes[idx];
        delta.push(metric_delta(&episode.theta, &true_theta)?);
        gain_error.push((&episode.solution.k - &true_solution.k).norm());
        beta.push(selections[idx].beta);
        weighted_distance.push(selections[idx].weighted_distance);
    }

    Ok(TrialResult::Completed(Box::new(RunResult {
        seed,
        warmup_log,
        log,
        regret,
        delta,
        gain_error,
        beta,
        weighted_distance,
        decomposition,
        selections,
        policy,
        true_solution,
    })))
}

/// Regret curve `R(t) = sum_{s<t} c_s - t J*(true)` for `t = 1..=T`, so
/// `R(t)/t` is the average-cost excess over the optimal stationary policy.
pub fn regret_curve(log: &TrajectoryLog<f64>, true_solution: &RiccatiSolution<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(log.len());
    let mut cumulative = 0.0;
    for (t, c) in log.costs.iter().enumerate() {
        cumulative += c;
        out.push(cumulative - (t + 1) as f64 * true_solution.avg_cost);
    }
    out
}

/// Frobenius distance between a selected parameter matrix and the truth.
pub fn metric_delta<T: Real>(
    theta: &DMatrix<T>,
    theta_true: &DMatrix<T>,
) -> Result<T, HarnessError> {
    if theta.shape() != theta_true.shape() {
        return Err(HarnessError::DimensionMismatch(
            "parameter matrices must have equal shapes",
        ));
    }
    Ok((theta - theta_true).norm())
}

fn quad(p: &Matrix, v: &Vector) -> f64 {
    (p * v).dot(v)
}

/// Splits the regret of a logged run into four cumulative terms whose sum
/// reproduces `R(t)` identically (up to float round-off) at every step.
///
/// With `f_s` the true-dynamics prediction and `g_s` the selected-model
/// prediction of `x_{s+1}`, conditional expectations under unit-covariance
/// noise are evaluated in closed form
/// (`E[x' P x | F_s] = f' P f + trace P`), giving per-step increments
///
/// * `r1`: `x_s' P_s x_s - (f_s' P_{s+1} f_s + trace P_{s+1})` — a
///   martingale difference;
/// * `r2`: `f_s' (P_{s+1} - P_s) f_s + trace(P_{s+1} - P_s)` — zero except
///   across episode boundaries;
/// * `r3`: `f_s' P_s f_s - g_s' P_s g_s` — model mismatch;
/// * `r4`: `J*(theta_s) - J*(true)` — optimism.
///
/// The sum telescopes against the Bellman identity
/// `c_s = x_s' P_s x_s + J*(theta_s) - g_s' P_s g_s - trace P_s`, which
/// holds because every logged input is the optimal gain at `theta_s`.
pub fn decompose_regret(
    log: &TrajectoryLog<f64>,
    policy: &PolicySequence,
    true_params: &SystemParams<f64>,
    true_solution: &RiccatiSolution<f64>,
) -> Result<Decomposition, HarnessError> {
    let steps = log.len();
    if policy.step_episode.len() < steps + 1 {
        return Err(HarnessError::DimensionMismatch(
            "policy must cover every step plus the final boundary",
        ));
    }
    let n = true_params.state_dim();
    let mut episode_params = Vec::with_capacity(policy.episodes.len());
    for episode in &policy.episodes {
        episode_params.push(SystemParams::from_theta(&episode.theta, n)?);
    }
    let mut decomposition = Decomposition {
        r1: Vec::with_capacity(steps),
        r2: Vec::with_capacity(steps),
        r3: Vec::with_capacity(steps),
        r4: Vec::with_capacity(steps),
    };
    let (mut c1, mut c2, mut c3, mut c4) = (0.0, 0.0, 0.0, 0.0);
    for s in 0..steps {
        let here = policy.step_episode[s];
        let next = policy.step_episode[s + 1];
        let p_here = &policy.episodes[here].solution.p;
        let p_next = &policy.episodes[next].solution.p;
        let x = &log.states[s];
        let u = &log.inputs[s];
        let f = predict(true_params, x, u)?;
        let g = predict(&episode_params[here], x, u)?;
        c1 += quad(p_here, x) - (quad(p_next, &f) + p_next.trace());
        c2 += quad(p_next, &f) - quad(p_here, &f) + p_next.trace() - p_here.trace();
        c3 += quad(p_here, &f) - quad(p_here, &g);
        c4 += policy.episodes[here].solution.avg_cost - true_solution.avg_cost;
        decomposition.r1.push(c1);
        decomposition.r2.push(c2);
        decomposition.r3.push(c3);
        decomposition.r4.push(c4);
    }
    Ok(decomposition)
}

/// Median, mean, and sample standard deviation of a nonempty slice.
pub fn aggregate(values: &[f64]) -> (f64, f64, f64) {
    assert!(!values.is_empty(), "aggregate needs at least one value");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("aggregates must be finite"));
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    let std = if sorted.len() < 2 {
        0.0
    } else {
        let ss = sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
        (ss / (sorted.len() - 1) as f64).sqrt()
    };
    (median, mean, std)
}

/// Aggregated curves of one agent across all its seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentReport {
    /// Output name (`rbmle`, `rbmle_a0.1`, `ofu`, ...).
    pub name: String,
    /// The agent that produced these curves.
    pub kind: AgentKind<f64>,
    /// Per-seed regret curves in seed order; `None` marks a failed trial.
    pub regret_per_seed: Vec<Option<Vec<f64>>>,
    /// Median regret over completed seeds, per step.
    pub median_regret: Vec<f64>,
    /// Mean regret over completed seeds, per step.
    pub mean_regret: Vec<f64>,
    /// Sample standard deviation of regret over completed seeds, per step.
    pub std_regret: Vec<f64>,
    /// Mean parameter distance over completed seeds, per step.
    pub mean_delta: Vec<f64>,
    /// Mean gain error over completed seeds, per step.
    pub mean_gain_error: Vec<f64>,
    /// Seeds whose trials failed, with the reason.
    pub failures: Vec<(u64, TrialFailure)>,
    /// Full result of the first completed seed (diagnostics source).
    pub representative: Option<Box<RunResult>>,
}

impl AgentReport {
    /// Number of seeds that completed.
    pub fn completed(&self) -> usize {
        self.regret_per_seed.iter().filter(|r| r.is_some()).count()
    }
}

/// Aggregated output of [`run_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    /// Steps per trial.
    pub horizon: usize,
    /// Seeds per agent.
    pub seeds: usize,
    /// First seed.
    pub base_seed: u64,
    /// One report per expanded agent, in expansion order.
    pub agents: Vec<AgentReport>,
}

impl ExperimentReport {
    /// Total completed trials across agents.
    pub fn completed_trials(&self) -> usize {
        self.agents.iter().map(|a| a.completed()).sum()
    }

    /// Total failed trials across agents.
    pub fn failed_trials(&self) -> usize {
        self.agents.iter().map(|a| a.failures.len()).sum()
    }
}

/// Runs every `(agent, seed)` trial of the experiment and aggregates the
/// curves. Parallelism comes from the current global thread pool; use
/// [`run_experiment_with_threads`] to pin the worker count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    cfg.validate()?;
    // Fail fast on an unstabilizable benchmark before spawning trials.
    let (params, cost) = cfg.resolve_system()?;
    solve_dare_with(&params, &cost, &DareOptions::default(), None)?;

    let agents = cfg.expanded_agents();
    let seeds: Vec<u64> = (0..cfg.seeds as u64).map(|i| cfg.base_seed + i).collect();
    let jobs: Vec<(usize, u64)> = agents
        .iter()
        .enumerate()
        .flat_map(|(ai, _)| seeds.iter().map(move |&s| (ai, s)))
        .collect();
    let outcomes: Vec<Result<TrialResult, HarnessError>> = jobs
        .par_iter()
        .map(|&(ai, seed)| run_trial(cfg, agents[ai].1, seed))
        .collect();

    let steps = cfg.horizon;
    let mut reports = Vec::with_capacity(agents.len());
    let mut cursor = outcomes.into_iter();
    for (name, kind) in agents {
        let mut regret_per_seed = Vec::with_capacity(cfg.seeds);
        let mut failures = Vec::new();
        let mut representative = None;
        let mut sum_delta = vec![0.0; steps];
        let mut sum_gain = vec![0.0; steps];
        for &seed in &seeds {
            match cursor.next().expect("one outcome per job")? {
                TrialResult::Completed(result) => {
                    regret_per_seed.push(Some(result.regret.clone()));
                    for s in 0..steps {
                        sum_delta[s] += result.delta[s];
                        sum_gain[s] += result.gain_error[s];
                    }
                    if representative.is_none() {
                        representative = Some(result);
                    }
                }
                TrialResult::Failed(reason) => {
                    regret_per_seed.push(None);
                    failures.push((seed, reason));
                }
            }
        }
        let completed = regret_per_seed.iter().filter(|r| r.is_some()).count();
        let mut median_regret = Vec::with_capacity(steps);
        let mut mean_regret = Vec::with_capacity(steps);
        let mut std_regret = Vec::with_capacity(steps);
        let mut slice = Vec::with_capacity(completed);
        for s in 0..steps {
            slice.clear();
            slice.extend(
                regret_per_seed
                    .iter()
                    .flatten()
                    .map(|curve| curve[s]),
            );
            if slice.is_empty() {
                median_regret.push(f64::NAN);
                mean_regret.push(f64::NAN);
                std_regret.push(f64::NAN);
            } else {
                let (median, mean, std) = aggregate(&slice);
                median_regret.push(median);
                mean_regret.push(mean);
                std_regret.push(std);
            }
        }
        let scale = if completed > 0 { completed as f64 } else { f64::NAN };
        reports.push(AgentReport {
            name,
            kind,
            regret_per_seed,
            median_regret,
            mean_regret,
            std_regret,
            mean_delta: sum_delta.iter().map(|v| v / scale).collect(),
            mean_gain_error: sum_gain.iter().map(|v| v / scale).collect(),
            failures,
            representative,
        });
    }
    Ok(ExperimentReport {
        horizon: cfg.horizon,
        seeds: cfg.seeds,
        base_seed: cfg.base_seed,
        agents: reports,
    })
}

/// Like [`run_experiment`] but with an explicit worker-thread cap. The
/// report is byte-identical for every thread count.
pub fn run_experiment_with_threads(
    cfg: &ExperimentConfig,
    threads: Option<usize>,
) -> Result<ExperimentReport, HarnessError> {
    match threads {
        None => run_experiment(cfg),
        Some(count) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(count.max(1))
                .build()
                .map_err(|e| HarnessError::InvalidConfig(format!("thread pool: {e}")))?;
            pool.install(|| run_experiment(cfg))
        }
    }
}

/// Writes `regret_<name>.csv`: one `t` column plus one column per seed;
/// failed seeds serialize as `nan` in every row.
pub fn write_regret_csv(
    path: &Path,
    report: &AgentReport,
    base_seed: u64,
    horizon: usize,
) -> Result<(), HarnessError> {
    let mut out = String::new();
    out.push('t');
    for i in 0..report.regret_per_seed.len() {
        out.push_str(&format!(",seed_{}", base_seed + i as u64));
    }
    out.push('\n');
    for t in 1..=horizon {
        out.push_str(&t.to_string());
        for curve in &report.regret_per_seed {
            out.push(',');
            match curve {
                Some(values) => out.push_str(&format_value(values[t - 1])),
                None => out.push_str("nan"),
            }
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Writes `summary.csv` with columns `t, agent, median, mean, std`,
/// agent-major, `t` ascending within each agent.
pub fn write_summary_csv(path: &Path, report: &ExperimentReport) -> Result<(), HarnessError> {
    let mut out = String::from("t,agent,median,mean,std\n");
    for agent in &report.agents {
        for t in 1..=report.horizon {
            out.push_str(&format!(
                "{t},{},{},{},{}\n",
                agent.name,
                format_value(agent.median_regret[t - 1]),
                format_value(agent.mean_regret[t - 1]),
                format_value(agent.std_regret[t - 1]),
            ));
        }
    }
    write_atomic(path, out.as_bytes())
}

/// Writes `diagnostics_<agent>_<seed>.csv` for one completed trial:
/// per-step parameter distance, gain error, ball radius, weighted distance,
/// and the four cumulative decomposition terms.
pub fn write_diagnostics_csv(path: &Path, result: &RunResult) -> Result<(), HarnessError> {
    let mut out = String::from("t,delta,gain_err,beta,wdist,R1,R2,R3,R4\n");
    for t in 1..=result.log.len() {
        let s = t - 1;
        out.push_str(&format!(
            "{t},{},{},{},{},{},{},{},{}\n",
            format_value(result.delta[s]),
            format_value(result.gain_error[s]),
            format_value(result.beta[s]),
            format_value(result.weighted_distance[s]),
            format_value(result.decomposition.r1[s]),
            format_value(result.decomposition.r2[s]),
            format_value(result.decomposition.r3[s]),
            format_value(result.decomposition.r4[s]),
        ));
    }
    write_atomic(path, out.as_bytes())
}

/// Writes the full CSV set of an experiment into `out_dir` (created if
/// missing): per-agent regret tables, one representative diagnostics file
/// per agent, and the cross-agent summary. Returns the written paths.
pub fn write_experiment_csvs(
    out_dir: &Path,
    report: &ExperimentReport,
) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for agent in &report.agents {
        let regret_path = out_dir.join(format!("regret_{}.csv", agent.name));
        write_regret_csv(&regret_path, agent, report.base_seed, report.horizon)?;
        written.push(regret_path);
        if let Some(result) = &agent.representative {
            let diag_path =
                out_dir.join(format!("diagnostics_{}_{}.csv", agent.name, result.seed));
            write_diagnostics_csv(&diag_path, result)?;
            written.push(diag_path);
        }
    }
    let summary_path = out_dir.join("summary.csv");
    write_summary_csv(&summary_path, report)?;
    written.push(summary_path);
    Ok(written)
}

/// Writes via a sibling temp file and rename, so a crashed run never
/// leaves a half-written CSV behind.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let tmp = path.with_extension("tmp");
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            system: SystemSpec::Registry("scalar".to_owned()),
            agents: vec![AgentSelector::Rbmle],
            horizon: 60,
            warmup: 10,
            seeds: 1,
            base_seed: 0,
            delta: 0.05,
            lambda: 1.0,
            noise_bound: 1.0,
            norm_bound: None,
            alpha0: vec![1.0],
            out_dir: PathBuf::from("unused"),
        }
    }

    fn completed(result: TrialResult) -> RunResult {
        match result {
            TrialResult::Completed(r) => *r,
            TrialResult::Failed(f) => panic!("trial unexpectedly failed: {f}"),
        }
    }

    #[test]
    fn registry_returns_the_exact_benchmark_matrices() {
        let (params, cost) = benchmark_registry("laplacian3").unwrap();
        let expected_a = Matrix::from_row_slice(
            3,
            3,
            &[1.01, 0.01, 0.0, 0.01, 1.01, 0.01, 0.0, 0.01, 1.01],
        );
        assert_eq!(params.a, expected_a);
        assert_eq!(params.b, Matrix::identity(3, 3));
        assert_eq!(cost.q, Matrix::identity(3, 3) * 10.0);
        assert_eq!(cost.r, Matrix::identity(3, 3));

        let (params, cost) = benchmark_registry("integrator2").unwrap();
        assert_eq!(params.a, Matrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]));
        assert_eq!(params.b, Matrix::identity(2, 2));
        assert_eq!(cost.q, Matrix::identity(2, 2) * 10.0);
        assert_eq!(cost.r, Matrix::identity(2, 2));

        let (params, cost) = benchmark_registry("scalar").unwrap();
        assert_eq!(params.a[(0, 0)], 1.0);
        assert_eq!(params.b[(0, 0)], 1.0);
        assert_eq!(cost.q[(0, 0)], 10.0);
        assert_eq!(cost.r[(0, 0)], 1.0);

        assert!(matches!(
            benchmark_registry("pendulum"),
            Err(HarnessError::UnknownBenchmark(k)) if k == "pendulum"
        ));
        for key in benchmark_keys() {
            assert!(benchmark_registry(key).is_ok());
        }
    }

    #[test]
    fn regret_matches_the_direct_formula() {
        let (params, cost) = benchmark_registry("scalar").unwrap();
        let solution = solve_dare_with(&params, &cost, &DareOptions::default(), None).unwrap();
        // One zero-cost step: R(1) = -J*.
        let mut log = TrajectoryLog::new(Vector::zeros(1));
        log.push(Vector::zeros(1), Vector::zeros(1), Vector::zeros(1), 0.0);
        let r = regret_curve(&log, &solution);
        assert_eq!(r, vec![-solution.avg_cost]);
        // All costs equal to J*: regret identically zero.
        let mut log = TrajectoryLog::new(Vector::zeros(1));
        for _ in 0..5 {
            log.push(
                Vector::zeros(1),
                Vector::zeros(1),
                Vector::zeros(1),
                solution.avg_cost,
            );
        }
        for v in regret_curve(&log, &solution) {
            assert!(v.abs() <= 1e-12 * (1.0 + solution.avg_cost));
        }
        // Pseudo-random costs: matches direct recomputation.
        let mut log = TrajectoryLog::new(Vector::zeros(1));
        let mut state = 11u64;
        let mut costs = Vec::new();
        for _ in 0..40 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            let c = (state >> 11) as f64 / (1u64 << 53) as f64 * 30.0;
            costs.push(c);
            log.push(Vector::zeros(1), Vector::zeros(1), Vector::zeros(1), c);
        }
        let r = regret_curve(&log, &solution);
        for t in 1..=costs.len() {
            let direct: f64 =
                costs[..t].iter().sum::<f64>() - t as f64 * solution.avg_cost;
            assert!((r[t - 1] - direct).abs() <= 1e-10);
        }
    }

    #[test]
    fn metric_delta_is_the_frobenius_distance() {
        let theta = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
        assert_eq!(metric_delta(&theta, &theta).unwrap(), 0.0);
        let mut other = theta.clone();
        other[(0, 1)] += 0.3;
        assert_relative_eq!(metric_delta(&other, &theta).unwrap(), 0.3, epsilon = 1e-15);
        let wrong = Matrix::zeros(2, 2);
        assert!(matches!(
            metric_delta(&wrong, &theta),
            Err(HarnessError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn aggregate_matches_hand_values() {
        assert_eq!(aggregate(&[1.0, 2.0, 3.0]), (2.0, 2.0, 1.0));
        let (median, mean, _) = aggregate(&[4.0, 1.0, 3.0, 2.0]);
        assert_eq!(median, 2.5);
        assert_eq!(mean, 2.5);
        let (median, mean, std) = aggregate(&[7.0]);
        assert_eq!((median, mean, std), (7.0, 7.0, 0.0));
    }

    #[test]
    fn oracle_with_zero_noise_earns_exactly_minus_t_times_optimal_cost() {
        let cfg = ExperimentConfig {
            warmup: 0,
            horizon: 50,
            ..small_config()
        };
        let options = TrialOptions { zero_noise: true };
        let result = completed(
            run_trial_with_options(&cfg, AgentKind::Oracle, 3, options).unwrap(),
        );
        // From x0 = 0 with no noise, every state, input, and cost is zero.
        for c in &result.log.costs {
            assert_eq!(*c, 0.0);
        }
        let j = result.true_solution.avg_cost;
        for t in 1..=cfg.horizon {
            assert_relative_eq!(result.regret[t - 1], -(t as f64) * j, max_relative = 1e-12);
            // The whole regret sits in the martingale term.
            assert_relative_eq!(
                result.decomposition.r1[t - 1],
                -(t as f64) * j,
                max_relative = 1e-12
            );
            assert_eq!(result.decomposition.r2[t - 1], 0.0);
            assert_eq!(result.decomposition.r3[t - 1], 0.0);
            assert_eq!(result.decomposition.r4[t - 1], 0.0);
        }
    }

    #[test]
    fn oracle_decomposition_terms_vanish_even_with_noise() {
        let cfg = ExperimentConfig {
            horizon: 120,
            ..small_config()
        };
        let result = completed(run_trial(&cfg, AgentKind::Oracle, 5).unwrap());
        // theta_t is the truth in every episode: switching, mismatch, and
        // optimism terms are exactly zero.
        for s in 0..cfg.horizon {
            assert_eq!(result.decomposition.r2[s], 0.0);
            assert_eq!(result.decomposition.r3[s], 0.0);
            assert_eq!(result.decomposition.r4[s], 0.0);
        }
    }

    #[test]
    fn trials_are_bit_identical_across_reruns() {
        let cfg = small_config();
        let a = completed(run_trial(&cfg, AgentKind::Rbmle { alpha0: 1.0 }, 7).unwrap());
        let b = completed(run_trial(&cfg, AgentKind::Rbmle { alpha0: 1.0 }, 7).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn agents_share_warmup_and_noise_under_one_seed() {
        let cfg = small_config();
        let rbmle = completed(run_trial(&cfg, AgentKind::Rbmle { alpha0: 1.0 }, 9).unwrap());
        let ofu = completed(run_trial(&cfg, AgentKind::Ofu, 9).unwrap());
        let ts = completed(run_trial(&cfg, AgentKind::Ts, 9).unwrap());
        assert_eq!(rbmle.warmup_log, ofu.warmup_log);
        assert_eq!(rbmle.warmup_log, ts.warmup_log);
        assert_eq!(rbmle.log.noises, ofu.log.noises);
        assert_eq!(rbmle.log.noises, ts.log.noises);
        // Different seeds draw different noise.
        let other = completed(run_trial(&cfg, AgentKind::Ofu, 10).unwrap());
        assert_ne!(ofu.log.noises, other.log.noises);
    }

    #[test]
    fn decomposition_identity_holds_along_an_adaptive_run() {
        let cfg = ExperimentConfig {
            horizon: 200,
            ..small_config()
        };
        for kind in [AgentKind::Rbmle { alpha0: 1.0 }, AgentKind::Ts, AgentKind::Ce] {
            let result = completed(run_trial(&cfg, kind, 1).unwrap());
            for t in 1..=cfg.horizon {
                let s = t - 1;
                let total = result.decomposition.r1[s]
                    + result.decomposition.r2[s]
                    + result.decomposition.r3[s]
                    + result.decomposition.r4[s];
                let gap = (result.regret[s] - total).abs();
                assert!(
                    gap <= 1e-6 * (1.0 + result.regret[s].abs()),
                    "identity violated at t={t}: gap {gap:.3e}"
                );
            }
        }
    }

    #[test]
    fn switching_term_is_zero_inside_episodes() {
        let cfg = ExperimentConfig {
            horizon: 100,
            ..small_config()
        };
        let result = completed(run_trial(&cfg, AgentKind::Rbmle { alpha0: 1.0 }, 2).unwrap());
        let mut boundary_steps = 0;
        for s in 0..cfg.horizon {
            let increment = result.decomposition.r2[s]
                - if s > 0 { result.decomposition.r2[s - 1] } else { 0.0 };
            if result.policy.step_episode[s + 1] == result.policy.step_episode[s] {
                assert_eq!(increment, 0.0, "switching term moved inside an episode");
            } else {
                boundary_steps += 1;
            }
        }
        assert!(boundary_steps >= 5, "expected several boundary crossings");
    }

    #[test]
    fn parameter_distance_is_piecewise_constant_per_episode() {
        let cfg = ExperimentConfig {
            horizon: 150,
            ..small_config()
        };
        let result = completed(run_trial(&cfg, AgentKind::Ofu, 4).unwrap());
        let mut changes = 0;
        for s in 1..cfg.horizon {
            if result.policy.step_episode[s] == result.policy.step_episode[s - 1] {
                assert_eq!(
                    result.delta[s], result.delta[s - 1],
                    "delta changed inside an episode"
                );
                assert_eq!(result.gain_error[s], result.gain_error[s - 1]);
                assert_eq!(result.beta[s], result.beta[s - 1]);
            } else {
                changes += 1;
            }
        }
        // Boundaries happened (doubling schedule reaches t=127 within 150).
        assert!(changes >= 6, "expected several episode boundaries");
    }

    #[test]
    fn selections_of_ball_constrained_agents_stay_inside_the_ball() {
        let cfg = ExperimentConfig {
            horizon: 150,
            ..small_config()
        };
        for kind in [AgentKind::Rbmle { alpha0: 1.0 }, AgentKind::Ofu, AgentKind::Ce] {
            let result = completed(run_trial(&cfg, kind, 6).unwrap());
            for info in &result.selections {
                assert!(
                    info.weighted_distance <= info.beta * (1.0 + 1e-9),
                    "selection left the ball: {} > {}",
                    info.weighted_distance,
                    info.beta
                );
            }
        }
    }

    #[test]
    fn experiment_aggregates_and_failure_accounting_are_consistent() {
        let cfg = ExperimentConfig {
            agents: vec![AgentSelector::Rbmle, AgentSelector::Oracle],
            horizon: 40,
            seeds: 3,
            base_seed: 11,
            ..small_config()
        };
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.agents.len(), 2);
        assert_eq!(report.agents[0].name, "rbmle");
        assert_eq!(report.agents[1].name, "oracle");
        assert_eq!(report.completed_trials() + report.failed_trials(), 6);
        assert_eq!(report.failed_trials(), 0);
        for agent in &report.agents {
            assert_eq!(agent.regret_per_seed.len(), 3);
            // Single-trial recomputation matches the stored per-seed curve.
            let solo = completed(run_trial(&cfg, agent.kind, 12).unwrap());
            assert_eq!(
                agent.regret_per_seed[1].as_ref().unwrap(),
                &solo.regret
            );
            // Aggregates at the final step match a direct computation.
            let finals: Vec<f64> = agent
                .regret_per_seed
                .iter()
                .map(|r| r.as_ref().unwrap()[cfg.horizon - 1])
                .collect();
            let (median, mean, std) = aggregate(&finals);
            assert_eq!(agent.median_regret[cfg.horizon - 1], median);
            assert_eq!(agent.mean_regret[cfg.horizon - 1], mean);
            assert_eq!(agent.std_regret[cfg.horizon - 1], std);
        }
    }

    #[test]
    fn single_seed_aggregate_equals_the_trial() {
        let cfg = ExperimentConfig {
            agents: vec![AgentSelector::Ofu],
            horizon: 30,
            seeds: 1,
            ..small_config()
        };
        let report = run_experiment(&cfg).unwrap();
        let solo = completed(run_trial(&cfg, AgentKind::Ofu, cfg.base_seed).unwrap());
        assert_eq!(report.agents[0].median_regret, solo.regret);
        assert_eq!(report.agents[0].mean_regret, solo.regret);
        for s in 0..cfg.horizon {
            assert_eq!(report.agents[0].std_regret[s], 0.0);
        }
    }

    #[test]
    fn thread_count_does_not_change_a_single_output_byte() {
        let cfg = ExperimentConfig {
            agents: vec![AgentSelector::Rbmle, AgentSelector::Ts],
            horizon: 40,
            seeds: 4,
            ..small_config()
        };
        let one = run_experiment_with_threads(&cfg, Some(1)).unwrap();
        let four = run_experiment_with_threads(&cfg, Some(4)).unwrap();
        assert_eq!(one, four);

        let dir_one = std::env::temp_dir().join("alqr_threads_one");
        let dir_four = std::env::temp_dir().join("alqr_threads_four");
        let paths_one = write_experiment_csvs(&dir_one, &one).unwrap();
        let paths_four = write_experiment_csvs(&dir_four, &four).unwrap();
        assert_eq!(paths_one.len(), paths_four.len());
        for (a, b) in paths_one.iter().zip(&paths_four) {
            assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
        }
        fs::remove_dir_all(dir_one).ok();
        fs::remove_dir_all(dir_four).ok();
    }

    #[test]
    fn csv_files_have_the_documented_structure() {
        let cfg = ExperimentConfig {
            agents: vec![AgentSelector::Rbmle, AgentSelector::Ofu],
            horizon: 25,
            seeds: 2,
            base_seed: 5,
            ..small_config()
        };
        let report = run_experiment(&cfg).unwrap();
        let dir = std::env::temp_dir().join("alqr_csv_structure");
        let paths = write_experiment_csvs(&dir, &report).unwrap();
        // Two regret files, two diagnostics files, one summary.
        assert_eq!(paths.len(), 5);

        let regret = fs::read_to_string(dir.join("regret_rbmle.csv")).unwrap();
        let mut lines = regret.lines();
        assert_eq!(lines.next().unwrap(), "t,seed_5,seed_6");
        assert_eq!(lines.count(), 25);

        let summary = fs::read_to_string(dir.join("summary.csv")).unwrap();
        let mut lines = summary.lines();
        assert_eq!(lines.next().unwrap(), "t,agent,median,mean,std");
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 2 * 25);
        assert!(rows[0].starts_with("1,rbmle,"));
        assert!(rows[25].starts_with("1,ofu,"));

        let diag = fs::read_to_string(dir.join("diagnostics_rbmle_5.csv")).unwrap();
        let mut lines = diag.lines();
        assert_eq!(lines.next().unwrap(), "t,delta,gain_err,beta,wdist,R1,R2,R3,R4");
        assert_eq!(lines.count(), 25);

        // Serialized values survive a round trip bit-exactly.
        let first_data = regret.lines().nth(1).unwrap();
        let fields: Vec<&str> = first_data.split(',').collect();
        let reparsed: f64 = fields[1].parse().unwrap();
        assert_eq!(
            reparsed.to_bits(),
            report.agents[0].regret_per_seed[0].as_ref().unwrap()[0].to_bits()
        );
        fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn config_validation_rejects_out_of_range_fields() {
        let mut cfg = small_config();
        cfg.horizon = 0;
        assert!(matches!(cfg.validate(), Err(HarnessError::InvalidConfig(_))));
        let mut cfg = small_config();
        cfg.delta = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = small_config();
        cfg.lambda = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = small_config();
        cfg.alpha0 = vec![-1.0];
        assert!(cfg.validate().is_err());
        let mut cfg = small_config();
        cfg.agents = vec![AgentSelector::Ofu, AgentSelector::Ofu];
        assert!(cfg.validate().is_err());
        let mut cfg = small_config();
        cfg.seeds = 0;
        assert!(cfg.validate().is_err());
        assert!(small_config().validate().is_ok());
    }

    #[test]
    fn expanded_agents_follow_the_sweep_naming_scheme() {
        let mut cfg = small_config();
        cfg.agents = vec![AgentSelector::Rbmle, AgentSelector::Oracle];
        cfg.alpha0 = vec![0.1, 1.0, 10.0];
        let expanded = cfg.expanded_agents();
        let names: Vec<&str> = expanded.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, vec!["rbmle_a0.1", "rbmle_a1", "rbmle_a10", "oracle"]);
        cfg.alpha0 = vec![1.0];
        let names: Vec<String> =
            cfg.expanded_agents().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, vec!["rbmle".to_owned(), "oracle".to_owned()]);
    }

    #[test]
    fn norm_bound_resolves_to_twice_the_true_parameter_norm() {
        let cfg = small_config();
        let (params, _) = cfg.resolve_system().unwrap();
        // Scalar benchmark: ||[1 1]||_F = sqrt(2).
        assert_relative_eq!(
            cfg.resolved_norm_bound(&params),
            2.0 * 2.0_f64.sqrt(),
            epsilon = 1e-15
        );
        let pinned = ExperimentConfig {
            norm_bound: Some(9.5),
            ..small_config()
        };
        assert_eq!(pinned.resolved_norm_bound(&params), 9.5);
    }
}
