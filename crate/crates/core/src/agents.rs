//! Episodic adaptive controllers behind one common interface.
//!
//! Every agent follows the same doubling-episode protocol: episode `k`
//! lasts `2^k` steps, so parameters are reselected at post-warm-up times
//! `{0, 1, 3, 7, 15, ...}` and the gain is frozen in between. The agents
//! differ only in how they pick a parameter from the current confidence
//! ellipsoid:
//!
//! * `rbmle` - minimizes the cost-biased criterion
//!   `V_t(theta) + alpha_0 sqrt(t) J*(theta)`.
//! * `ofu` - minimizes `J*(theta)` alone (optimism in the face of
//!   uncertainty).
//! * `ts` - samples a perturbed estimate (non-Bayesian Thompson sampling)
//!   inflated by the confidence radius.
//! * `ce` - certainty equivalence: the projected estimate itself.
//! * `oracle` - knows the true parameters; the regret floor.

use nalgebra::{DMatrix, DVector};
use rand::distr::StandardUniform;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::fmt;

use crate::estimation::{ConfidenceBall, EstimationError, GramState};
use crate::optimization::{
    pgd_minimize, project_feasible, project_to_norm_ball, ObjectiveSpec, OptimError, PgdConfig,
};
use crate::riccati::{
    solve_dare_with, CostParams, DareOptions, RiccatiError, RiccatiSolution, SystemParams,
};
use crate::Real;

/// Errors surfaced by agent construction and stepping.
#[derive(Debug, Clone, PartialEq)]
pub enum AgentError {
    /// No stabilizable parameter could be found, even through fallbacks.
    NoFeasiblePoint,
    /// The oracle agent needs the true parameters.
    MissingTrueParams,
    /// Underlying estimation failure (dimension or domain errors).
    Estimation(EstimationError),
    /// Underlying Riccati failure outside the normal infeasibility flow.
    Riccati(RiccatiError),
}

impl fmt::Display for AgentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentError::NoFeasiblePoint => {
                write!(f, "no stabilizable parameter available to the agent")
            }
            AgentError::MissingTrueParams => {
                write!(f, "the oracle agent requires the true system parameters")
            }
            AgentError::Estimation(e) => write!(f, "estimation error: {e}"),
            AgentError::Riccati(e) => write!(f, "riccati error: {e}"),
        }
    }
}

impl std::error::Error for AgentError {}

impl From<EstimationError> for AgentError {
    fn from(e: EstimationError) -> Self {
        AgentError::Estimation(e)
    }
}

impl From<RiccatiError> for AgentError {
    fn from(e: RiccatiError) -> Self {
        AgentError::Riccati(e)
    }
}

impl From<OptimError> for AgentError {
    fn from(e: OptimError) -> Self {
        match e {
            OptimError::NoFeasiblePoint => AgentError::NoFeasiblePoint,
            OptimError::BadConfig(msg) => {
                AgentError::Estimation(EstimationError::InvalidArg(msg))
            }
        }
    }
}

/// Which controller an [`Agent`] runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AgentKind<T: Real> {
    /// Cost-biased least squares with bias weight `alpha_0 sqrt(t)`.
    Rbmle {
        /// Multiplicative pre-factor of the bias schedule.
        alpha0: T,
    },
    /// Confidence-ball optimism: minimize `J*` over the feasible set.
    Ofu,
    /// Non-Bayesian Thompson sampling from the inflated estimate.
    Ts,
    /// Certainty equivalence: play the projected estimate.
    Ce,
    /// Plays the optimal gain for the true parameters.
    Oracle,
}

impl<T: Real> AgentKind<T> {
    /// Short lowercase label used in configs and output files.
    pub fn label(&self) -> &'static str {
        match self {
            AgentKind::Rbmle { .. } => "rbmle",
            AgentKind::Ofu => "ofu",
            AgentKind::Ts => "ts",
            AgentKind::Ce => "ce",
            AgentKind::Oracle => "oracle",
        }
    }
}

/// Shared hyperparameters of all agents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentConfig<T: Real> {
    /// Confidence level of the ellipsoid, strictly inside (0, 1).
    pub delta: T,
    /// Sub-Gaussian noise scale `L` in the confidence radius.
    pub noise_bound: T,
    /// Frobenius norm bound `c` of the parameter search set.
    pub norm_bound: T,
    /// Projected-gradient settings for the selection solvers.
    pub pgd: PgdConfig<T>,
    /// Riccati solver settings.
    pub dare: DareOptions<T>,
    /// Resampling budget of the Thompson-sampling agent.
    pub ts_max_resamples: usize,
}

impl<T: Real> AgentConfig<T> {
    /// Config with the given set geometry and default solver settings.
    pub fn new(delta: T, noise_bound: T, norm_bound: T) -> Self {
        Self {
            delta,
            noise_bound,
            norm_bound,
            pgd: PgdConfig::default(),
            dare: DareOptions::default(),
            ts_max_resamples: 50,
        }
    }
}

/// Diagnostic record of one parameter selection.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionInfo<T: Real> {
    /// Post-warm-up time of the selection.
    pub time: usize,
    /// Episode index `k` that begins with this selection.
    pub episode: usize,
    /// Confidence radius `beta` of the ellipsoid used.
    pub beta: T,
    /// Weighted distance of the selected parameter from the estimate.
    pub weighted_distance: T,
}

/// One episodic controller: selected parameters, frozen gain, and the
/// doubling-schedule bookkeeping.
#[derive(Debug, Clone)]
pub struct Agent<T: Real> {
    kind: AgentKind<T>,
    config: AgentConfig<T>,
    cost: CostParams<T>,
    true_params: Option<SystemParams<T>>,
    rng: rand_chacha::ChaCha8Rng,
    theta: DMatrix<T>,
    solution: RiccatiSolution<T>,
    episode: usize,
    steps_in_episode: usize,
    time: usize,
    last_selection: SelectionInfo<T>,
}

impl<T: Real> Agent<T>
where
    StandardNormal: Distribution<T>,
    StandardUniform: Distribution<T>,
{
    /// Builds the agent and performs its first selection (episode 0 at
    /// time 0) against the given estimator state.
    ///
    /// `true_params` is required for [`AgentKind::Oracle`] and used by no
    /// other kind. `rng` drives all agent-internal randomness; construct it
    /// on the dedicated stream (see [`crate::system::agent_rng`]) for
    /// reproducible trials.
    pub fn new(
        kind: AgentKind<T>,
        config: AgentConfig<T>,
        cost: CostParams<T>,
        gram: &GramState<T>,
        true_params: Option<SystemParams<T>>,
        rng: rand_chacha::ChaCha8Rng,
    ) -> Result<Self, AgentError> {
        if matches!(kind, AgentKind::Oracle) && true_params.is_none() {
            return Err(AgentError::MissingTrueParams);
        }
        let placeholder_theta = DMatrix::zeros(gram.state_dim(), gram.regressor_dim());
        let mut agent = Self {
            kind,
            config,
            cost,
            true_params,
            rng,
            theta: placeholder_theta.clone(),
            // Placeholder; replaced by the first selection below.
            solution: RiccatiSolution {
                p: DMatrix::zeros(gram.state_dim(), gram.state_dim()),
                k: DMatrix::zeros(
                    gram.regressor_dim() - gram.state_dim(),
                    gram.state_dim(),
                ),
                avg_cost: T::zero(),
            },
            episode: 0,
            steps_in_episode: 0,
            time: 0,
            last_selection: SelectionInfo {
                time: 0,
                episode: 0,
                beta: T::zero(),
                weighted_distance: T::zero(),
            },
        };
        agent.reselect(gram, true)?;
        Ok(agent)
    }

    /// The controller this agent runs.
    pub fn kind(&self) -> AgentKind<T> {
        self.kind
    }

    /// Currently selected parameter matrix `[A | B]`.
    pub fn theta(&self) -> &DMatrix<T> {
        &self.theta
    }

    /// Current feedback gain `K(theta)`.
    pub fn gain(&self) -> &DMatrix<T> {
        &self.solution.k
    }

    /// Full Riccati solution at the selected parameters.
    pub fn solution(&self) -> &RiccatiSolution<T> {
        &self.solution
    }

    /// Episode index `k`.
    pub fn episode(&self) -> usize {
        self.episode
    }

    /// Post-warm-up time `t` (number of advances so far).
    pub fn time(&self) -> usize {
        self.time
    }

    /// Diagnostics of the most recent selection.
    pub fn last_selection(&self) -> &SelectionInfo<T> {
        &self.last_selection
    }

    /// Control law `u = K(theta_t) x`.
    pub fn control(&self, x: &DVector<T>) -> DVector<T> {
        &self.solution.k * x
    }

    /// Advances the episode clock by one step; at an episode boundary the
    /// ball is rebuilt from `gram` and the parameters are reselected.
    ///
    /// Call once per time step, after the estimator update for that step.
    /// Returns the selection diagnostics when a reselection happened.
    pub fn advance(&mut self, gram: &GramState<T>) -> Result<Option<SelectionInfo<T>>, AgentError> {
        self.time += 1;
        self.steps_in_episode += 1;
        if self.steps_in_episode >= (1usize << self.episode.min(62)) {
            self.episode += 1;
            self.steps_in_episode = 0;
            let info = self.reselect(gram, false)?;
            return Ok(Some(info));
        }
        Ok(None)
    }

    fn reselect(&mut self, gram: &GramState<T>, first: bool) -> Result<SelectionInfo<T>, AgentError> {
        let ball = gram.confidence_ball(
            self.config.delta,
            self.config.noise_bound,
            self.config.norm_bound,
        )?;
        let previous = if first { None } else { Some(&self.theta) };
        let theta = match self.kind {
            AgentKind::Rbmle { alpha0 } => select_params_rbmle(
                gram,
                &ball,
                &self.cost,
                alpha0,
                self.time.max(1),
                &self.config,
                previous,
                &mut self.rng,
            )?,
            AgentKind::Ofu => select_params_ofu(
                gram,
                &ball,
                &self.cost,
                &self.config,
                previous,
                &mut self.rng,
            )?,
            AgentKind::Ts => {
                select_params_ts(gram, &ball, &self.cost, &mut self.rng, &self.config)?
            }
            AgentKind::Ce => {
                select_params_ce(gram, &ball, &self.cost, &self.config, &mut self.rng)?
            }
            AgentKind::Oracle => self
                .true_params
                .as_ref()
                .expect("checked at construction")
                .to_theta(),
        };
        let params = SystemParams::from_theta(&theta, gram.state_dim())?;
        // Cold solve so the stored gain is bit-identical to an independent
        // recomputation at the same parameters.
        let solution = solve_dare_with(&params, &self.cost, &self.config.dare, None)?;
        let info = SelectionInfo {
            time: self.time,
            episode: self.episode,
            beta: ball.beta(),
            weighted_distance: ball.weighted_distance(&theta)?,
        };
        self.theta = theta;
        self.solution = solution;
        self.last_selection = info.clone();
        Ok(info)
    }
}

/// Cost-biased selection: minimizes `V_t(theta) + alpha_0 sqrt(t_k) J*(theta)`
/// over the feasible set.
///
/// `t_k` is the post-warm-up time of the selection, clamped at 1 so the
/// bias never vanishes. Falls back to the caller's previous parameters when
/// the solver finds no feasible point.
#[allow(clippy::too_many_arguments)]
pub fn select_params_rbmle<T: Real, R: Rng>(
    gram: &GramState<T>,
    ball: &ConfidenceBall<T>,
    cost: &CostParams<T>,
    alpha0: T,
    t_k: usize,
    config: &AgentConfig<T>,
    previous: Option<&DMatrix<T>>,
    rng: &mut R,
) -> Result<DMatrix<T>, AgentError>
where
    StandardNormal: Distribution<T>,
    StandardUniform: Distribution<T>,
{
    let alpha = alpha0 * T::from_usize(t_k.max(1)).expect("t fits the scalar type").sqrt();
    let objective = ObjectiveSpec::cost_biased(gram, cost, alpha)?.with_dare_options(config.dare);
    minimize_or_fall_back(&objective, ball, cost, config, previous, rng)
}

/// Optimistic selection: minimizes `J*(theta)` over the feasible set.
pub fn select_params_ofu<T: Real, R: Rng>(
    gram: &GramState<T>,
    ball: &ConfidenceBall<T>,
    cost: &CostParams<T>,
    config: &AgentConfig<T>,
    previous: Option<&DMatrix<T>>,
    rng: &mut R,
) -> Result<DMatrix<T>, AgentError>
where
    StandardNormal: Distribution<T>,
    StandardUniform: Distribution<T>,
{
    let objective = ObjectiveSpec::optimistic(gram, cost).with_dare_options(config.dare);
    minimize_or_fall_back(&objective, ball, cost, config, previous, rng)
}

fn minimize_or_fall_back<T: Real, R: Rng>(
    objective: &ObjectiveSpec<'_, T>,
    ball: &ConfidenceBall<T>,
    cost: &CostParams<T>,
    config: &AgentConfig<T>,
    previous: Option<&DMatrix<T>>,
    rng: &mut R,
) -> Result<DMatrix<T>, AgentError>
where
    StandardNormal: Distribution<T>,
    StandardUniform: Distribution<T>,
{
    let init = previous.unwrap_or_else(|| ball.center());
    match pgd_minimize(objective, ball, config.norm_bound, init, &config.pgd, rng) {
        Ok((theta, _)) => Ok(theta),
        Err(OptimError::NoFeasiblePoint) => {
            // Keep the previous (stabilizable) parameters even if the new
            // ball excludes them: a stale controller beats a dead trial.
            let fallback = previous.ok_or(AgentError::NoFeasiblePoint)?;
            let n = ball.center().nrows();
            let params = SystemParams::from_theta(fallback, n)?;
            solve_dare_with(&params, cost, &config.dare, None)
                .map_err(|_| AgentError::NoFeasiblePoint)?;
            Ok(fallback.clone())
        }
        Err(e) => Err(e.into()),
    }
}

/// Raw Thompson-sampling draw `theta_hat + sqrt(beta) H Z^{-1/2}` with `H`
/// an iid standard-normal matrix — no stabilizability filter, no norm-ball
/// projection.
///
/// Exposed so the sampling distribution itself can be verified; selections
/// go through [`select_params_ts`], which filters.
pub fn ts_draw<T: Real, R: Rng>(ball: &ConfidenceBall<T>, rng: &mut R) -> DMatrix<T>
where
    StandardNormal: Distribution<T>,
{
    let (n, d) = ball.center().shape();
    let h = DMatrix::<T>::from_fn(n, d, |_, _| StandardNormal.sample(rng));
    // Right-whitening: solve delta L' = H so each row of delta has
    // covariance Z^{-1}; the sqrt(beta) inflation then matches the
    // confidence radius.
    let upper = ball.weight_factor().transpose();
    let delta_t = upper
        .solve_upper_triangular(&h.transpose())
        .expect("ball weight factor has positive diagonal");
    ball.center() + delta_t.transpose() * ball.beta().sqrt()
}

/// Thompson-sampling selection: repeated raw draws, each projected to the
/// norm ball, until one admits a stabilizing Riccati solution.
///
/// After `config.ts_max_resamples` failures the projected estimate is
/// tried; if that also fails the selection reports
/// [`AgentError::NoFeasiblePoint`].
pub fn select_params_ts<T: Real, R: Rng>(
    gram: &GramState<T>,
    ball: &ConfidenceBall<T>,
    cost: &CostParams<T>,
    rng: &mut R,
    config: &AgentConfig<T>,
) -> Result<DMatrix<T>, AgentError>
where
    StandardNormal: Distribution<T>,
{
    let n = gram.state_dim();
    for _ in 0..config.ts_max_resamples {
        let candidate = project_to_norm_ball(&ts_draw(ball, rng), config.norm_bound);
        let params = SystemParams::from_theta(&candidate, n)?;
        if solve_dare_with(&params, cost, &config.dare, None).is_ok() {
            return Ok(candidate);
        }
    }
    let fallback = project_to_norm_ball(ball.center(), config.norm_bound);
    let params = SystemParams::from_theta(&fallback, n)?;
    solve_dare_with(&params, cost, &config.dare, None)
        .map_err(|_| AgentError::NoFeasiblePoint)?;
    Ok(fallback)
}

/// Certainty-equivalent selection: the estimate projected to the ellipsoid,
/// the norm ball, and stabilizability.
///
/// When the projected estimate has no stabilizing solution, nearby feasible
/// points are tried with geometrically shrinking whitened perturbations
/// (the same fallback chain the gradient solver uses for its restarts).
pub fn select_params_ce<T: Real, R: Rng>(
    gram: &GramState<T>,
    ball: &ConfidenceBall<T>,
    cost: &CostParams<T>,
    config: &AgentConfig<T>,
    rng: &mut R,
) -> Result<DMatrix<T>, AgentError>
where
    StandardNormal: Distribution<T>,
    StandardUniform: Distribution<T>,
{
    let n = gram.state_dim();
    let candidate = project_feasible(ball.center(), ball, config.norm_bound);
    let params = SystemParams::from_theta(&candidate, n)?;
    if solve_dare_with(&params, cost, &config.dare, None).is_ok() {
        return Ok(candidate);
    }
    let mut shrink = T::one();
    let half = crate::from_f64::<T>(0.5);
    for _ in 0..config.pgd.restarts.max(1) * 10 {
        shrink *= half;
        let draw = crate::optimization::perturb_in_ball(ball, rng);
        let moved = ball.center() + (draw - ball.center()) * shrink;
        let projected = project_feasible(&moved, ball, config.norm_bound);
        let params = SystemParams::from_theta(&projected, n)?;
        if solve_dare_with(&params, cost, &config.dare, None).is_ok() {
            return Ok(projected);
        }
    }
    Err(AgentError::NoFeasiblePoint)
}
