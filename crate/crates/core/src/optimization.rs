//! Projected gradient descent for the controller selection objectives over
//! the intersection of the confidence ellipsoid and the parameter norm ball.
//!
//! Two objectives share the machinery: the cost-biased criterion
//! `V_t(theta) + alpha * J*(theta)` and the optimistic criterion
//! `J*(theta)` alone, where `J*` is the optimal average cost from the
//! Riccati solver and `V_t` the squared prediction error from the
//! estimation module. Parameters without a stabilizing solution evaluate to
//! `+inf`, which keeps the line search inside the admissible set.

use nalgebra::DMatrix;
use rand::distr::StandardUniform;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::fmt;

use crate::estimation::{ConfidenceBall, GramState};
use crate::riccati::{
    solve_dare_with, CostParams, DareOptions, RiccatiSolution, SystemParams,
};
use crate::{from_f64, Real};

/// Relative slack used when re-checking set membership after a projection;
/// roundoff at the boundary stays below this comfortably.
pub const FEASIBILITY_SLACK: f64 = 1e-12;

const MAX_BACKTRACKS: usize = 60;

/// Errors from the constrained minimization layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OptimError {
    /// No stabilizable point was found in the feasible set: the start, the
    /// ellipsoid center, and the configured number of random perturbations
    /// all failed the Riccati solve after projection.
    NoFeasiblePoint,
    /// A configuration field violated its documented range.
    BadConfig(&'static str),
}

impl fmt::Display for OptimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OptimError::NoFeasiblePoint => {
                write!(f, "no stabilizable point found in the feasible set")
            }
            OptimError::BadConfig(msg) => write!(f, "bad optimizer configuration: {msg}"),
        }
    }
}

impl std::error::Error for OptimError {}

/// Which selection criterion is being minimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    /// Squared prediction error plus `alpha` times the optimal average cost.
    CostBiased,
    /// Optimal average cost alone (confidence-ball optimism).
    Optimistic,
}

/// A selection objective bound to the data and cost weights it evaluates
/// against.
#[derive(Clone)]
pub struct ObjectiveSpec<'a, T: Real> {
    kind: ObjectiveKind,
    alpha: T,
    gram: &'a GramState<T>,
    cost: &'a CostParams<T>,
    dare: DareOptions<T>,
}

impl<'a, T: Real> ObjectiveSpec<'a, T> {
    /// Cost-biased objective `V_t(theta) + alpha * J*(theta)` with
    /// `alpha >= 0`.
    pub fn cost_biased(
        gram: &'a GramState<T>,
        cost: &'a CostParams<T>,
        alpha: T,
    ) -> Result<Self, OptimError> {
        if !(alpha >= T::zero()) || !alpha.is_finite() {
            return Err(OptimError::BadConfig("alpha must be nonnegative and finite"));
        }
        Ok(Self {
            kind: ObjectiveKind::CostBiased,
            alpha,
            gram,
            cost,
            dare: DareOptions::default(),
        })
    }

    /// Optimistic objective `J*(theta)`.
    pub fn optimistic(gram: &'a GramState<T>, cost: &'a CostParams<T>) -> Self {
        Self {
            kind: ObjectiveKind::Optimistic,
            alpha: T::zero(),
            gram,
            cost,
            dare: DareOptions::default(),
        }
    }

    /// Overrides the Riccati solver options used during evaluation.
    pub fn with_dare_options(mut self, dare: DareOptions<T>) -> Self {
        self.dare = dare;
        self
    }

    /// Which criterion this objective evaluates.
    pub fn kind(&self) -> ObjectiveKind {
        self.kind
    }

    /// Bias weight `alpha` (zero for the optimistic objective).
    pub fn alpha(&self) -> T {
        self.alpha
    }

    /// Objective value at `theta`; `+inf` when `theta` admits no stabilizing
    /// Riccati solution.
    pub fn value(&self, theta: &DMatrix<T>) -> T {
        self.evaluate(theta, None).0
    }

    /// Value plus the Riccati solution when one exists; the warm start only
    /// accelerates the inner solve.
    pub(crate) fn evaluate(
        &self,
        theta: &DMatrix<T>,
        warm_start: Option<&DMatrix<T>>,
    ) -> (T, Option<RiccatiSolution<T>>) {
        let params = self.split(theta);
        let inf = from_f64::<T>(f64::INFINITY);
        let data_term = match self.kind {
            ObjectiveKind::CostBiased => self
                .gram
                .squared_error(theta)
                .expect("theta shape checked by split"),
            ObjectiveKind::Optimistic => T::zero(),
        };
        match solve_dare_with(&params, self.cost, &self.dare, warm_start) {
            Ok(sol) => {
                let cost_weight = match self.kind {
                    ObjectiveKind::CostBiased => self.alpha,
                    ObjectiveKind::Optimistic => T::one(),
                };
                (data_term + cost_weight * sol.avg_cost, Some(sol))
            }
            Err(_) => (inf, None),
        }
    }

    /// Gradient of the objective at `theta`, or `None` when the Riccati or
    /// Lyapunov solve fails there.
    pub fn gradient(&self, theta: &DMatrix<T>) -> Option<DMatrix<T>> {
        let (_, sol) = self.evaluate(theta, None);
        self.gradient_from(theta, &sol?)
    }

    fn gradient_from(&self, theta: &DMatrix<T>, sol: &RiccatiSolution<T>) -> Option<DMatrix<T>> {
        let params = self.split(theta);
        let (ga, gb) = crate::riccati::grad_avg_cost_from(&params, sol).ok()?;
        let n = params.state_dim();
        let m = params.input_dim();
        let mut cost_grad = DMatrix::zeros(n, n + m);
        cost_grad.view_mut((0, 0), (n, n)).copy_from(&ga);
        cost_grad.view_mut((0, n), (n, m)).copy_from(&gb);
        Some(match self.kind {
            ObjectiveKind::CostBiased => {
                let data_grad = self
                    .gram
                    .squared_error_gradient(theta)
                    .expect("theta shape checked by split");
                data_grad + cost_grad * self.alpha
            }
            ObjectiveKind::Optimistic => cost_grad,
        })
    }

    fn split(&self, theta: &DMatrix<T>) -> SystemParams<T> {
        SystemParams::from_theta(theta, self.gram.state_dim())
            .expect("objective evaluated on a theta of shape n x (n + m)")
    }
}

/// Tuning knobs for [`pgd_minimize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgdConfig<T: Real> {
    /// Maximum accepted descent steps per start.
    pub max_iters: usize,
    /// Initial line-search step.
    pub init_step: T,
    /// Multiplicative step reduction on rejection, strictly inside (0, 1).
    pub backtrack_factor: T,
    /// Armijo sufficient-decrease constant, strictly inside (0, 1).
    pub armijo_const: T,
    /// Terminate once an accepted step moves less than this.
    pub stop_tol: T,
    /// Total number of descent starts (warm start, projected center, then
    /// random feasible perturbations).
    pub restarts: usize,
}

impl<T: Real> Default for PgdConfig<T> {
    fn default() -> Self {
        Self {
            max_iters: 200,
            init_step: from_f64(0.1),
            backtrack_factor: from_f64(0.5),
            armijo_const: from_f64(1e-4),
            stop_tol: from_f64(1e-8),
            restarts: 3,
        }
    }
}

impl<T: Real> PgdConfig<T> {
    fn validate(&self) -> Result<(), OptimError> {
        if self.max_iters == 0 || self.restarts == 0 {
            return Err(OptimError::BadConfig("max_iters and restarts must be positive"));
        }
        if !(self.init_step > T::zero()) || !(self.stop_tol > T::zero()) {
            return Err(OptimError::BadConfig("init_step and stop_tol must be positive"));
        }
        let inside = |v: T| v > T::zero() && v < T::one();
        if !inside(self.backtrack_factor) || !inside(self.armijo_const) {
            return Err(OptimError::BadConfig(
                "backtrack_factor and armijo_const must lie in (0, 1)",
            ));
        }
        Ok(())
    }
}

/// Whitened radial projection onto the confidence ellipsoid.
///
/// Interior points are returned unchanged; outside points are pulled along
/// the ray toward the center into the boundary, nudged inward by a relative
/// `1e-12` so recomputed membership never flips on roundoff.
pub fn project_to_ellipsoid<T: Real>(theta: &DMatrix<T>, ball: &ConfidenceBall<T>) -> DMatrix<T> {
    let dist = ball
        .weighted_distance(theta)
        .expect("theta must match the ball center shape");
    if dist <= ball.beta() {
        return theta.clone();
    }
    let margin = T::one() - from_f64::<T>(FEASIBILITY_SLACK);
    let scale = (ball.beta() / dist).sqrt() * margin;
    ball.center() + (theta - ball.center()) * scale
}

/// Radial projection onto the Frobenius norm ball `trace(theta' theta) <= c^2`.
pub fn project_to_norm_ball<T: Real>(theta: &DMatrix<T>, c: T) -> DMatrix<T> {
    assert!(c > T::zero(), "norm bound must be positive");
    let norm = theta.norm();
    if norm <= c {
        theta.clone()
    } else {
        theta * (c / norm)
    }
}

/// Composition of the two projections with a bounded re-projection cycle:
/// ellipsoid, then norm ball, repeated up to three times if the norm-ball
/// scaling broke ellipsoid membership.
pub fn project_feasible<T: Real>(
    theta: &DMatrix<T>,
    ball: &ConfidenceBall<T>,
    c: T,
) -> DMatrix<T> {
    let slack = T::one() + from_f64::<T>(FEASIBILITY_SLACK);
    let mut current = project_to_norm_ball(&project_to_ellipsoid(theta, ball), c);
    for _ in 0..2 {
        let dist = ball
            .weighted_distance(&current)
            .expect("projection preserves shape");
        if dist <= ball.beta() * slack {
            break;
        }
        current = project_to_norm_ball(&project_to_ellipsoid(&current, ball), c);
    }
    current
}

/// Minimizes the objective over the intersection of the ellipsoid and the
/// norm ball by projected gradient descent with Armijo backtracking.
///
/// Starts are tried in order: `init` (the caller's warm start), the
/// ellipsoid center, then random feasible perturbations of the center,
/// until `cfg.restarts` descents have run; the best final value wins.
/// Steps that land on parameters without a stabilizing solution are
/// rejected by the same backtracking that handles insufficient decrease.
///
/// # Errors
///
/// [`OptimError::NoFeasiblePoint`] when no start survives projection plus
/// the Riccati solve, and [`OptimError::BadConfig`] for out-of-range
/// settings.
pub fn pgd_minimize<T: Real, R: Rng>(
    obj: &ObjectiveSpec<'_, T>,
    ball: &ConfidenceBall<T>,
    norm_bound: T,
    init: &DMatrix<T>,
    cfg: &PgdConfig<T>,
    rng: &mut R,
) -> Result<(DMatrix<T>, T), OptimError>
where
    StandardNormal: Distribution<T>,
    StandardUniform: Distribution<T>,
{
    pgd_minimize_traced(obj, ball, norm_bound, init, cfg, rng, None)
}

/// [`pgd_minimize`] that additionally appends every accepted objective
/// value (including each start's initial value) to `trace`, in order.
pub fn pgd_minimize_traced<T: Real, R: Rng>(
    obj: &ObjectiveSpec<'_, T>,
    ball: &ConfidenceBall<T>,
    norm_bound: T,
    init: &DMatrix<T>,
    cfg: &PgdConfig<T>,
    rng: &mut R,
    mut trace: Option<&mut Vec<T>>,
) -> Result<(DMatrix<T>, T), OptimError>
where
    StandardNormal: Distribution<T>,
    StandardUniform: Distribution<T>,
{
    cfg.validate()?;
    assert!(norm_bound > T::zero(), "norm bound must be positive");
    let mut best: Option<(DMatrix<T>, T)> = None;
    let mut runs = 0;
    let consider = |start: &DMatrix<T>,
                        runs: &mut usize,
                        trace: &mut Option<&mut Vec<T>>,
                        best: &mut Option<(DMatrix<T>, T)>| {
        if let Some(feasible) = feasible_start(obj, ball, norm_bound, start) {
            let (theta, value) = descend(obj, ball, norm_bound, feasible, cfg, trace.as_deref_mut());
            *runs += 1;
            if best.as_ref().is_none_or(|(_, v)| value < *v) {
                *best = Some((theta, value));
            }
        }
    };
    consider(init, &mut runs, &mut trace, &mut best);
    if runs < cfg.restarts {
        consider(ball.center(), &mut runs, &mut trace, &mut best);
    }
    let mut attempts = 0;
    while runs < cfg.restarts && attempts < cfg.restarts {
        attempts += 1;
        let perturbed = perturb_in_ball(ball, rng);
        consider(&perturbed, &mut runs, &mut trace, &mut best);
    }
    best.ok_or(OptimError::NoFeasiblePoint)
}

/// Projects a start into the feasible set and keeps it only if it is
/// stabilizable there.
fn feasible_start<T: Real>(
    obj: &ObjectiveSpec<'_, T>,
    ball: &ConfidenceBall<T>,
    norm_bound: T,
    start: &DMatrix<T>,
) -> Option<(DMatrix<T>, T, RiccatiSolution<T>)> {
    let projected = project_feasible(start, ball, norm_bound);
    let (value, sol) = obj.evaluate(&projected, None);
    sol.map(|s| (projected, value, s))
}

/// Core descent loop from one feasible start.
fn descend<T: Real>(
    obj: &ObjectiveSpec<'_, T>,
    ball: &ConfidenceBall<T>,
    norm_bound: T,
    start: (DMatrix<T>, T, RiccatiSolution<T>),
    cfg: &PgdConfig<T>,
    mut trace: Option<&mut Vec<T>>,
) -> (DMatrix<T>, T) {
    let (mut theta, mut value, mut sol) = start;
    if let Some(t) = trace.as_deref_mut() {
        t.push(value);
    }
    for _ in 0..cfg.max_iters {
        let Some(grad) = obj.gradient_from(&theta, &sol) else {
            break;
        };
        if grad.norm() == T::zero() {
            break;
        }
        let mut step = cfg.init_step;
        let mut accepted: Option<(DMatrix<T>, T, RiccatiSolution<T>)> = None;
        for _ in 0..MAX_BACKTRACKS {
            let raw = &theta - &grad * step;
            let candidate = project_feasible(&raw, ball, norm_bound);
            let (cand_value, cand_sol) = obj.evaluate(&candidate, Some(&sol.p));
            if let Some(cand_sol) = cand_sol {
                // Sufficient decrease along the projected direction; the
                // min(.., 0) keeps the accepted trace monotone even when
                // projection bends the step uphill.
                let directional = grad.dot(&(&candidate - &theta));
                let required = value + cfg.armijo_const * directional.min(T::zero());
                if cand_value <= required {
                    accepted = Some((candidate, cand_value, cand_sol));
                    break;
                }
            }
            step *= cfg.backtrack_factor;
        }
        let Some((next_theta, next_value, next_sol)) = accepted else {
            break;
        };
        let moved = (&next_theta - &theta).norm();
        theta = next_theta;
        value = next_value;
        sol = next_sol;
        if let Some(t) = trace.as_deref_mut() {
            t.push(value);
        }
        if moved <= cfg.stop_tol {
            break;
        }
    }
    (theta, value)
}

/// Draws a uniform-radius whitened perturbation of the ellipsoid center:
/// a point with weighted distance `u^2 * beta` for `u` uniform in (0, 1).
pub(crate) fn perturb_in_ball<T: Real, R: Rng>(ball: &ConfidenceBall<T>, rng: &mut R) -> DMatrix<T>
where
    StandardNormal: Distribution<T>,
    StandardUniform: Distribution<T>,
{
    let (n, d) = ball.center().shape();
    let h = DMatrix::<T>::from_fn(n, d, |_, _| StandardNormal.sample(rng));
    let u: T = rng.random();
    let h_norm = h.norm();
    if h_norm == T::zero() {
        return ball.center().clone();
    }
    // Solve delta L' = h, i.e. whiten h by the Cholesky factor of Z, so
    // that weighted_distance(center + s * delta) = s^2 ||h||^2.
    let upper = ball.weight_factor().transpose();
    let delta_t = upper
        .solve_upper_triangular(&h.transpose())
        .expect("ball weight factor has positive diagonal");
    let scale = u * ball.beta().sqrt() / h_norm;
    ball.center() + delta_t.transpose() * scale
}
