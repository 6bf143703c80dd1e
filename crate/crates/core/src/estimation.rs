//! Online regularized least squares for the dynamics plus the
//! self-normalized confidence ellipsoid built around the estimate.
//!
//! The regressor at step `s` is `z_s = (x_s', u_s')'` of dimension
//! `d = n + m`; the parameter matrix acts as `x_{s+1} ~ theta z_s`. The
//! sufficient statistics are the regularized Gram matrix
//! `Z = lambda I + sum z z'`, the cross moment `M = sum x_{s+1} z'`, and the
//! scalar `sum ||x_{s+1}||^2`, which together reconstruct the exact squared
//! prediction error of any candidate without revisiting the data.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use std::fmt;

use crate::{from_f64, Real};

/// Incremental Cholesky factors are rebuilt from scratch this often to keep
/// rank-one-update roundoff from accumulating.
const REFRESH_INTERVAL: usize = 512;

/// Errors from the estimation layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EstimationError {
    /// Vectors or matrices had inconsistent dimensions.
    DimensionMismatch(&'static str),
    /// The confidence level must satisfy `0 < delta < 1`.
    InvalidDelta,
    /// A scalar argument violated a documented precondition.
    InvalidArg(&'static str),
    /// An input contained NaN or infinite entries, which would silently
    /// poison every later statistic.
    NonFinite,
    /// The Gram matrix lost positive definiteness at working precision,
    /// which happens when the trajectory scale outgrows what f64 can
    /// factor (e.g. an exploding closed loop).
    IllConditioned,
}

impl fmt::Display for EstimationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimationError::DimensionMismatch(msg) => write!(f, "dimension mismatch: {msg}"),
            EstimationError::InvalidDelta => write!(f, "delta must lie strictly between 0 and 1"),
            EstimationError::InvalidArg(msg) => write!(f, "invalid argument: {msg}"),
            EstimationError::NonFinite => write!(f, "input contains non-finite entries"),
            EstimationError::IllConditioned => {
                write!(f, "Gram matrix is no longer positive definite at working precision")
            }
        }
    }
}

impl std::error::Error for EstimationError {}

/// Stacks a state and input into the regressor `z = (x', u')'`.
pub fn regressor<T: Real>(x: &DVector<T>, u: &DVector<T>) -> DVector<T> {
    let mut z = DVector::zeros(x.len() + u.len());
    z.rows_mut(0, x.len()).copy_from(x);
    z.rows_mut(x.len(), u.len()).copy_from(u);
    z
}

/// Sufficient statistics of the regularized least-squares problem.
#[derive(Debug, Clone)]
pub struct GramState<T: Real> {
    lambda: T,
    state_dim: usize,
    /// Regularized Gram matrix `Z = lambda I + sum z z'`, `d x d`.
    z: DMatrix<T>,
    /// Cross moment `M = sum x_{s+1} z'`, `n x d`.
    cross: DMatrix<T>,
    /// Running `sum ||x_{s+1}||^2`.
    sq_next: T,
    samples: usize,
    chol: Cholesky<T, Dyn>,
    updates_since_refresh: usize,
}

impl<T: Real> GramState<T> {
    /// Fresh state for an `n`-state, `m`-input system with regularizer
    /// `lambda > 0`.
    pub fn new(n: usize, m: usize, lambda: T) -> Result<Self, EstimationError> {
        if n == 0 || m == 0 {
            return Err(EstimationError::InvalidArg("dimensions must be positive"));
        }
        if !(lambda > T::zero()) || !lambda.is_finite() {
            return Err(EstimationError::InvalidArg("lambda must be positive and finite"));
        }
        let d = n + m;
        let z = DMatrix::identity(d, d) * lambda;
        let chol = Cholesky::new(z.clone())
            .expect("lambda I is positive definite for lambda > 0");
        Ok(Self {
            lambda,
            state_dim: n,
            z,
            cross: DMatrix::zeros(n, d),
            sq_next: T::zero(),
            samples: 0,
            chol,
            updates_since_refresh: 0,
        })
    }

    /// Regularizer `lambda`.
    pub fn lambda(&self) -> T {
        self.lambda
    }

    /// State dimension `n`.
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Regressor dimension `d = n + m`.
    pub fn regressor_dim(&self) -> usize {
        self.z.nrows()
    }

    /// Number of absorbed observations.
    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Regularized Gram matrix `Z`.
    pub fn gram(&self) -> &DMatrix<T> {
        &self.z
    }

    /// Cross moment `M`.
    pub fn cross(&self) -> &DMatrix<T> {
        &self.cross
    }

    /// Absorbs one observation `(z, x_next)`.
    ///
    /// Rejects non-finite inputs (and inputs whose squared moments overflow)
    /// with [`EstimationError::NonFinite`] before touching any statistic.
    /// Returns [`EstimationError::IllConditioned`] when the accumulated
    /// moments outgrow f64 — an exploding trajectory eventually defeats the
    /// factorization — and the accumulator must be discarded after that.
    pub fn update(&mut self, z: &DVector<T>, x_next: &DVector<T>) -> Result<(), EstimationError> {
        if z.len() != self.regressor_dim() {
            return Err(EstimationError::DimensionMismatch("regressor length must be n + m"));
        }
        if x_next.len() != self.state_dim {
            return Err(EstimationError::DimensionMismatch("successor length must be n"));
        }
        if z.iter().chain(x_next.iter()).any(|v| !v.is_finite())
            || !z.norm_squared().is_finite()
            || !x_next.norm_squared().is_finite()
        {
            return Err(EstimationError::NonFinite);
        }
        self.z.ger(T::one(), z, z, T::one());
        self.cross.ger(T::one(), x_next, z, T::one());
        self.sq_next += x_next.dot(x_next);
        self.samples += 1;
        self.updates_since_refresh += 1;
        if !self.sq_next.is_finite()
            || self.z.iter().any(|v| !v.is_finite())
            || self.cross.iter().any(|v| !v.is_finite())
        {
            return Err(EstimationError::IllConditioned);
        }
        if self.updates_since_refresh >= REFRESH_INTERVAL {
            self.refresh_factor()?;
        } else {
            self.chol.rank_one_update(z, T::one());
            if self.chol.l_dirty().iter().any(|v| !v.is_finite()) {
                // The incremental factor can degrade before the full matrix
                // does; a clean refactorization is the last resort.
                self.refresh_factor()?;
            }
        }
        Ok(())
    }

    fn refresh_factor(&mut self) -> Result<(), EstimationError> {
        match Cholesky::new(self.z.clone()) {
            Some(chol) => {
                self.chol = chol;
                self.updates_since_refresh = 0;
                Ok(())
            }
            None => Err(EstimationError::IllConditioned),
        }
    }

    /// Regularized least-squares estimate `theta_hat = M Z^{-1}`, the unique
    /// unconstrained minimizer of `lambda ||theta||_F^2 + V_t(theta)`.
    pub fn estimate(&self) -> DMatrix<T> {
        self.chol.solve(&self.cross.transpose()).transpose()
    }

    /// Exact squared prediction error
    /// `V_t(theta) = sum ||x_{s+1} - theta z_s||^2`, reconstructed from the
    /// sufficient statistics and clamped at zero against roundoff.
    pub fn squared_error(&self, theta: &DMatrix<T>) -> Result<T, EstimationError> {
        self.check_theta_shape(theta)?;
        let data_gram = &self.z - DMatrix::identity(self.z.nrows(), self.z.ncols()) * self.lambda;
        let quad = (theta * data_gram).dot(theta);
        let cross_term = theta.dot(&self.cross);
        let two = from_f64::<T>(2.0);
        Ok((quad - two * cross_term + self.sq_next).max(T::zero()))
    }

    /// Regularized squared error `lambda ||theta||_F^2 + V_t(theta)`, the
    /// criterion the estimate minimizes.
    pub fn regularized_error(&self, theta: &DMatrix<T>) -> Result<T, EstimationError> {
        Ok(self.lambda * theta.dot(theta) + self.squared_error(theta)?)
    }

    /// Gradient of [`GramState::squared_error`] in `theta`:
    /// `2 (theta (Z - lambda I) - M)`.
    pub fn squared_error_gradient(&self, theta: &DMatrix<T>) -> Result<DMatrix<T>, EstimationError> {
        self.check_theta_shape(theta)?;
        let data_gram = &self.z - DMatrix::identity(self.z.nrows(), self.z.ncols()) * self.lambda;
        Ok((theta * data_gram - &self.cross) * from_f64::<T>(2.0))
    }

    /// `log det Z`, computed from the Cholesky factor.
    pub fn log_det_gram(&self) -> T {
        let two = from_f64::<T>(2.0);
        self.chol
            .l_dirty()
            .diagonal()
            .iter()
            .fold(T::zero(), |acc, v| acc + v.ln())
            * two
    }

    /// Confidence radius
    /// `beta_t(delta) = (n L sqrt(2 log(sqrt(det Z / det(lambda I)) / delta)) + sqrt(lambda) c)^2`
    /// with the determinant ratio clamped at 1 from below.
    ///
    /// # Arguments
    ///
    /// * `delta` - confidence level, strictly inside (0, 1).
    /// * `noise_bound` - sub-Gaussian scale `L` of the process noise.
    /// * `norm_bound` - known bound `c` on the Frobenius norm of the true
    ///   parameter.
    pub fn beta_radius(
        &self,
        delta: T,
        noise_bound: T,
        norm_bound: T,
    ) -> Result<T, EstimationError> {
        if !(delta > T::zero() && delta < T::one()) {
            return Err(EstimationError::InvalidDelta);
        }
        if !(noise_bound > T::zero()) || !(norm_bound > T::zero()) {
            return Err(EstimationError::InvalidArg("L and c must be positive"));
        }
        let d = from_f64::<T>(self.regressor_dim() as f64);
        let log_ratio = (self.log_det_gram() - d * self.lambda.ln()).max(T::zero());
        let half = from_f64::<T>(0.5);
        let inner = half * log_ratio - delta.ln();
        let n = from_f64::<T>(self.state_dim as f64);
        let two = from_f64::<T>(2.0);
        let root = n * noise_bound * (two * inner).sqrt() + self.lambda.sqrt() * norm_bound;
        Ok(root * root)
    }

    /// Builds the confidence ellipsoid at level `delta` around the current
    /// estimate.
    pub fn confidence_ball(
        &self,
        delta: T,
        noise_bound: T,
        norm_bound: T,
    ) -> Result<ConfidenceBall<T>, EstimationError> {
        let beta = self.beta_radius(delta, noise_bound, norm_bound)?;
        Ok(ConfidenceBall {
            center: self.estimate(),
            weight: self.z.clone(),
            chol_l: self.chol.l(),
            beta,
        })
    }

    fn check_theta_shape(&self, theta: &DMatrix<T>) -> Result<(), EstimationError> {
        if theta.nrows() != self.state_dim || theta.ncols() != self.regressor_dim() {
            return Err(EstimationError::DimensionMismatch("theta must be n x (n + m)"));
        }
        Ok(())
    }
}

/// High-probability ellipsoid `{theta : trace((theta - center) Z (theta - center)') <= beta}`.
#[derive(Debug, Clone)]
pub struct ConfidenceBall<T: Real> {
    center: DMatrix<T>,
    weight: DMatrix<T>,
    chol_l: DMatrix<T>,
    beta: T,
}

impl<T: Real> ConfidenceBall<T> {
    /// Builds a ball from an explicit center, weight matrix, and radius.
    ///
    /// The weight must be symmetric positive definite and `beta`
    /// nonnegative.
    pub fn new(center: DMatrix<T>, weight: DMatrix<T>, beta: T) -> Result<Self, EstimationError> {
        if !weight.is_square() || center.ncols() != weight.nrows() {
            return Err(EstimationError::DimensionMismatch(
                "weight must be d x d for a n x d center",
            ));
        }
        if !(beta >= T::zero()) {
            return Err(EstimationError::InvalidArg("beta must be nonnegative"));
        }
        let chol = Cholesky::new(weight.clone())
            .ok_or(EstimationError::InvalidArg("weight must be positive definite"))?;
        Ok(Self {
            center,
            weight,
            chol_l: chol.l(),
            beta,
        })
    }

    /// Ellipsoid center (the least-squares estimate when built from data).
    pub fn center(&self) -> &DMatrix<T> {
        &self.center
    }

    /// Weight matrix `Z`.
    pub fn weight(&self) -> &DMatrix<T> {
        &self.weight
    }

    /// Lower Cholesky factor `L` with `L L' = Z`.
    pub fn weight_factor(&self) -> &DMatrix<T> {
        &self.chol_l
    }

    /// Squared radius `beta`.
    pub fn beta(&self) -> T {
        self.beta
    }

    /// Weighted squared distance `trace((theta - center) Z (theta - center)')`.
    pub fn weighted_distance(&self, theta: &DMatrix<T>) -> Result<T, EstimationError> {
        if theta.shape() != self.center.shape() {
            return Err(EstimationError::DimensionMismatch("theta must match the center shape"));
        }
        let diff = theta - &self.center;
        Ok((&diff * &self.weight).dot(&diff).max(T::zero()))
    }

    /// Membership test `weighted_distance(theta) <= beta`.
    pub fn contains(&self, theta: &DMatrix<T>) -> Result<bool, EstimationError> {
        Ok(self.weighted_distance(theta)? <= self.beta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    type M = DMatrix<f64>;
    type V = DVector<f64>;

    fn single_update_state() -> GramState<f64> {
        let mut state = GramState::new(1, 1, 1.0).unwrap();
        state
            .update(&V::from_column_slice(&[1.0, 0.0]), &V::from_element(1, 0.5))
            .unwrap();
        state
    }

    #[test]
    fn update_accumulates_the_documented_statistics() {
        let state = single_update_state();
        assert_eq!(state.samples(), 1);
        assert_eq!(state.gram(), &M::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]));
        assert_eq!(state.cross(), &M::from_row_slice(1, 2, &[0.5, 0.0]));
    }

    #[test]
    fn zero_regressor_only_advances_the_count() {
        let mut state = GramState::new(1, 1, 1.0).unwrap();
        let before = state.gram().clone();
        state.update(&V::zeros(2), &V::zeros(1)).unwrap();
        assert_eq!(state.gram(), &before);
        assert_eq!(state.samples(), 1);
    }

    #[test]
    fn estimate_solves_the_single_update_case_by_hand() {
        let state = single_update_state();
        let theta = state.estimate();
        assert_relative_eq!(theta[(0, 0)], 0.25, max_relative = 1e-14);
        assert_relative_eq!(theta[(0, 1)], 0.0);
    }

    #[test]
    fn empty_state_estimates_zero_and_has_zero_error() {
        let state = GramState::<f64>::new(2, 1, 0.5).unwrap();
        assert_eq!(state.estimate(), M::zeros(2, 3));
        let any = M::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 0.0, 3.0, 1.0]);
        assert_eq!(state.squared_error(&any).unwrap(), 0.0);
    }

    #[test]
    fn squared_error_vanishes_on_the_generating_parameters() {
        let state = single_update_state();
        // Data came from theta = (0.5, anything with u = 0); pick (0.5, 1).
        let theta = M::from_row_slice(1, 2, &[0.5, 1.0]);
        assert_relative_eq!(state.squared_error(&theta).unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn squared_error_matches_direct_summation() {
        let mut state = GramState::new(2, 1, 2.0).unwrap();
        let mut lcg = 1_u64;
        let mut next = || {
            lcg = lcg.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((lcg >> 33) as f64) / (u32::MAX as f64) * 2.0 - 1.0
        };
        let mut zs = Vec::new();
        let mut xs = Vec::new();
        for _ in 0..100 {
            let z = V::from_fn(3, |_, _| next());
            let x = V::from_fn(2, |_, _| next());
            state.update(&z, &x).unwrap();
            zs.push(z);
            xs.push(x);
        }
        let theta = M::from_fn(2, 3, |_, _| next());
        let direct: f64 = zs
            .iter()
            .zip(&xs)
            .map(|(z, x)| (x - &theta * z).norm_squared())
            .sum();
        let via_stats = state.squared_error(&theta).unwrap();
        assert_relative_eq!(via_stats, direct, max_relative = 1e-10);

        // The batch-recomputed Gram matrix agrees with the incremental one.
        let mut batch = M::identity(3, 3) * 2.0;
        for z in &zs {
            batch += z * z.transpose();
        }
        assert!((state.gram() - &batch).norm() <= 1e-12 * batch.norm());
    }

    #[test]
    fn gradient_matches_finite_differences_of_squared_error() {
        let mut state = GramState::new(1, 1, 1.0).unwrap();
        let mut seed = 9_u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((seed >> 33) as f64) / (u32::MAX as f64) - 0.5
        };
        for _ in 0..20 {
            state
                .update(&V::from_fn(2, |_, _| next()), &V::from_fn(1, |_, _| next()))
                .unwrap();
        }
        let theta = M::from_row_slice(1, 2, &[0.3, -0.7]);
        let grad = state.squared_error_gradient(&theta).unwrap();
        let h = 1e-7;
        for j in 0..2 {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[(0, j)] += h;
            dn[(0, j)] -= h;
            let fd = (state.squared_error(&up).unwrap() - state.squared_error(&dn).unwrap())
                / (2.0 * h);
            assert_relative_eq!(grad[(0, j)], fd, max_relative = 1e-6, epsilon = 1e-8);
        }
    }

    #[test]
    fn noiseless_data_recovers_the_generator() {
        let theta_true = M::from_row_slice(1, 2, &[0.9, 0.4]);
        let mut state = GramState::new(1, 1, 1e-12).unwrap();
        let mut seed = 77_u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((seed >> 33) as f64) / (u32::MAX as f64) - 0.5
        };
        for _ in 0..10 {
            let z = V::from_fn(2, |_, _| next());
            let x = &theta_true * &z;
            state.update(&z, &x).unwrap();
        }
        let err = (state.estimate() - &theta_true).norm();
        assert!(err <= 1e-6, "recovery error {err}");
    }

    #[test]
    fn estimate_minimizes_the_regularized_error() {
        let mut state = GramState::new(1, 2, 1.0).unwrap();
        let mut seed = 5_u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((seed >> 33) as f64) / (u32::MAX as f64) - 0.5
        };
        for _ in 0..30 {
            state
                .update(&V::from_fn(3, |_, _| next()), &V::from_fn(1, |_, _| next()))
                .unwrap();
        }
        let theta_hat = state.estimate();
        let base = state.regularized_error(&theta_hat).unwrap();
        for _ in 0..100 {
            let perturbed = &theta_hat + M::from_fn(1, 3, |_, _| next());
            assert!(state.regularized_error(&perturbed).unwrap() >= base);
        }
        // Normal equations: theta_hat Z = M.
        let residual = (&theta_hat * state.gram()) - state.cross();
        assert!(residual.norm() <= 1e-10 * (1.0 + state.cross().norm()));
    }

    #[test]
    fn beta_radius_hand_values() {
        let state = GramState::<f64>::new(1, 1, 1.0).unwrap();
        let beta = state
            .beta_radius(std::f64::consts::E.recip(), 1.0, 2.0)
            .unwrap();
        let expected = (2.0_f64.sqrt() + 2.0).powi(2);
        assert_relative_eq!(beta, expected, max_relative = 1e-14);
        // delta -> 1 with no data: only the regularizer term survives.
        let near_one = state.beta_radius(1.0 - 1e-15, 1.0, 2.0).unwrap();
        assert_relative_eq!(near_one, 1.0 * 4.0, max_relative = 1e-6);
        assert_eq!(
            state.beta_radius(0.0, 1.0, 1.0).unwrap_err(),
            EstimationError::InvalidDelta
        );
        assert_eq!(
            state.beta_radius(1.0, 1.0, 1.0).unwrap_err(),
            EstimationError::InvalidDelta
        );
    }

    #[test]
    fn beta_radius_is_monotone_along_updates_and_in_delta() {
        let mut state = GramState::new(1, 1, 1.0).unwrap();
        let mut seed = 3_u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((seed >> 33) as f64) / (u32::MAX as f64) - 0.5
        };
        let mut last = state.beta_radius(0.05, 1.0, 2.0).unwrap();
        for _ in 0..50 {
            state
                .update(&V::from_fn(2, |_, _| next()), &V::from_fn(1, |_, _| next()))
                .unwrap();
            let beta = state.beta_radius(0.05, 1.0, 2.0).unwrap();
            assert!(beta >= last - 1e-12, "beta decreased: {beta} < {last}");
            last = beta;
        }
        let tighter = state.beta_radius(0.01, 1.0, 2.0).unwrap();
        assert!(tighter > last);
    }

    #[test]
    fn weighted_distance_examples() {
        let ball = ConfidenceBall::new(M::zeros(1, 2), M::identity(2, 2), 9.0).unwrap();
        assert_eq!(ball.weighted_distance(ball.center()).unwrap(), 0.0);
        assert!(ball.contains(ball.center()).unwrap());
        // Identity weight reduces the distance to the squared Frobenius norm.
        let theta = M::from_row_slice(1, 2, &[3.0, 0.0]);
        assert_relative_eq!(ball.weighted_distance(&theta).unwrap(), 9.0);
        assert!(ball.contains(&theta).unwrap(), "boundary points are members");
        let outside = M::from_row_slice(1, 2, &[3.0, 0.1]);
        assert!(!ball.contains(&outside).unwrap());
    }

    #[test]
    fn weighted_distance_agrees_with_the_cholesky_route() {
        let mut state = GramState::new(2, 1, 1.5).unwrap();
        let mut seed = 11_u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((seed >> 33) as f64) / (u32::MAX as f64) - 0.5
        };
        for _ in 0..50 {
            state
                .update(&V::from_fn(3, |_, _| next()), &V::from_fn(2, |_, _| next()))
                .unwrap();
        }
        let ball = state.confidence_ball(0.05, 1.0, 2.0).unwrap();
        let theta = ball.center() + M::from_fn(2, 3, |_, _| next());
        let direct = ball.weighted_distance(&theta).unwrap();
        let via_factor = ((&theta - ball.center()) * ball.weight_factor()).norm_squared();
        assert_relative_eq!(direct, via_factor, max_relative = 1e-12);
    }

    #[test]
    fn update_rejects_bad_inputs() {
        let mut state = GramState::new(1, 1, 1.0).unwrap();
        assert_eq!(
            state.update(&V::zeros(3), &V::zeros(1)).unwrap_err(),
            EstimationError::DimensionMismatch("regressor length must be n + m")
        );
        assert_eq!(
            state.update(&V::zeros(2), &V::zeros(2)).unwrap_err(),
            EstimationError::DimensionMismatch("successor length must be n")
        );
        assert_eq!(
            state
                .update(&V::from_column_slice(&[f64::NAN, 0.0]), &V::zeros(1))
                .unwrap_err(),
            EstimationError::NonFinite
        );
        assert!(GramState::<f64>::new(1, 1, 0.0).is_err());
        assert!(GramState::<f64>::new(0, 1, 1.0).is_err());
    }

    #[test]
    fn refreshed_factorization_stays_consistent() {
        // Cross the refresh interval and confirm estimate() still solves the
        // normal equations tightly.
        let mut state = GramState::new(1, 1, 1.0).unwrap();
        let mut seed = 21_u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((seed >> 33) as f64) / (u32::MAX as f64) - 0.5
        };
        for _ in 0..(REFRESH_INTERVAL + 10) {
            state
                .update(&V::from_fn(2, |_, _| next()), &V::from_fn(1, |_, _| next()))
                .unwrap();
        }
        let theta_hat = state.estimate();
        let residual = (&theta_hat * state.gram()) - state.cross();
        assert!(residual.norm() <= 1e-10 * (1.0 + state.cross().norm()));
    }
}
