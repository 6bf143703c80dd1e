//! Average-cost Riccati machinery for discrete-time linear-quadratic control.
//!
//! This module owns everything downstream code needs to evaluate a candidate
//! parameter matrix as a controller: the fixed-point solver for the discrete
//! algebraic Riccati equation, a dense discrete Lyapunov solver, the exact
//! gradient of the optimal average cost with respect to the parameters, and
//! spectral helpers.
//!
//! Conventions: the state dimension is `n`, the input dimension is `m`, a
//! parameter point is `theta = [A | B]` of shape `n x (n + m)`, and the
//! optimal average cost under unit-covariance process noise is
//! `trace(P(theta))` where `P` solves the Riccati equation.

use nalgebra::{Cholesky, DMatrix, DVector};
use std::fmt;

use crate::{from_f64, Real};

/// Errors produced by the solvers in this module.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RiccatiError {
    /// Riccati iterates diverged past the configured cap (the candidate
    /// admits no stabilizing solution) or the converged closed loop is not
    /// strictly stable.
    NonStabilizable,
    /// The iteration exhausted its budget without meeting the tolerance.
    NoConvergence,
    /// A Lyapunov solve was requested for a matrix that is not strictly
    /// stable.
    Unstable,
    /// Inputs had inconsistent shapes or violated a documented precondition.
    BadInput(&'static str),
}

impl fmt::Display for RiccatiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RiccatiError::NonStabilizable => {
                write!(f, "no stabilizing Riccati solution for this parameter")
            }
            RiccatiError::NoConvergence => write!(f, "iteration did not converge within budget"),
            RiccatiError::Unstable => write!(f, "matrix is not strictly stable"),
            RiccatiError::BadInput(msg) => write!(f, "bad input: {msg}"),
        }
    }
}

impl std::error::Error for RiccatiError {}

/// Dynamics pair `(A, B)` of an `n`-state, `m`-input linear system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams<T: Real> {
    /// State transition matrix, `n x n`.
    pub a: DMatrix<T>,
    /// Input matrix, `n x m`.
    pub b: DMatrix<T>,
}

impl<T: Real> SystemParams<T> {
    /// Validates shapes: `a` square and `b` with matching row count, both
    /// non-empty.
    pub fn new(a: DMatrix<T>, b: DMatrix<T>) -> Result<Self, RiccatiError> {
        if a.nrows() == 0 || !a.is_square() {
            return Err(RiccatiError::BadInput("A must be square and non-empty"));
        }
        if b.nrows() != a.nrows() || b.ncols() == 0 {
            return Err(RiccatiError::BadInput("B must be n x m with m >= 1"));
        }
        Ok(Self { a, b })
    }

    /// State dimension `n`.
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension `m`.
    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// Packs the pair into the stacked parameter matrix `[A | B]`.
    pub fn to_theta(&self) -> DMatrix<T> {
        let (n, m) = (self.state_dim(), self.input_dim());
        let mut theta = DMatrix::zeros(n, n + m);
        theta.view_mut((0, 0), (n, n)).copy_from(&self.a);
        theta.view_mut((0, n), (n, m)).copy_from(&self.b);
        theta
    }

    /// Splits a stacked parameter matrix `[A | B]` with `n` states back into
    /// the pair.
    pub fn from_theta(theta: &DMatrix<T>, n: usize) -> Result<Self, RiccatiError> {
        if theta.nrows() != n || theta.ncols() <= n {
            return Err(RiccatiError::BadInput("theta must be n x (n + m) with m >= 1"));
        }
        let m = theta.ncols() - n;
        Self::new(
            theta.view((0, 0), (n, n)).into_owned(),
            theta.view((0, n), (n, m)).into_owned(),
        )
    }
}

/// Quadratic stage-cost pair `(Q, R)` with `Q` symmetric positive
/// semi-definite and `R` symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct CostParams<T: Real> {
    /// State weight, `n x n`.
    pub q: DMatrix<T>,
    /// Input weight, `m x m`.
    pub r: DMatrix<T>,
}

impl<T: Real> CostParams<T> {
    /// Validates symmetry and definiteness of both weights.
    pub fn new(q: DMatrix<T>, r: DMatrix<T>) -> Result<Self, RiccatiError> {
        if q.nrows() == 0 || !q.is_square() || r.nrows() == 0 || !r.is_square() {
            return Err(RiccatiError::BadInput("Q and R must be square and non-empty"));
        }
        let sym_tol = from_f64::<T>(1e-10);
        if (&q - q.transpose()).norm() > sym_tol * (T::one() + q.norm()) {
            return Err(RiccatiError::BadInput("Q must be symmetric"));
        }
        if (&r - r.transpose()).norm() > sym_tol * (T::one() + r.norm()) {
            return Err(RiccatiError::BadInput("R must be symmetric"));
        }
        let eigs = q.symmetric_eigenvalues();
        let scale = eigs.iter().fold(T::zero(), |acc, e| acc.max(e.abs()));
        let psd_tol = from_f64::<T>(1e-10) * (T::one() + scale);
        if eigs.iter().any(|e| *e < -psd_tol) {
            return Err(RiccatiError::BadInput("Q must be positive semi-definite"));
        }
        if Cholesky::new(r.clone()).is_none() {
            return Err(RiccatiError::BadInput("R must be positive definite"));
        }
        Ok(Self { q, r })
    }

    /// State dimension `n` implied by `Q`.
    pub fn state_dim(&self) -> usize {
        self.q.nrows()
    }

    /// Input dimension `m` implied by `R`.
    pub fn input_dim(&self) -> usize {
        self.r.nrows()
    }
}

/// Converged output of [`solve_dare`].
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution<T: Real> {
    /// Stabilizing fixed point of the Riccati map, symmetric PSD.
    pub p: DMatrix<T>,
    /// Optimal feedback gain, `m x n`, so that `u = K x`.
    pub k: DMatrix<T>,
    /// Optimal average cost under unit-covariance noise: `trace(P)`.
    pub avg_cost: T,
}

/// Tuning knobs for the Riccati fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DareOptions<T: Real> {
    /// Relative step tolerance: stop once
    /// `||P_{k+1} - P_k||_F <= tol * (1 + ||P_k||_F)`.
    pub tol: T,
    /// Iteration budget before reporting [`RiccatiError::NoConvergence`].
    pub max_iter: usize,
    /// Frobenius-norm cap past which the iterate is declared divergent.
    pub divergence_cap: T,
}

impl<T: Real> Default for DareOptions<T> {
    fn default() -> Self {
        Self {
            tol: from_f64(1e-12),
            max_iter: 100_000,
            divergence_cap: from_f64(1e12),
        }
    }
}

/// Solves the average-cost discrete algebraic Riccati equation by value
/// iteration from `P_0 = Q`.
///
/// The fixed-point map is
/// `P <- Q + A' P A - A' P B (B' P B + R)^{-1} B' P A`,
/// the gain is `K = -(B' P B + R)^{-1} B' P A`, and the reported average
/// cost is `trace(P)`.
///
/// # Arguments
///
/// * `theta` - candidate dynamics `(A, B)`.
/// * `cost` - stage-cost weights; dimensions must match `theta`.
/// * `tol` - relative step tolerance (see [`DareOptions::tol`]).
/// * `max_iter` - iteration budget.
///
/// # Errors
///
/// [`RiccatiError::NonStabilizable`] when iterates diverge past the default
/// cap or the converged loop is not strictly stable,
/// [`RiccatiError::NoConvergence`] when the budget runs out first, and
/// [`RiccatiError::BadInput`] on shape mismatches.
pub fn solve_dare<T: Real>(
    theta: &SystemParams<T>,
    cost: &CostParams<T>,
    tol: T,
    max_iter: usize,
) -> Result<RiccatiSolution<T>, RiccatiError> {
    let opts = DareOptions {
        tol,
        max_iter,
        ..DareOptions::default()
    };
    solve_dare_with(theta, cost, &opts, None)
}

/// [`solve_dare`] with explicit options and an optional warm-start iterate.
///
/// A warm start only changes the number of iterations, not the fixed point;
/// callers that need bit-identical output across call sites should pass
/// `None` so the iteration always starts from `Q`.
pub fn solve_dare_with<T: Real>(
    theta: &SystemParams<T>,
    cost: &CostParams<T>,
    opts: &DareOptions<T>,
    warm_start: Option<&DMatrix<T>>,
) -> Result<RiccatiSolution<T>, RiccatiError> {
    let (n, m) = (theta.state_dim(), theta.input_dim());
    if cost.state_dim() != n || cost.input_dim() != m {
        return Err(RiccatiError::BadInput("cost dimensions must match the dynamics"));
    }
    let mut p = warm_start.cloned().unwrap_or_else(|| cost.q.clone());
    let mut converged = false;
    for _ in 0..opts.max_iter {
        let next = riccati_map(theta, cost, &p)?;
        let step = (&next - &p).norm();
        let cap_hit = !next.norm().is_finite() || next.norm() > opts.divergence_cap;
        if cap_hit {
            return Err(RiccatiError::NonStabilizable);
        }
        let done = step <= opts.tol * (T::one() + p.norm());
        p = next;
        if done {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(RiccatiError::NoConvergence);
    }
    let k = gain_from(theta, cost, &p)?;
    let closed = &theta.a + &theta.b * &k;
    if spectral_radius(&closed) >= T::one() {
        return Err(RiccatiError::NonStabilizable);
    }
    Ok(RiccatiSolution {
        avg_cost: p.trace(),
        k,
        p,
    })
}

/// One application of the Riccati map, re-symmetrized to keep roundoff from
/// accumulating asymmetry.
fn riccati_map<T: Real>(
    theta: &SystemParams<T>,
    cost: &CostParams<T>,
    p: &DMatrix<T>,
) -> Result<DMatrix<T>, RiccatiError> {
    let pa = p * &theta.a;
    let pb = p * &theta.b;
    let gram = theta.b.transpose() * &pb + &cost.r;
    // B' P B + R is positive definite whenever P is PSD; a failed
    // factorization means the iterate has already left that cone.
    let chol = Cholesky::new(gram).ok_or(RiccatiError::NonStabilizable)?;
    let bpa = theta.b.transpose() * &pa;
    let x = chol.solve(&bpa);
    let next = &cost.q + theta.a.transpose() * &pa - bpa.transpose() * &x;
    Ok(symmetrize(next))
}

/// Gain implied by a Riccati iterate: `K = -(B' P B + R)^{-1} B' P A`.
fn gain_from<T: Real>(
    theta: &SystemParams<T>,
    cost: &CostParams<T>,
    p: &DMatrix<T>,
) -> Result<DMatrix<T>, RiccatiError> {
    let gram = theta.b.transpose() * p * &theta.b + &cost.r;
    let chol = Cholesky::new(gram).ok_or(RiccatiError::NonStabilizable)?;
    let bpa = theta.b.transpose() * p * &theta.a;
    Ok(-chol.solve(&bpa))
}

fn symmetrize<T: Real>(m: DMatrix<T>) -> DMatrix<T> {
    let half = from_f64::<T>(0.5);
    let mt = m.transpose();
    (m + mt) * half
}

/// Solves the discrete Lyapunov equation `S = L S L' + C` for strictly
/// stable `L`.
///
/// The equation is linear in `S`, so it is solved exactly as the dense
/// Kronecker system `(I - L (x) L) vec(S) = vec(C)` followed by one step of
/// iterative refinement when roundoff warrants it. The result is
/// re-symmetrized when `C` is symmetric.
///
/// # Errors
///
/// [`RiccatiError::Unstable`] when the spectral radius of `L` is not below
/// `1 - 1e-9`, [`RiccatiError::BadInput`] on shape mismatches, and
/// [`RiccatiError::NoConvergence`] if the residual cannot be driven below
/// `1e-10 * (1 + ||S||_F)`.
pub fn solve_dlyap<T: Real>(l: &DMatrix<T>, c: &DMatrix<T>) -> Result<DMatrix<T>, RiccatiError> {
    if !l.is_square() || l.is_empty() {
        return Err(RiccatiError::BadInput("L must be square and non-empty"));
    }
    if c.shape() != l.shape() {
        return Err(RiccatiError::BadInput("C must have the same shape as L"));
    }
    let margin = T::one() - from_f64::<T>(1e-9);
    if spectral_radius(l) >= margin {
        return Err(RiccatiError::Unstable);
    }
    let n = l.nrows();
    let kron = l.kronecker(l);
    let system = DMatrix::<T>::identity(n * n, n * n) - kron;
    let lu = system.lu();
    let rhs = DVector::from_column_slice(c.as_slice());
    let x = lu.solve(&rhs).ok_or(RiccatiError::Unstable)?;
    let mut s = DMatrix::from_column_slice(n, n, x.as_slice());
    let symmetric_input = (c - c.transpose()).norm() == T::zero();
    if symmetric_input {
        s = symmetrize(s);
    }
    let tol = from_f64::<T>(1e-10);
    for _ in 0..2 {
        let residual = c + l * &s * l.transpose() - &s;
        if residual.norm() <= tol * (T::one() + s.norm()) {
            return Ok(s);
        }
        let correction = lu
            .solve(&DVector::from_column_slice(residual.as_slice()))
            .ok_or(RiccatiError::Unstable)?;
        s += DMatrix::from_column_slice(n, n, correction.as_slice());
        if symmetric_input {
            s = symmetrize(s);
        }
    }
    let residual = c + l * &s * l.transpose() - &s;
    if residual.norm() <= tol * (T::one() + s.norm()) {
        Ok(s)
    } else {
        Err(RiccatiError::NoConvergence)
    }
}

/// Exact gradient of the optimal average cost `trace(P(theta))` with respect
/// to `A` and `B`.
///
/// With `L = A + B K` the adjoint form is
/// `d trace(P)/dA = 2 P L S` and `d trace(P)/dB = 2 P L S K'`, where `S`
/// solves the closed-loop Lyapunov equation `S = L S L' + I`.
///
/// Returns the pair `(grad_a, grad_b)` with shapes matching `A` and `B`.
pub fn grad_avg_cost<T: Real>(
    theta: &SystemParams<T>,
    cost: &CostParams<T>,
) -> Result<(DMatrix<T>, DMatrix<T>), RiccatiError> {
    let sol = solve_dare_with(theta, cost, &DareOptions::default(), None)?;
    grad_avg_cost_from(theta, &sol)
}

/// [`grad_avg_cost`] reusing an already-computed Riccati solution.
pub fn grad_avg_cost_from<T: Real>(
    theta: &SystemParams<T>,
    sol: &RiccatiSolution<T>,
) -> Result<(DMatrix<T>, DMatrix<T>), RiccatiError> {
    let n = theta.state_dim();
    let l = &theta.a + &theta.b * &sol.k;
    let s = solve_dlyap(&l, &DMatrix::identity(n, n))?;
    let two = from_f64::<T>(2.0);
    let pls = (&sol.p * &l * &s) * two;
    let grad_b = &pls * sol.k.transpose();
    Ok((pls, grad_b))
}

/// Spectral radius (largest eigenvalue modulus) of a square matrix.
///
/// Uses a real Schur decomposition; if the QR iteration ever fails to
/// converge the estimate falls back to normalized power iteration. Accuracy
/// is far better than the `1e-9` relative contract on the matrices this
/// crate produces.
pub fn spectral_radius<T: Real>(m: &DMatrix<T>) -> T {
    assert!(m.is_square(), "spectral radius requires a square matrix");
    if m.is_empty() {
        return T::zero();
    }
    if let Some(schur) = m.clone().try_schur(T::default_epsilon(), 100_000) {
        schur
            .complex_eigenvalues()
            .iter()
            .map(|e| (e.re * e.re + e.im * e.im).sqrt())
            .fold(T::zero(), T::max)
    } else {
        power_iteration_radius(m)
    }
}

/// Largest singular value of a matrix; exposed as a diagnostic alongside the
/// spectral radius (for non-normal matrices the two can differ widely).
pub fn operator_norm<T: Real>(m: &DMatrix<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    m.clone()
        .singular_values()
        .iter()
        .fold(T::zero(), |acc, s| acc.max(*s))
}

/// Fallback estimate of the spectral radius by renormalized power iteration,
/// averaging the per-step growth over a tail window so complex-conjugate
/// dominant pairs do not defeat it.
fn power_iteration_radius<T: Real>(m: &DMatrix<T>) -> T {
    let n = m.nrows();
    let mut v = DVector::<T>::from_element(n, T::one() / from_f64::<T>(n as f64).sqrt());
    let total = 2_000;
    let window = 500;
    let mut log_sum = T::zero();
    for it in 0..total {
        let next = m * &v;
        let norm = next.norm();
        if norm == T::zero() || !norm.is_finite() {
            return norm;
        }
        if it >= total - window {
            log_sum += norm.ln();
        }
        v = next / norm;
    }
    (log_sum / from_f64::<T>(window as f64)).exp()
}

/// Closed-loop matrix `A + B K` for a parameter/gain pair.
pub fn closed_loop<T: Real>(theta: &SystemParams<T>, k: &DMatrix<T>) -> DMatrix<T> {
    &theta.a + &theta.b * k
}
