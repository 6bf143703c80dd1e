//! Adaptive linear-quadratic control laboratory.
//!
//! The crate simulates unknown linear systems `x_{t+1} = A x_t + B u_t + w_t`
//! with quadratic stage costs and pits episodic adaptive controllers against
//! each other: a cost-biased least-squares controller, an optimistic
//! (confidence-ball minimum) controller, a posterior-style sampling
//! controller, plain certainty equivalence, and the omniscient optimal
//! controller as a floor.
//!
//! Modules build on each other bottom-up:
//!
//! * [`riccati`] — average-cost Riccati and Lyapunov solvers plus the exact
//!   gradient of the optimal average cost with respect to the parameters.
//! * [`system`] — simulation of the true system with seeded Gaussian noise
//!   and replayable trajectory logs.
//! * [`estimation`] — online regularized least squares and the
//!   self-normalized confidence ellipsoid around the estimate.
//! * [`optimization`] — projections onto the search set and projected
//!   gradient descent for the controller objectives.
//! * [`agents`] — the episodic controllers themselves.
//! * [`harness`] — seeded trials, regret curves and their exact
//!   decomposition, aggregation across seeds, and CSV output.
//!
//! All numerical kernels are generic over the scalar type through [`Real`];
//! the harness and CLI work at `f64` via the crate-root aliases.

pub mod agents;
pub mod estimation;
pub mod harness;
pub mod optimization;
pub mod riccati;
pub mod system;

use nalgebra::RealField;
use num_traits::FromPrimitive;

/// Scalar types the numerical core is generic over.
///
/// `f32` and `f64` both qualify. The bound deliberately avoids
/// `num_traits::Float` so that method names like `sqrt` resolve uniquely
/// through [`RealField`].
pub trait Real: RealField + FromPrimitive + Copy {}

impl<T: RealField + FromPrimitive + Copy> Real for T {}

/// Dense matrix at the precision used by the harness and CLI.
pub type Matrix = nalgebra::DMatrix<f64>;

/// Dense column vector at the precision used by the harness and CLI.
pub type Vector = nalgebra::DVector<f64>;

/// Converts an `f64` constant into the working scalar type.
pub(crate) fn from_f64<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("constant must be representable in the scalar type")
}
