//! Penalty approximation and complementarity solvers for one- and two-sided
//! obstacle problems `-Lu = f(x, u) + mu + nu` with measure data, on a 1-D
//! Dirichlet grid.
//!
//! The crate is organized bottom-up:
//!
//! - [`grid`]: uniform interior grid with lumped masses and boundary distance.
//! - [`measures`]: density-plus-atoms measures, Jordan decomposition, lumping.
//! - [`operators`]: assembled `-L` (Laplacian, fractional powers, killing).
//! - [`nonlinearity`]: monotone reaction terms `f(x, y)`.
//! - [`solvers`]: semilinear, penalized and obstacle solvers plus the
//!   projected Gauss-Seidel oracle.
//! - [`verify`]: checkers for complementarity, comparison, norm and energy
//!   bounds, the supersolution envelope and the Lewy-Stampacchia inequality.
//! - [`mc`]: Monte Carlo estimate of the probabilistic representation of `u`.
//! - [`generate`]: seeded random instances for randomized testing.

pub mod error;
pub mod generate;
pub mod grid;
pub mod mc;
pub mod measures;
pub mod nonlinearity;
pub mod operators;
pub mod solvers;
pub mod verify;

pub use error::{Error, Result};
pub use grid::Grid;
pub use measures::{Atom, MeasureData, SignedDecomposition};
pub use nonlinearity::Nonlinearity;
pub use operators::{AssembledOperator, OperatorSpec};
pub use solvers::{ObstacleProblem, ObstacleSolution, SolverOptions};
pub use verify::{Check, VerificationReport};

/// Node vector type used throughout the crate.
pub type NodeVector = nalgebra::DVector<f64>;
