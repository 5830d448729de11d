//! Energy-efficiency power-allocation games on MIMO multiple-access
//! channels.
//!
//! Each of `K` users picks a diagonal power allocation over the singular
//! modes of its own channel and is paid in rate per unit of consumed power
//! (transmit plus circuit). The crate computes the Nash equilibrium of that
//! game by exact best-response dynamics and by a bisection search over the
//! common marginal-utility level, verifies (approximate) equilibria against
//! sampled unilateral deviations, and reproduces Monte-Carlo comparisons
//! against uniform power allocation.
//!
//! All numerics are generic over the scalar type via [`scalar::Scalar`];
//! the `*64` aliases below fix `f64`, which is what the CLI uses.

pub mod baselines;
pub mod best_response;
pub mod channel;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod game;
pub mod matrix;
pub mod scalar;
pub mod solvers;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Compiles the README's code examples.
#[doc = include_str!("../../../README.md")]
#[cfg(doctest)]
pub struct ReadmeDoctests;

/// Concrete `f64` aliases for the core types.
pub type ComplexMatrix64 = matrix::ComplexMatrix<f64>;
pub type SvdFactors64 = matrix::SvdFactors<f64>;
pub type ChannelSet64 = channel::ChannelSet<f64>;
pub type GameConfig64 = game::GameConfig<f64>;
pub type PowerAllocation64 = game::PowerAllocation<f64>;
pub type ActionProfile64 = game::ActionProfile<f64>;
pub type BrSettings64 = best_response::BrSettings<f64>;
pub type BrResult64 = best_response::BrResult<f64>;
pub type SolverSettings64 = solvers::SolverSettings<f64>;
pub type SolveReport64 = solvers::SolveReport<f64>;
pub type ExperimentSpec64 = experiments::ExperimentSpec<f64>;
