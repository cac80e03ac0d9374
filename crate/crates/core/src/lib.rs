//! Online reinforcement learning for continuous-time stochastic linear systems.
//!
//! The crate is `no_std` (with `alloc`) and carries only numerical code:
//!
//! * [`matspec`] spectral abscissa, Jordan structure, matrix exponential, Lyapunov solves
//! * [`riccati`] algebraic Riccati equation, optimal gains and the Lipschitz constants
//! * [`margin`] stability margins, eigenvalue perturbation bounds and the stabilization oracle
//! * [`sde`] exact and Euler–Maruyama simulation of the controlled Ito SDE
//! * [`estimator`] continuous-time least squares with randomized estimates
//! * [`policy`] the episodic randomized-estimates policy loop
//! * [`regret`] coupled regret, the policy-differentiation term and rate constants
//!
//! IO, presets and experiment orchestration live in the companion harness crate.
#![no_std]
// Float methods come from `num_traits::Float`. When anything in the build
// links std (tests, a std dependent), the inherent methods win and those
// imports go unused, hence the `allow`s on them.
// `!(x > 0.0)` style guards are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
#[macro_use]
extern crate std;

pub mod error;
pub mod estimator;
pub mod linalg;
pub mod margin;
pub mod matspec;
pub mod model;
pub mod policy;
pub mod regret;
pub mod riccati;
pub mod sde;

pub use error::{Error, Result};
pub use model::{CostSpec, DynamicsModel, ParameterPair};
