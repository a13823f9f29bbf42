//! Forward-backward SDE and degenerate backward PDE solvers, wired together to
//! cross-check the nonlinear Feynman-Kac correspondence `u(t, x) = Y_t^{t,x}`.
//!
//! Module map:
//!
//! - [`problem`]: coefficient fields, drivers, problem instances, hypothesis
//!   validators, the `q̂ = q + u_x σ` transform and coefficient mollification.
//! - [`paths`]: Brownian bundles and Euler-Maruyama forward ensembles.
//! - [`bsde`]: regression Monte Carlo for the backward component.
//! - [`pde`]: implicit upwind grid solver with vanishing viscosity.
//! - [`analysis`]: discrete Sobolev norms and the energy / a-priori estimates.
//! - [`correspondence`]: the cross-solver verifiers.
//!
//! Path-level loops run on rayon when the `parallel` feature is on (default);
//! every reduction is blocked in a fixed order so results are bit-identical
//! regardless of the thread count.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bsde;
pub mod correspondence;
pub mod error;
pub mod exec;
pub mod io;
pub mod paths;
pub mod pde;
pub mod problem;
pub mod seed;

pub use error::{Error, Result};
pub use exec::Exec;
