//! Implicit upwind grid solver for the deterministic-coefficient problem
//!
//! ```text
//! u_t + (a + ε I)^{ij} u_ij + (b + σν)^i u_i + c u + f(t, x, u, σᵀu_x) = 0,  u(T) = φ
//! ```
//!
//! on the truncated box `[-R, R]^d`, `d <= 2`. In this regime `q ≡ 0` and
//! `q̂ = σᵀ u_x`, so the `ν·q̂` term is a drift.

pub mod grid;
pub mod operator;
pub mod solver;
pub mod viscosity;
pub mod weak;

pub use grid::{GridFunction, GridMeta, SpaceGrid};
pub use operator::LINEAR_TOL;
pub use solver::{solve_backward_linear_pde, solve_backward_semilinear_pde, PdeConfig, PdeSolution};
pub use viscosity::{viscosity_sweep, SweepGap, SweepReport, CAUCHY_RATIO, DEFAULT_SCHEDULE};
pub use weak::{default_test_functions, weak_residual, TestFunction};
