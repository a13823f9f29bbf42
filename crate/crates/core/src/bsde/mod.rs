//! Regression Monte Carlo for the backward component `(Y, Z)`.
//!
//! Conditional expectations `E[· | X_{t_k}]` are least-squares projections
//! onto a finite basis evaluated on the simulated paths:
//!
//! ```text
//! Z_k = E[Ỹ_{k+1} ΔW_k | X_k] / Δt
//! Y_k = (E[Ỹ_{k+1} | X_k] + Δt (ν·Z_k + f(t_k, X_k, Y_k^{prev}, Z_k^{prev}))) / (1 − Δt c)
//! Ỹ_k = (Ỹ_{k+1} + Δt (ν·Z_k + f(...))) / (1 − Δt c),   Ỹ_N = φ(X_N)
//! ```
//!
//! `Ỹ` is the pathwise backward sum, so `E[Ỹ_{k+1} | X_k] = E[Y_{k+1} | X_k]`.

pub mod basis;
pub mod solver;
pub mod value;

pub use basis::{Fit, RegressionBasis};
pub use solver::{
    solve_linear_bsde, solve_linear_bsde_with, solve_semilinear_bsde, solve_semilinear_bsde_with, BackwardEnsemble,
    PicardConfig, StepDiagnostic,
};
pub use value::{
    estimate_value_field, flow_property_residual, solve_from, FlowResidual, McConfig, NestedConfig, ValueField,
    ValuePoint,
};
