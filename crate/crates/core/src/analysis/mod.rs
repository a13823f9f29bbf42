//! Discrete Sobolev norms, the estimates as checkable inequalities, and the
//! calibration of their constants.

pub mod calibration;
pub mod estimates;
pub mod picard;
pub mod sobolev;

pub use calibration::{
    calibrate_constants, calibration_key, family_key, pde_error_budget, Calibration, CalibrationFile,
};
pub use estimates::{
    apriori_bound_check, driver_at_zero, lambda_energy_check, source_along, weighted_bounds, weighted_time_integral,
    BoundMode, Constants, EstimateReport,
};
pub use picard::{lambda_one, picard_contraction_ratio, IterateLog};
pub use sobolev::sobolev_norm;
