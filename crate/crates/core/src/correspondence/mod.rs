//! Cross-solver verification of `u(t, x) = Y_t^{t,x}`, the mollification
//! experiment and the empirical continuity checks.

mod continuity;
mod feynman_kac;
mod mollification;

pub use continuity::{
    continuity_modulus, joint_continuity_check, joint_continuity_refinement, ContinuityReport, Direction,
    JointContinuityReport, JointModulus, ModulusPair, REFINEMENT_BAND,
};
pub use feynman_kac::{validate_for_correspondence, verify_feynman_kac, CorrespondenceReport, PointComparison};
pub use mollification::{loglog_slope, mollification_convergence, MollificationReport, MOLLIFICATION_SLOPE};
