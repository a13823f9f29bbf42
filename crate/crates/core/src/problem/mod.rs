//! Problem instances and everything that only looks at coefficients:
//! hypothesis checks, the `q̂` transform and mollification.

pub mod driver;
pub mod field;
pub mod library;
pub mod mollify;
pub mod spec;
pub mod transform;
pub mod validate;

pub use driver::DriverFunction;
pub use field::{CoefficientField, ScalarField, Shape};
pub use library::{builtin, catalog, CatalogEntry};
pub use mollify::{mollify_field, mollify_spec, MollifierKernel};
pub use spec::{DomainBox, Oracle, ProblemSpec};
pub use transform::{transform_spec, TransformedSpec};
pub use validate::{
    check_all_bounds, estimate_lipschitz_constant, validate_driver_lipschitz, validate_parabolicity, BoundReport,
    LipschitzReport, ParabolicityReport,
};
