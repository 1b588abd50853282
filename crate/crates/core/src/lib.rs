//! Certified computation of `exp(tA) u0` for infinite-dimensional generators
//! given through matrix entries, using only finite truncations.

pub mod contour;
pub mod error;
pub mod evolution;
pub mod laplace;
pub mod operators;
pub mod regularized;
pub mod resolvent;
pub mod vector;

pub use contour::{evolve_analytic, AnalyticConfig};
pub use error::{Error, Result};
pub use evolution::{ErrorReport, ErrorTerm, EvolutionMode, EvolutionResult, QuadratureMode};
pub use laplace::{evolve_fractional, mittag_leffler};
pub use operators::{GeneratorBounds, InfiniteOperator, RangeRegion};
pub use regularized::{evolve_c0, plan_regularized, RegularizedConfig};
pub use resolvent::adaptive_resolvent_solve;
pub use vector::{EvaluableVector, FiniteVector};
