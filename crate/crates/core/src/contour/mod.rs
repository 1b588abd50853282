//! Hyperbolic-contour quadrature for analytic semigroups.

mod analytic;
mod lambert;
mod params;

pub use analytic::{
    analytic_error_report, cosh_kernel_integral, evolve_analytic, stability_metric, AnalyticConfig,
    AnalyticErrorReport,
};
pub(crate) use analytic::{contour_evolve, Pencil};
pub use lambert::lambert_w;
pub use params::{quadrature_rule, select_contour, ContourParams, QuadratureRule, DEFAULT_BETA};
