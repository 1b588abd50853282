use num_complex::Complex64;
use serde::Serialize;

use crate::contour::{AnalyticErrorReport, ContourParams};
use crate::vector::FiniteVector;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvolutionMode {
    Analytic,
    Fractional { iota: f64 },
    Regularized { quadrature: QuadratureMode },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureMode {
    /// Uniform trapezoidal nodes with a proven error bound.
    Rigorous,
    /// Composite Gauss–Legendre with a posteriori estimates.
    Practical,
}

/// One contribution to the error of a computed solution.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorTerm {
    pub label: String,
    /// Bound (or estimate, when not certified); `None` if unknown.
    pub bound: Option<f64>,
    pub certified: bool,
}

impl ErrorTerm {
    pub fn certified(label: &str, bound: f64) -> Self {
        Self {
            label: label.to_owned(),
            bound: Some(bound),
            certified: true,
        }
    }

    pub fn estimate(label: &str, bound: Option<f64>) -> Self {
        Self {
            label: label.to_owned(),
            bound,
            certified: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorReport {
    pub terms: Vec<ErrorTerm>,
    /// Sum of all terms when every one of them is certified.
    pub certified_total: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contour: Option<AnalyticErrorReport>,
}

impl ErrorReport {
    pub fn new(terms: Vec<ErrorTerm>, contour: Option<AnalyticErrorReport>) -> Self {
        let certified_total = terms
            .iter()
            .map(|t| if t.certified { t.bound } else { None })
            .sum::<Option<f64>>();
        Self {
            terms,
            certified_total,
            contour,
        }
    }

    pub fn term(&self, label: &str) -> Option<&ErrorTerm> {
        self.terms.iter().find(|t| t.label == label)
    }
}

/// Per-node record of a resolvent solve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodeDiagnostic {
    pub index: i64,
    pub z: Complex64,
    pub weight: Complex64,
    /// Point at which `A - ζI` was solved (differs from `z` for pencils).
    pub solve_point: Complex64,
    pub residual: f64,
    pub residual_target: f64,
    pub resolvent_bound: f64,
    pub bound_certified: bool,
    pub truncation_cols: usize,
    pub rhs_truncation: usize,
    pub iterations: usize,
    /// Obtained by conjugating the solve at the mirrored node.
    pub mirrored: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct EvolutionResult {
    pub mode: EvolutionMode,
    pub times: Vec<f64>,
    pub solutions: Vec<FiniteVector>,
    pub error: ErrorReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contour: Option<ContourParams>,
    /// Quadrature nodes used; `nodes` may hold only the first of them.
    pub node_count: usize,
    pub nodes: Vec<NodeDiagnostic>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn certified_total_needs_all_terms() {
        let all = ErrorReport::new(
            vec![
                ErrorTerm::certified("a", 0.25),
                ErrorTerm::certified("b", 0.5),
            ],
            None,
        );
        assert_eq!(all.certified_total, Some(0.75));
        let partial = ErrorReport::new(
            vec![
                ErrorTerm::certified("a", 0.25),
                ErrorTerm::estimate("q", Some(1e-3)),
            ],
            None,
        );
        assert_eq!(partial.certified_total, None);
    }
}
