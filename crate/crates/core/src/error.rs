use thiserror::Error;

use crate::evolution::EvolutionResult;
use crate::resolvent::ResolventSolve;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("argument out of domain: {0}")]
    OutOfDomain(String),

    /// An adaptive loop ran past its index ceiling. Usually means an oracle
    /// violates its accuracy contract.
    #[error("index ceiling {ceiling} exceeded: {detail}")]
    CeilingExceeded { ceiling: usize, detail: String },

    /// The truncation ceiling was reached before the residual certificate
    /// passed. The best candidate found is returned alongside.
    #[error(
        "resolvent tolerance not met at z = {z}: residual {achieved:e} > target {target:e} \
         with {cols} columns"
    )]
    ResolventToleranceNotMet {
        z: num_complex::Complex64,
        target: f64,
        achieved: f64,
        cols: usize,
        best: Box<ResolventSolve>,
    },

    #[error("tolerance not met: {detail}")]
    ToleranceNotMet {
        detail: String,
        partial: Option<Box<EvolutionResult>>,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn is_tolerance_not_met(&self) -> bool {
        matches!(
            self,
            Error::ToleranceNotMet { .. } | Error::ResolventToleranceNotMet { .. }
        )
    }
}
