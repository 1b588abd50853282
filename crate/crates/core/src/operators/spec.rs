use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::gallery::{
    block_companion, graph_laplacian, BandedOperator, DiagonalOperator, ScaledOperator,
    SparseOperator,
};
use super::InfiniteOperator;
use crate::error::{Error, Result};

/// A complex number in operator files: either a bare real or `[re, im]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComplexValue {
    Real(f64),
    Pair([f64; 2]),
}

impl From<ComplexValue> for Complex64 {
    fn from(v: ComplexValue) -> Self {
        match v {
            ComplexValue::Real(x) => Complex64::new(x, 0.0),
            ComplexValue::Pair([re, im]) => Complex64::new(re, im),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Band {
    pub offset: isize,
    pub values: Vec<ComplexValue>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorKind {
    /// Entries beyond `values` equal `tail` (default 0).
    Diagonal {
        values: Vec<ComplexValue>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tail: Option<ComplexValue>,
    },
    Banded {
        bandwidth: usize,
        bands: Vec<Band>,
    },
    /// `[row, col, re, im]`, 1-based.
    Sparse {
        triplets: Vec<(usize, usize, f64, f64)>,
    },
    Graph {
        edges: Vec<(usize, usize)>,
    },
    Scalar {
        value: ComplexValue,
    },
    Companion {
        coefficients: Vec<OperatorSpec>,
    },
}

/// JSON description of an operator, optionally scaled by a complex factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    #[serde(flatten)]
    pub kind: OperatorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<ComplexValue>,
}

pub fn parse_operator_spec(text: &str) -> Result<OperatorSpec> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("operator spec: {e}")))
}

fn complex_list(values: &[ComplexValue]) -> Result<Vec<Complex64>> {
    values
        .iter()
        .map(|&v| {
            let z = Complex64::from(v);
            if z.re.is_finite() && z.im.is_finite() {
                Ok(z)
            } else {
                Err(Error::InvalidInput("non-finite operator entry".into()))
            }
        })
        .collect()
}

impl OperatorSpec {
    pub fn build(&self) -> Result<Arc<dyn InfiniteOperator>> {
        let base: Arc<dyn InfiniteOperator> = match &self.kind {
            OperatorKind::Diagonal { values, tail } => {
                let values = complex_list(values)?;
                match tail {
                    None => Arc::new(DiagonalOperator::new(values)),
                    Some(t) => {
                        let tail = complex_list(&[*t])?[0];
                        let real = tail.im == 0.0 && values.iter().all(|v| v.im == 0.0);
                        Arc::new(DiagonalOperator::from_fn(
                            move |k| values.get(k - 1).copied().unwrap_or(tail),
                            real,
                        ))
                    }
                }
            }
            OperatorKind::Banded { bandwidth, bands } => {
                let bands = bands
                    .iter()
                    .map(|b| Ok((b.offset, complex_list(&b.values)?)))
                    .collect::<Result<Vec<_>>>()?;
                Arc::new(BandedOperator::new(*bandwidth, bands)?)
            }
            OperatorKind::Sparse { triplets } => {
                let t: Vec<_> = triplets
                    .iter()
                    .map(|&(r, c, re, im)| (r, c, Complex64::new(re, im)))
                    .collect();
                Arc::new(SparseOperator::from_triplets(&t)?)
            }
            OperatorKind::Graph { edges } => Arc::new(graph_laplacian(edges)?),
            OperatorKind::Scalar { value } => {
                Arc::new(DiagonalOperator::scalar(complex_list(&[*value])?[0]))
            }
            OperatorKind::Companion { coefficients } => {
                let blocks = coefficients
                    .iter()
                    .map(OperatorSpec::build)
                    .collect::<Result<Vec<_>>>()?;
                Arc::new(block_companion(blocks)?)
            }
        };
        Ok(match self.scale {
            None => base,
            Some(s) => Arc::new(ScaledOperator::new(base, complex_list(&[s])?[0])),
        })
    }
}
