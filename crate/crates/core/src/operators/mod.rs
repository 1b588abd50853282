//! Operators on l2(N) presented through entry oracles.
//!
//! An operator A is read column-wise: `entry(j, k, m)` approximates
//! `<A e_k, e_j>` and `gram(j, k, m)` approximates `<A e_k, A e_j>`, both to
//! within `2^-m`. Structural hints (known column supports, bandwidth) enable
//! fast paths but never replace the oracle contract.

mod gallery;
mod range;
mod spec;

use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::vector::{
    pow2_neg, precision_for, truncate_vector, EvaluableVector, FiniteVector, TruncationOptions,
};

pub use gallery::{
    block_companion, graph_laplacian, grid_graph_edges, BandedOperator, CompanionOperator,
    DiagonalOperator, ScaledOperator, SparseOperator,
};
pub use range::{resolvent_norm_bound, GeneratorBounds, RangeRegion};
pub use spec::{parse_operator_spec, Band, ComplexValue, OperatorKind, OperatorSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    Diagonal,
    Banded(usize),
    SparseColumns,
    DenseColumns,
}

pub type Column = Vec<(usize, Complex64)>;

pub trait InfiniteOperator: Send + Sync {
    /// Approximates `<A e_col, e_row>` to within `2^-precision`.
    fn entry(&self, row: usize, col: usize, precision: u32) -> Complex64;

    /// Approximates `<A e_col, A e_row>` to within `2^-precision`.
    ///
    /// The default assembles it from [`column`](Self::column); operators whose
    /// column supports are unknown must override it.
    fn gram(&self, row: usize, col: usize, precision: u32) -> Complex64 {
        let a = self
            .column(col, precision.saturating_add(8))
            .expect("gram() needs column supports or an override");
        let b = self
            .column(row, precision.saturating_add(8))
            .expect("gram() needs column supports or an override");
        sparse_dot(&a, &b)
    }

    fn structure(&self) -> Structure;

    /// Ascending superset of the support of `A e_col`, or `None` if unknown.
    fn column_support(&self, col: usize) -> Option<Vec<usize>>;

    /// True when the oracles return exact values at every precision.
    fn is_exact(&self) -> bool {
        false
    }

    /// True when every entry is real.
    fn is_real(&self) -> bool {
        false
    }

    /// The nonzero entries of `A e_col`, if its support is known.
    fn column(&self, col: usize, precision: u32) -> Option<Column> {
        let support = self.column_support(col)?;
        Some(
            support
                .into_iter()
                .map(|row| (row, self.entry(row, col, precision)))
                .filter(|(_, v)| *v != Complex64::new(0.0, 0.0))
                .collect(),
        )
    }
}

impl<T: InfiniteOperator + ?Sized> InfiniteOperator for Arc<T> {
    fn entry(&self, row: usize, col: usize, precision: u32) -> Complex64 {
        (**self).entry(row, col, precision)
    }
    fn gram(&self, row: usize, col: usize, precision: u32) -> Complex64 {
        (**self).gram(row, col, precision)
    }
    fn structure(&self) -> Structure {
        (**self).structure()
    }
    fn column_support(&self, col: usize) -> Option<Vec<usize>> {
        (**self).column_support(col)
    }
    fn is_exact(&self) -> bool {
        (**self).is_exact()
    }
    fn is_real(&self) -> bool {
        (**self).is_real()
    }
    fn column(&self, col: usize, precision: u32) -> Option<Column> {
        (**self).column(col, precision)
    }
}

/// `Σ_i a_i conj(b_i)` over two sorted sparse columns.
pub(crate) fn sparse_dot(a: &[(usize, Complex64)], b: &[(usize, Complex64)]) -> Complex64 {
    let (mut i, mut k) = (0, 0);
    let mut acc = Complex64::new(0.0, 0.0);
    while i < a.len() && k < b.len() {
        match a[i].0.cmp(&b[k].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => k += 1,
            std::cmp::Ordering::Equal => {
                acc += a[i].1 * b[k].1.conj();
                i += 1;
                k += 1;
            }
        }
    }
    acc
}

/// `<(A - cI) e_col, (A - cI) e_row>` from the first- and second-order oracles.
pub(crate) fn shifted_gram(
    op: &dyn InfiniteOperator,
    c: Complex64,
    row: usize,
    col: usize,
    precision: u32,
) -> Complex64 {
    let mut g = op.gram(row, col, precision)
        - c.conj() * op.entry(row, col, precision)
        - c * op.entry(col, row, precision).conj();
    if row == col {
        g += c.norm_sqr();
    }
    g
}

/// The column `(A - cI) e_col` as a sorted sparse list, if its support is known.
pub(crate) fn shifted_column(
    op: &dyn InfiniteOperator,
    c: Complex64,
    col: usize,
    precision: u32,
) -> Option<Column> {
    let mut column = op.column(col, precision)?;
    match column.binary_search_by_key(&col, |&(r, _)| r) {
        Ok(p) => column[p].1 -= c,
        Err(p) => column.insert(p, (col, -c)),
    }
    column.retain(|(_, v)| *v != Complex64::new(0.0, 0.0));
    Some(column)
}

/// `(A - cI) v` seen through oracles, for the unknown-support route.
struct ShiftedImage<'a> {
    op: &'a dyn InfiniteOperator,
    v: &'a FiniteVector,
    c: Complex64,
    // log2 of the factor by which oracle errors are amplified.
    coeff_gain: u32,
    norm_gain: u32,
}

impl EvaluableVector for ShiftedImage<'_> {
    fn coefficient(&self, index: usize, precision: u32) -> Complex64 {
        let m = precision.saturating_add(self.coeff_gain);
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, vk) in self.v.iter() {
            let mut a = self.op.entry(index, k, m);
            if index == k {
                a -= self.c;
            }
            acc += a * vk;
        }
        acc
    }

    fn norm_sq(&self, precision: u32) -> f64 {
        let m = precision.saturating_add(self.norm_gain);
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, vj) in self.v.iter() {
            for (k, vk) in self.v.iter() {
                acc += vk * vj.conj() * shifted_gram(self.op, self.c, j, k, m);
            }
        }
        acc.re.max(0.0)
    }
}

/// Computes `w` with `||w - (A - cI) v|| <= eps`.
///
/// With known column supports this is an exact sparse product (up to oracle
/// precision); otherwise the image is truncated from its coefficient and norm
/// oracles as for any evaluable vector.
pub fn apply_shifted(
    op: &dyn InfiniteOperator,
    v: &FiniteVector,
    c: Complex64,
    eps: f64,
    options: &TruncationOptions,
) -> Result<FiniteVector> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!(
            "eps must be positive, got {eps}"
        )));
    }
    if v.is_empty() {
        return Ok(FiniteVector::zero());
    }
    let supports: Option<Vec<Vec<usize>>> = v.iter().map(|(k, _)| op.column_support(k)).collect();
    if let Some(supports) = supports {
        // Oracle error per column is at most sqrt(|supp|)·2^-m.
        let weight: f64 = v
            .iter()
            .zip(&supports)
            .map(|((_, vk), s)| vk.norm() * ((s.len() + 1) as f64).sqrt())
            .sum();
        let m = if op.is_exact() {
            53
        } else {
            precision_for(eps / weight.max(1e-300))
        };
        let mut acc: Vec<(usize, Complex64)> = Vec::new();
        for (k, vk) in v.iter() {
            let column = shifted_column(op, c, k, m).expect("support checked above");
            acc.extend(column.into_iter().map(|(r, a)| (r, a * vk)));
        }
        return FiniteVector::new(acc);
    }

    let l1 = v.l1_norm();
    let coeff_gain = gain_bits(l1);
    let norm_gain = gain_bits(l1 * l1 * (1.0 + 2.0 * c.norm()));
    let image = ShiftedImage {
        op,
        v,
        c,
        coeff_gain,
        norm_gain,
    };
    truncate_vector(&image, eps, options)
}

fn gain_bits(factor: f64) -> u32 {
    if factor <= 1.0 {
        0
    } else {
        factor.log2().ceil() as u32 + 1
    }
}

/// Oracle view of a single column `A e_col`, used to discover unknown supports.
pub(crate) struct ColumnView<'a> {
    pub op: &'a dyn InfiniteOperator,
    pub col: usize,
    pub shift: Complex64,
}

impl EvaluableVector for ColumnView<'_> {
    fn coefficient(&self, index: usize, precision: u32) -> Complex64 {
        let mut a = self.op.entry(index, self.col, precision);
        if index == self.col {
            a -= self.shift;
        }
        a
    }

    fn norm_sq(&self, precision: u32) -> f64 {
        shifted_gram(
            self.op,
            self.shift,
            self.col,
            self.col,
            precision.saturating_add(2),
        )
        .re
    }
}

/// Column of `A - shift·I`, by known support or by adaptive row scanning to
/// accuracy `eps`. Returns the column and the certified l2 error of it.
pub(crate) fn resolve_column(
    op: &dyn InfiniteOperator,
    shift: Complex64,
    col: usize,
    eps: f64,
    options: &TruncationOptions,
) -> Result<(Column, f64)> {
    if let Some(column) = shifted_column(op, shift, col, 53) {
        let err = if op.is_exact() {
            0.0
        } else {
            ((column.len() + 1) as f64).sqrt() * pow2_neg(53)
        };
        return Ok((column, err));
    }
    let view = ColumnView { op, col, shift };
    let v = truncate_vector(&view, eps, options)?;
    Ok((v.entries().to_vec(), eps))
}

/// Dense `n×n` leading block `P_n A P_n` (for diagnostics and tests).
pub fn leading_block(op: &dyn InfiniteOperator, n: usize) -> Vec<Vec<Complex64>> {
    (1..=n)
        .map(|r| (1..=n).map(|c| op.entry(r, c, 53)).collect())
        .collect()
}
