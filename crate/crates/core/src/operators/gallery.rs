use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num_complex::Complex64;

use super::{sparse_dot, Column, InfiniteOperator, Structure};
use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

type DiagonalFn = dyn Fn(usize) -> Complex64 + Send + Sync;

enum Diagonal {
    /// `values[k-1]` for k <= len, `tail` beyond.
    Finite {
        values: Vec<Complex64>,
        tail: Complex64,
    },
    Function {
        f: Box<DiagonalFn>,
        real: bool,
    },
}

/// `A e_k = d_k e_k`.
pub struct DiagonalOperator {
    diagonal: Diagonal,
}

impl DiagonalOperator {
    /// Finite diagonal; entries beyond the list are zero.
    pub fn new(values: Vec<Complex64>) -> Self {
        Self {
            diagonal: Diagonal::Finite { values, tail: ZERO },
        }
    }

    pub fn from_real(values: &[f64]) -> Self {
        Self::new(values.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    /// `a·I` on all of l2(N).
    pub fn scalar(a: Complex64) -> Self {
        Self {
            diagonal: Diagonal::Finite {
                values: Vec::new(),
                tail: a,
            },
        }
    }

    /// Infinite diagonal `d_k = f(k)`; may be unbounded.
    pub fn from_fn(f: impl Fn(usize) -> Complex64 + Send + Sync + 'static, real: bool) -> Self {
        Self {
            diagonal: Diagonal::Function {
                f: Box::new(f),
                real,
            },
        }
    }

    pub fn value(&self, k: usize) -> Complex64 {
        match &self.diagonal {
            Diagonal::Finite { values, tail } => values.get(k - 1).copied().unwrap_or(*tail),
            Diagonal::Function { f, .. } => f(k),
        }
    }
}

impl InfiniteOperator for DiagonalOperator {
    fn entry(&self, row: usize, col: usize, _precision: u32) -> Complex64 {
        if row == col {
            self.value(col)
        } else {
            ZERO
        }
    }

    fn gram(&self, row: usize, col: usize, _precision: u32) -> Complex64 {
        if row == col {
            Complex64::new(self.value(col).norm_sqr(), 0.0)
        } else {
            ZERO
        }
    }

    fn structure(&self) -> Structure {
        Structure::Diagonal
    }

    fn column_support(&self, col: usize) -> Option<Vec<usize>> {
        Some(if self.value(col) == ZERO {
            vec![]
        } else {
            vec![col]
        })
    }

    fn is_exact(&self) -> bool {
        true
    }

    fn is_real(&self) -> bool {
        match &self.diagonal {
            Diagonal::Finite { values, tail } => {
                tail.im == 0.0 && values.iter().all(|v| v.im == 0.0)
            }
            Diagonal::Function { real, .. } => *real,
        }
    }
}

/// Banded operator stored by diagonals. The band with offset `o = row - col`
/// holds its entries in order along the diagonal: the entry at `(row, col)`
/// is `values[min(row, col) - 1]`; entries past the end of a list are zero.
pub struct BandedOperator {
    bandwidth: usize,
    bands: BTreeMap<isize, Vec<Complex64>>,
    real: bool,
}

impl BandedOperator {
    pub fn new(bandwidth: usize, bands: Vec<(isize, Vec<Complex64>)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (offset, values) in bands {
            if offset.unsigned_abs() > bandwidth {
                return Err(Error::InvalidInput(format!(
                    "band offset {offset} exceeds bandwidth {bandwidth}"
                )));
            }
            if map.insert(offset, values).is_some() {
                return Err(Error::InvalidInput(format!(
                    "band offset {offset} given twice"
                )));
            }
        }
        let real = map.values().flatten().all(|v: &Complex64| v.im == 0.0);
        Ok(Self {
            bandwidth,
            bands: map,
            real,
        })
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }
}

impl InfiniteOperator for BandedOperator {
    fn entry(&self, row: usize, col: usize, _precision: u32) -> Complex64 {
        let offset = row as isize - col as isize;
        self.bands
            .get(&offset)
            .and_then(|values| values.get(row.min(col) - 1).copied())
            .unwrap_or(ZERO)
    }

    fn structure(&self) -> Structure {
        Structure::Banded(self.bandwidth)
    }

    fn column_support(&self, col: usize) -> Option<Vec<usize>> {
        let lo = col.saturating_sub(self.bandwidth).max(1);
        Some((lo..=col + self.bandwidth).collect())
    }

    fn is_exact(&self) -> bool {
        true
    }

    fn is_real(&self) -> bool {
        self.real
    }
}

/// Operator with finitely many nonzero entries, stored by columns.
#[derive(Clone, Debug, Default)]
pub struct SparseOperator {
    columns: BTreeMap<usize, Column>,
    real: bool,
}

impl SparseOperator {
    /// Duplicate `(row, col)` pairs are summed.
    pub fn from_triplets(triplets: &[(usize, usize, Complex64)]) -> Result<Self> {
        let mut acc: BTreeMap<usize, BTreeMap<usize, Complex64>> = BTreeMap::new();
        for &(row, col, v) in triplets {
            if row == 0 || col == 0 {
                return Err(Error::InvalidInput("operator indices are 1-based".into()));
            }
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "non-finite entry at ({row}, {col})"
                )));
            }
            *acc.entry(col).or_default().entry(row).or_insert(ZERO) += v;
        }
        let columns: BTreeMap<usize, Column> = acc
            .into_iter()
            .map(|(col, rows)| {
                (
                    col,
                    rows.into_iter()
                        .filter(|(_, v)| *v != ZERO)
                        .collect::<Column>(),
                )
            })
            .filter(|(_, c)| !c.is_empty())
            .collect();
        let real = columns.values().flatten().all(|(_, v)| v.im == 0.0);
        Ok(Self { columns, real })
    }

    /// Largest row or column index carrying a nonzero entry.
    pub fn dimension(&self) -> usize {
        self.columns
            .iter()
            .map(|(&c, col)| c.max(col.last().map_or(0, |&(r, _)| r)))
            .max()
            .unwrap_or(0)
    }

    pub fn nnz(&self) -> usize {
        self.columns.values().map(Vec::len).sum()
    }
}

impl InfiniteOperator for SparseOperator {
    fn entry(&self, row: usize, col: usize, _precision: u32) -> Complex64 {
        self.columns
            .get(&col)
            .and_then(|c| {
                c.binary_search_by_key(&row, |&(r, _)| r)
                    .ok()
                    .map(|p| c[p].1)
            })
            .unwrap_or(ZERO)
    }

    fn gram(&self, row: usize, col: usize, _precision: u32) -> Complex64 {
        match (self.columns.get(&col), self.columns.get(&row)) {
            (Some(a), Some(b)) => sparse_dot(a, b),
            _ => ZERO,
        }
    }

    fn structure(&self) -> Structure {
        Structure::SparseColumns
    }

    fn column_support(&self, col: usize) -> Option<Vec<usize>> {
        Some(
            self.columns
                .get(&col)
                .map(|c| c.iter().map(|&(r, _)| r).collect())
                .unwrap_or_default(),
        )
    }

    fn column(&self, col: usize, _precision: u32) -> Option<Column> {
        Some(self.columns.get(&col).cloned().unwrap_or_default())
    }

    fn is_exact(&self) -> bool {
        true
    }

    fn is_real(&self) -> bool {
        self.real
    }
}

/// Graph Laplacian `[Δψ]_i = Σ_{i~j} (ψ_j - ψ_i)` of an undirected edge list.
///
/// Vertices are the 1-based indices appearing in `edges`; every other index
/// is an isolated vertex. Self-loops and repeated edges (in either
/// orientation) are rejected.
pub fn graph_laplacian(edges: &[(usize, usize)]) -> Result<SparseOperator> {
    let mut seen = BTreeSet::new();
    let mut triplets = Vec::with_capacity(4 * edges.len());
    let one = Complex64::new(1.0, 0.0);
    for &(i, j) in edges {
        if i == 0 || j == 0 {
            return Err(Error::InvalidInput("vertex indices are 1-based".into()));
        }
        if i == j {
            return Err(Error::InvalidInput(format!("self-loop at vertex {i}")));
        }
        if !seen.insert((i.min(j), i.max(j))) {
            return Err(Error::InvalidInput(format!("duplicate edge ({i}, {j})")));
        }
        triplets.extend([(i, j, one), (j, i, one), (i, i, -one), (j, j, -one)]);
    }
    SparseOperator::from_triplets(&triplets)
}

/// Edges of the `side × side` grid graph; vertex `(r, c)` (0-based) has index
/// `r·side + c + 1`.
pub fn grid_graph_edges(side: usize) -> Vec<(usize, usize)> {
    let id = |r: usize, c: usize| r * side + c + 1;
    let mut edges = Vec::new();
    for r in 0..side {
        for c in 0..side {
            if c + 1 < side {
                edges.push((id(r, c), id(r, c + 1)));
            }
            if r + 1 < side {
                edges.push((id(r, c), id(r + 1, c)));
            }
        }
    }
    edges
}

/// `factor · A`.
pub struct ScaledOperator {
    inner: Arc<dyn InfiniteOperator>,
    factor: Complex64,
}

impl ScaledOperator {
    pub fn new(inner: Arc<dyn InfiniteOperator>, factor: Complex64) -> Self {
        Self { inner, factor }
    }
}

impl InfiniteOperator for ScaledOperator {
    fn entry(&self, row: usize, col: usize, precision: u32) -> Complex64 {
        let gain = self.factor.norm().max(1.0).log2().ceil() as u32;
        self.factor * self.inner.entry(row, col, precision.saturating_add(gain))
    }

    fn gram(&self, row: usize, col: usize, precision: u32) -> Complex64 {
        let gain = self.factor.norm_sqr().max(1.0).log2().ceil() as u32;
        self.factor.norm_sqr() * self.inner.gram(row, col, precision.saturating_add(gain))
    }

    fn structure(&self) -> Structure {
        self.inner.structure()
    }

    fn column_support(&self, col: usize) -> Option<Vec<usize>> {
        self.inner.column_support(col)
    }

    fn is_exact(&self) -> bool {
        self.inner.is_exact()
    }

    fn is_real(&self) -> bool {
        self.factor.im == 0.0 && self.inner.is_real()
    }
}

/// First-order companion operator of `u^(N) + A_{N-1} u^(N-1) + ... + A_0 u = 0`:
/// identity blocks on the block superdiagonal, `-A_0 ... -A_{N-1}` in the last
/// block row.
///
/// Index map: component `k` (1-based) of block `b` (0-based) lives at global
/// index `N·(k-1) + b + 1`, so the block index varies fastest. Each block is
/// itself infinite, which rules out a block-major layout on l2(N); this
/// interleaving keeps a banded `A_b` banded.
pub struct CompanionOperator {
    blocks: Vec<Arc<dyn InfiniteOperator>>,
}

impl CompanionOperator {
    pub fn order(&self) -> usize {
        self.blocks.len()
    }

    /// Global index of component `k` (1-based) in block `b` (0-based).
    pub fn global_index(&self, k: usize, b: usize) -> usize {
        self.blocks.len() * (k - 1) + b + 1
    }

    /// Inverse of [`global_index`](Self::global_index): `(k, b)`.
    pub fn split_index(&self, g: usize) -> (usize, usize) {
        let n = self.blocks.len();
        ((g - 1) / n + 1, (g - 1) % n)
    }
}

pub fn block_companion(coefficients: Vec<Arc<dyn InfiniteOperator>>) -> Result<CompanionOperator> {
    if coefficients.is_empty() {
        return Err(Error::InvalidInput(
            "companion needs at least one coefficient".into(),
        ));
    }
    if coefficients.iter().any(|a| a.column_support(1).is_none()) {
        return Err(Error::InvalidInput(
            "companion coefficients must expose column supports".into(),
        ));
    }
    Ok(CompanionOperator {
        blocks: coefficients,
    })
}

impl InfiniteOperator for CompanionOperator {
    fn entry(&self, row: usize, col: usize, precision: u32) -> Complex64 {
        let n = self.blocks.len();
        let (kr, br) = self.split_index(row);
        let (kc, bc) = self.split_index(col);
        if br + 1 < n {
            if bc == br + 1 && kr == kc {
                Complex64::new(1.0, 0.0)
            } else {
                ZERO
            }
        } else {
            -self.blocks[bc].entry(kr, kc, precision)
        }
    }

    fn gram(&self, row: usize, col: usize, precision: u32) -> Complex64 {
        let (kr, br) = self.split_index(row);
        let (kc, bc) = self.split_index(col);
        let identity = if br == bc && kr == kc && bc >= 1 {
            1.0
        } else {
            0.0
        };
        let last = if br == bc {
            self.blocks[bc].gram(kr, kc, precision)
        } else {
            let a = self.blocks[bc]
                .column(kc, precision.saturating_add(8))
                .expect("checked at construction");
            let b = self.blocks[br]
                .column(kr, precision.saturating_add(8))
                .expect("checked at construction");
            sparse_dot(&a, &b)
        };
        last + identity
    }

    fn structure(&self) -> Structure {
        let n = self.blocks.len();
        let mut width = 0;
        for block in &self.blocks {
            match block.structure() {
                Structure::Diagonal => {}
                Structure::Banded(b) => width = width.max(b),
                _ => return Structure::SparseColumns,
            }
        }
        Structure::Banded(n * width + n - 1)
    }

    fn column_support(&self, col: usize) -> Option<Vec<usize>> {
        let n = self.blocks.len();
        let (kc, bc) = self.split_index(col);
        let mut rows: Vec<usize> = self.blocks[bc]
            .column_support(kc)?
            .into_iter()
            .map(|r| self.global_index(r, n - 1))
            .collect();
        if bc >= 1 {
            rows.push(self.global_index(kc, bc - 1));
        }
        rows.sort_unstable();
        rows.dedup();
        Some(rows)
    }

    fn is_exact(&self) -> bool {
        self.blocks.iter().all(|b| b.is_exact())
    }

    fn is_real(&self) -> bool {
        self.blocks.iter().all(|b| b.is_real())
    }
}
