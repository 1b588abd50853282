//! Finitely supported vectors in the canonical basis of l2(N), vectors known
//! only through coefficient/norm oracles, and certified truncation of the
//! latter to the former.
//!
//! Indices are 1-based throughout, matching the canonical basis e_1, e_2, ...

use std::fmt::Write as _;
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// A finitely supported vector: strictly increasing indices, nonzero values.
#[derive(Clone, Debug, Default)]
pub struct FiniteVector {
    entries: Vec<(usize, Complex64)>,
    norm_sq_cache: OnceLock<f64>,
}

impl PartialEq for FiniteVector {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl FiniteVector {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Builds the canonical form: sorted by index, duplicates summed, exact
    /// zeros dropped. Index 0 is rejected.
    pub fn new(mut entries: Vec<(usize, Complex64)>) -> Result<Self> {
        if entries.iter().any(|&(j, _)| j == 0) {
            return Err(Error::InvalidInput("vector indices are 1-based".into()));
        }
        if entries
            .iter()
            .any(|(_, v)| !v.re.is_finite() || !v.im.is_finite())
        {
            return Err(Error::InvalidInput("vector entries must be finite".into()));
        }
        entries.sort_by_key(|&(j, _)| j);
        let mut out: Vec<(usize, Complex64)> = Vec::with_capacity(entries.len());
        for (j, v) in entries {
            match out.last_mut() {
                Some((k, w)) if *k == j => *w += v,
                _ => out.push((j, v)),
            }
        }
        out.retain(|(_, v)| *v != Complex64::new(0.0, 0.0));
        Ok(Self::from_canonical(out))
    }

    /// Caller guarantees canonical form.
    pub(crate) fn from_canonical(entries: Vec<(usize, Complex64)>) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        debug_assert!(entries
            .iter()
            .all(|&(j, v)| j > 0 && v != Complex64::new(0.0, 0.0)));
        Self {
            entries,
            norm_sq_cache: OnceLock::new(),
        }
    }

    /// `values[i]` becomes the coefficient of e_{i+1}.
    pub fn from_dense(values: &[Complex64]) -> Self {
        let entries = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != Complex64::new(0.0, 0.0))
            .map(|(i, v)| (i + 1, *v))
            .collect();
        Self::from_canonical(entries)
    }

    pub fn from_real(values: &[f64]) -> Self {
        let c: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::from_dense(&c)
    }

    pub fn unit(index: usize) -> Self {
        assert!(index > 0, "basis indices are 1-based");
        Self::from_canonical(vec![(index, Complex64::new(1.0, 0.0))])
    }

    pub fn entries(&self) -> &[(usize, Complex64)] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest index in the support, 0 for the zero vector.
    pub fn max_index(&self) -> usize {
        self.entries.last().map_or(0, |&(j, _)| j)
    }

    pub fn get(&self, index: usize) -> Complex64 {
        match self.entries.binary_search_by_key(&index, |&(j, _)| j) {
            Ok(p) => self.entries[p].1,
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn norm_sq(&self) -> f64 {
        *self.norm_sq_cache.get_or_init(|| vector_norm_sq(self))
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn l1_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|(_, v)| v.norm())
            .collect::<CompensatedSum>()
            .value()
    }

    pub fn is_real(&self) -> bool {
        self.entries.iter().all(|(_, v)| v.im == 0.0)
    }

    pub fn scale(&self, s: Complex64) -> Self {
        if s == Complex64::new(0.0, 0.0) {
            return Self::zero();
        }
        let entries = self
            .entries
            .iter()
            .map(|&(j, v)| (j, v * s))
            .filter(|(_, v)| *v != Complex64::new(0.0, 0.0))
            .collect();
        Self::from_canonical(entries)
    }

    pub fn conj(&self) -> Self {
        Self::from_canonical(self.entries.iter().map(|&(j, v)| (j, v.conj())).collect())
    }

    /// `self + s * other`, merged in index order.
    pub fn add_scaled(&self, s: Complex64, other: &FiniteVector) -> Self {
        let (a, b) = (&self.entries, &other.entries);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut k) = (0, 0);
        while i < a.len() || k < b.len() {
            let next = match (a.get(i), b.get(k)) {
                (Some(&(ja, va)), Some(&(jb, vb))) if ja == jb => {
                    i += 1;
                    k += 1;
                    (ja, va + s * vb)
                }
                (Some(&(ja, va)), Some(&(jb, _))) if ja < jb => {
                    i += 1;
                    (ja, va)
                }
                (Some(&(ja, va)), None) => {
                    i += 1;
                    (ja, va)
                }
                (_, Some(&(jb, vb))) => {
                    k += 1;
                    (jb, s * vb)
                }
                (None, None) => unreachable!(),
            };
            if next.1 != Complex64::new(0.0, 0.0) {
                out.push(next);
            }
        }
        Self::from_canonical(out)
    }

    /// l2 distance to `other`.
    pub fn distance(&self, other: &FiniteVector) -> f64 {
        self.add_scaled(Complex64::new(-1.0, 0.0), other).norm()
    }

    /// Dense copy of the leading `n` coefficients.
    pub fn to_dense(&self, n: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for &(j, v) in &self.entries {
            if j <= n {
                out[j - 1] = v;
            }
        }
        out
    }

    /// Sum of entries (total mass for real nonnegative data).
    pub fn sum(&self) -> Complex64 {
        let re: CompensatedSum = self.entries.iter().map(|(_, v)| v.re).collect();
        let im: CompensatedSum = self.entries.iter().map(|(_, v)| v.im).collect();
        Complex64::new(re.value(), im.value())
    }
}

impl Serialize for FiniteVector {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = serializer.serialize_seq(Some(self.entries.len()))?;
        for &(j, v) in &self.entries {
            seq.serialize_element(&(j, v.re, v.im))?;
        }
        seq.end()
    }
}

/// Σ|v_j|² in ascending index order with compensated summation.
pub fn vector_norm_sq(v: &FiniteVector) -> f64 {
    v.entries
        .iter()
        .map(|(_, x)| x.norm_sqr())
        .collect::<CompensatedSum>()
        .value()
}

/// A vector of l2(N) available only through oracles:
/// `|coefficient(j, m) - <x, e_j>| <= 2^-m` and `|norm_sq(m) - <x, x>| <= 2^-m`.
pub trait EvaluableVector: Sync {
    fn coefficient(&self, index: usize, precision: u32) -> Complex64;

    fn norm_sq(&self, precision: u32) -> f64;

    /// An index beyond which every coefficient is known to vanish.
    fn support_bound(&self) -> Option<usize> {
        None
    }
}

impl EvaluableVector for FiniteVector {
    fn coefficient(&self, index: usize, _precision: u32) -> Complex64 {
        self.get(index)
    }

    fn norm_sq(&self, _precision: u32) -> f64 {
        FiniteVector::norm_sq(self)
    }

    fn support_bound(&self) -> Option<usize> {
        Some(self.max_index())
    }
}

/// Closure-backed [`EvaluableVector`].
pub struct FnVector<C, N> {
    coefficient: C,
    norm_sq: N,
}

impl<C, N> FnVector<C, N>
where
    C: Fn(usize, u32) -> Complex64 + Sync,
    N: Fn(u32) -> f64 + Sync,
{
    pub fn new(coefficient: C, norm_sq: N) -> Self {
        Self {
            coefficient,
            norm_sq,
        }
    }
}

impl<C, N> EvaluableVector for FnVector<C, N>
where
    C: Fn(usize, u32) -> Complex64 + Sync,
    N: Fn(u32) -> f64 + Sync,
{
    fn coefficient(&self, index: usize, precision: u32) -> Complex64 {
        (self.coefficient)(index, precision)
    }

    fn norm_sq(&self, precision: u32) -> f64 {
        (self.norm_sq)(precision)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TruncationOptions {
    pub index_ceiling: usize,
}

pub const DEFAULT_INDEX_CEILING: usize = 1 << 26;

impl Default for TruncationOptions {
    fn default() -> Self {
        Self {
            index_ceiling: DEFAULT_INDEX_CEILING,
        }
    }
}

pub(crate) fn pow2_neg(m: u32) -> f64 {
    (-(m as f64)).exp2()
}

// Smallest m with `2^-m <= bound`, clamped to the range oracles can use.
pub(crate) fn precision_for(bound: f64) -> u32 {
    if bound <= 0.0 || !bound.is_finite() {
        return 1000;
    }
    (-bound.log2()).ceil().clamp(1.0, 1000.0) as u32
}

/// Computes a finitely supported `x_eps` with `||x - x_eps|| <= eps`.
///
/// The support size M grows until the certified tail `<x,x> - Σ_{j<=M} |x_j|^2`
/// drops below `eps²/2`; coefficients are requested at a precision `m` with
/// `M·4^-m <= eps²/2`, re-requested whenever M outgrows the precision.
pub fn truncate_vector<V>(x: &V, eps: f64, options: &TruncationOptions) -> Result<FiniteVector>
where
    V: EvaluableVector + ?Sized,
{
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidInput(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let eps_sq = eps * eps;

    if let Some(n) = x.support_bound() {
        // Zero tail: only coefficient error remains, n·4^-m <= eps².
        let m = precision_for((eps_sq / n.max(1) as f64).sqrt());
        let entries = (1..=n)
            .map(|j| (j, x.coefficient(j, m)))
            .filter(|(_, v)| *v != Complex64::new(0.0, 0.0))
            .collect();
        return Ok(FiniteVector::from_canonical(entries));
    }

    let m_norm = precision_for(eps_sq / 8.0);
    let norm_upper = x.norm_sq(m_norm) + pow2_neg(m_norm);

    let mut cap = 64usize;
    let mut m = coefficient_precision(cap, eps_sq, norm_upper);
    let mut coeffs: Vec<Complex64> = Vec::new();
    let mut lower = CompensatedSum::new();
    let mut slack = pow2_neg(m);
    let certified = |lower: &CompensatedSum| norm_upper - lower.value() <= eps_sq / 2.0;
    let mut done = certified(&lower);
    while !done {
        let j = coeffs.len() + 1;
        if j > options.index_ceiling {
            return Err(Error::CeilingExceeded {
                ceiling: options.index_ceiling,
                detail: format!(
                    "vector truncation did not certify a tail below {:e} (norm oracle {:e}, \
                     accumulated {:e}); the coefficient or norm oracle likely violates its contract",
                    eps_sq / 2.0,
                    norm_upper,
                    lower.value()
                ),
            });
        }
        if j > cap {
            cap = cap.saturating_mul(2);
            let m_new = coefficient_precision(cap, eps_sq, norm_upper);
            if m_new != m {
                m = m_new;
                slack = pow2_neg(m);
                lower = CompensatedSum::new();
                for (i, c) in coeffs.iter_mut().enumerate() {
                    *c = x.coefficient(i + 1, m);
                    lower.add((c.norm() - slack).max(0.0).powi(2));
                }
            }
        }
        let c = x.coefficient(j, m);
        lower.add((c.norm() - slack).max(0.0).powi(2));
        coeffs.push(c);
        done = certified(&lower);
    }

    let entries = coeffs
        .into_iter()
        .enumerate()
        .filter(|(_, v)| *v != Complex64::new(0.0, 0.0))
        .map(|(i, v)| (i + 1, v))
        .collect();
    Ok(FiniteVector::from_canonical(entries))
}

// cap·4^-m <= eps²/2, and the lower-bound slack 2·2^-m·sqrt(cap·<x,x>) stays
// below eps²/8 so it cannot stall termination.
fn coefficient_precision(cap: usize, eps_sq: f64, norm_upper: f64) -> u32 {
    let by_budget = (eps_sq / (2.0 * cap as f64)).sqrt();
    let by_slack = eps_sq / (16.0 * (cap as f64 * norm_upper.max(f64::MIN_POSITIVE)).sqrt());
    precision_for(by_budget.min(by_slack))
}

/// A total error allowance and its labelled parts.
#[derive(Clone, Debug, Serialize)]
pub struct ErrorBudget {
    pub total: f64,
    pub splits: Vec<(String, f64)>,
}

impl ErrorBudget {
    pub fn new(total: f64) -> Result<Self> {
        if !(total > 0.0) {
            return Err(Error::InvalidInput(format!(
                "budget must be positive, got {total}"
            )));
        }
        Ok(Self {
            total,
            splits: Vec::new(),
        })
    }

    pub fn allocate(&mut self, label: &str, amount: f64) -> Result<f64> {
        if !(amount > 0.0) {
            return Err(Error::InvalidInput(format!(
                "split {label} must be positive"
            )));
        }
        if self.allocated() + amount > self.total * (1.0 + 4.0 * f64::EPSILON) {
            return Err(Error::InvalidConfiguration(format!(
                "split {label} = {amount:e} overdraws budget {:e} (already allocated {:e})",
                self.total,
                self.allocated()
            )));
        }
        self.splits.push((label.to_owned(), amount));
        Ok(amount)
    }

    pub fn allocated(&self) -> f64 {
        self.splits
            .iter()
            .map(|(_, a)| *a)
            .collect::<CompensatedSum>()
            .value()
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.splits
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, a)| *a)
    }
}

/// Parses the `index re im` line format; blank lines and `#` comments are skipped.
pub fn parse_vector(text: &str) -> Result<FiniteVector> {
    let mut entries = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Parse(format!(
                "line {}: expected `index re im`, got {raw:?}",
                lineno + 1
            )));
        }
        let bad = |what: &str| Error::Parse(format!("line {}: bad {what} in {raw:?}", lineno + 1));
        let index: usize = fields[0].parse().map_err(|_| bad("index"))?;
        if index == 0 {
            return Err(bad("index (indices are 1-based)"));
        }
        let re: f64 = fields[1].parse().map_err(|_| bad("real part"))?;
        let im: f64 = fields[2].parse().map_err(|_| bad("imaginary part"))?;
        if !re.is_finite() || !im.is_finite() {
            return Err(bad("non-finite value"));
        }
        entries.push((index, Complex64::new(re, im)));
    }
    FiniteVector::new(entries)
}

/// Shortest decimal that parses back to `x` (exponent form for very large
/// or small magnitudes).
pub fn format_real(x: f64) -> String {
    ryu::Buffer::new().format(x).to_owned()
}

/// Writes one `index re im` line per stored entry.
pub fn format_vector(v: &FiniteVector) -> String {
    let mut out = String::new();
    for (j, x) in v.iter() {
        writeln!(out, "{j} {} {}", format_real(x.re), format_real(x.im))
            .expect("writing to a String");
    }
    out
}
