//! Householder QR of a sparse rectangular system, storing each column over
//! the contiguous row range it touches (its envelope). Banded systems keep
//! envelopes of width proportional to the bandwidth, so the factorization
//! costs O(n·b²).

use num_complex::Complex64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Dense values over local rows `lo..lo + data.len()`.
#[derive(Clone, Debug, Default)]
struct Span {
    lo: usize,
    data: Vec<Complex64>,
}

impl Span {
    fn hi(&self) -> usize {
        self.lo + self.data.len() - 1
    }

    fn widen(&mut self, lo: usize, hi: usize) {
        if self.data.is_empty() {
            self.lo = lo;
            self.data = vec![ZERO; hi - lo + 1];
            return;
        }
        let new_lo = lo.min(self.lo);
        let new_hi = hi.max(self.hi());
        if new_lo == self.lo && new_hi == self.hi() {
            return;
        }
        let mut data = vec![ZERO; new_hi - new_lo + 1];
        let off = self.lo - new_lo;
        data[off..off + self.data.len()].copy_from_slice(&self.data);
        self.lo = new_lo;
        self.data = data;
    }
}

struct Reflector {
    /// Householder vector over local rows `pivot..pivot + v.len()`.
    v: Vec<Complex64>,
    /// `2 / (v^H v)`, zero for the identity.
    beta: f64,
}

impl Reflector {
    fn end(&self, pivot: usize) -> usize {
        pivot + self.v.len() - 1
    }

    /// `y ← (I - β v v^H) y` on `y` stored from local row `pivot`.
    fn apply(&self, y: &mut [Complex64]) {
        if self.beta == 0.0 {
            return;
        }
        let mut dot = ZERO;
        for (v, y) in self.v.iter().zip(y.iter()) {
            dot += v.conj() * y;
        }
        let s = dot * self.beta;
        for (v, y) in self.v.iter().zip(y.iter_mut()) {
            *y -= v * s;
        }
    }
}

/// Least-squares solve of `min ||T y - x||` where `T` has `n` columns given
/// sparsely over local rows `0..rows`. Columns must be sorted by row.
///
/// Returns `y` and the least-squares residual norm as seen by the
/// factorization (an estimate; certificates are computed separately).
pub(crate) fn least_squares(
    rows: usize,
    columns: &[Vec<(usize, Complex64)>],
    x: &[Complex64],
) -> (Vec<Complex64>, f64) {
    let n = columns.len();
    debug_assert!(rows >= n);
    let mut reflectors: Vec<Reflector> = Vec::with_capacity(n);
    // Prefix maximum of reflector ends, for skipping non-overlapping ones.
    let mut prefix_end: Vec<usize> = Vec::with_capacity(n);
    let mut r_cols: Vec<Span> = Vec::with_capacity(n);
    let mut diag_max: f64 = 0.0;

    for (k, column) in columns.iter().enumerate() {
        let mut span = Span::default();
        let (lo, hi) = match (column.first(), column.last()) {
            (Some(a), Some(b)) => (a.0.min(k), b.0.max(k)),
            _ => (k, k),
        };
        span.widen(lo, hi);
        for &(r, v) in column {
            span.data[r - span.lo] = v;
        }

        let start = prefix_end.partition_point(|&e| e < span.lo);
        for (j, refl) in reflectors.iter().enumerate().skip(start) {
            let end = refl.end(j);
            if j > span.hi() {
                break;
            }
            if end < span.lo {
                continue;
            }
            span.widen(j, end);
            let off = j - span.lo;
            refl.apply(&mut span.data[off..off + refl.v.len()]);
        }

        // Reflector zeroing rows below k.
        let off = k - span.lo;
        let tail = &span.data[off..];
        let norm = tail.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let x0 = tail[0];
        let (refl, alpha) = if norm == 0.0 {
            (
                Reflector {
                    v: vec![ZERO],
                    beta: 0.0,
                },
                ZERO,
            )
        } else {
            let phase = if x0 == ZERO {
                Complex64::new(1.0, 0.0)
            } else {
                x0 / x0.norm()
            };
            let alpha = -phase * norm;
            let mut v = tail.to_vec();
            v[0] -= alpha;
            let vv: f64 = v.iter().map(|c| c.norm_sqr()).sum();
            let beta = if vv == 0.0 { 0.0 } else { 2.0 / vv };
            (Reflector { v, beta }, alpha)
        };
        diag_max = diag_max.max(alpha.norm());
        span.data.truncate(off + 1);
        span.data[off] = alpha;
        r_cols.push(span);

        let end = refl.end(k);
        prefix_end.push(prefix_end.last().map_or(end, |&p: &usize| p.max(end)));
        reflectors.push(refl);
    }

    let mut c = x.to_vec();
    c.resize(rows.max(x.len()), ZERO);
    for (j, refl) in reflectors.iter().enumerate() {
        let len = refl.v.len();
        refl.apply(&mut c[j..j + len]);
    }
    let mut ls_residual_sq = c[n..].iter().map(|v| v.norm_sqr()).sum::<f64>();

    // Column-oriented back substitution; numerically zero pivots drop the
    // corresponding unknown (rank-deficient columns).
    let tiny = diag_max * 1e-14;
    let mut y = c[..n].to_vec();
    for k in (0..n).rev() {
        let span = &r_cols[k];
        let pivot = span.data[k - span.lo];
        if pivot.norm() <= tiny {
            ls_residual_sq += y[k].norm_sqr();
            y[k] = ZERO;
            continue;
        }
        y[k] /= pivot;
        let yk = y[k];
        for (i, r) in span.data[..k - span.lo].iter().enumerate() {
            y[span.lo + i] -= r * yk;
        }
    }
    (y, ls_residual_sq.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn dense_columns(a: &DMatrix<Complex64>) -> Vec<Vec<(usize, Complex64)>> {
        (0..a.ncols())
            .map(|k| {
                (0..a.nrows())
                    .filter(|&r| a[(r, k)] != ZERO)
                    .map(|r| (r, a[(r, k)]))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn square_system_matches_lu() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 12;
        let a = DMatrix::from_fn(n, n, |r, c| {
            if (r as isize - c as isize).abs() <= 2 {
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                    + if r == c {
                        Complex64::new(4.0, 0.0)
                    } else {
                        ZERO
                    }
            } else {
                ZERO
            }
        });
        let x: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let (y, res) = least_squares(n, &dense_columns(&a), &x);
        let oracle = a
            .clone()
            .lu()
            .solve(&nalgebra::DVector::from_vec(x))
            .unwrap();
        for i in 0..n {
            assert!((y[i] - oracle[i]).norm() < 1e-12);
        }
        assert!(res < 1e-12);
    }

    #[test]
    fn overdetermined_matches_normal_equations() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let (m, n) = (15, 9);
        let a = DMatrix::from_fn(m, n, |r, c| {
            if r >= c && r <= c + 3 {
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            } else {
                ZERO
            }
        });
        let x: Vec<Complex64> = (0..m)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), 0.0))
            .collect();
        let (y, res) = least_squares(m, &dense_columns(&a), &x);
        let ah = a.adjoint();
        let xv = nalgebra::DVector::from_vec(x.clone());
        let oracle = (&ah * &a).lu().solve(&(&ah * &xv)).unwrap();
        for i in 0..n {
            assert!(
                (y[i] - oracle[i]).norm() < 1e-10,
                "{} vs {}",
                y[i],
                oracle[i]
            );
        }
        let yv = nalgebra::DVector::from_vec(y);
        let direct = (&a * yv - xv).norm();
        assert!((direct - res).abs() < 1e-12);
    }

    #[test]
    fn zero_column_is_dropped() {
        let columns = vec![vec![(0, Complex64::new(2.0, 0.0))], vec![]];
        let x = vec![Complex64::new(4.0, 0.0), Complex64::new(1.0, 0.0)];
        let (y, res) = least_squares(2, &columns, &x);
        assert_eq!(y, vec![Complex64::new(2.0, 0.0), ZERO]);
        assert!((res - 1.0).abs() < 1e-15, "{res}");
    }
}
