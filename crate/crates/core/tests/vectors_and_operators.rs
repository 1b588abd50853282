use std::sync::Arc;

use certexp::operators::{
    apply_shifted, block_companion, graph_laplacian, leading_block, resolvent_norm_bound,
    BandedOperator, DiagonalOperator, ScaledOperator, SparseOperator,
};
use certexp::vector::{truncate_vector, vector_norm_sq, FnVector, TruncationOptions};
use certexp::{FiniteVector, InfiniteOperator, RangeRegion};
use num_complex::Complex64;
use proptest::prelude::*;

type C = Complex64;

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

fn complex() -> impl Strategy<Value = C> {
    (-3.0..3.0f64, -3.0..3.0f64).prop_map(|(a, b)| c(a, b))
}

fn sparse_vector() -> impl Strategy<Value = FiniteVector> {
    prop::collection::vec((1usize..40, complex()), 0..20)
        .prop_map(|entries| FiniteVector::new(entries).expect("1-based indices"))
}

/// Sum of squares in double-double arithmetic, as an independent reference.
fn accurate_norm_sq(v: &FiniteVector) -> f64 {
    let (mut hi, mut lo) = (0.0f64, 0.0f64);
    for (_, x) in v.iter() {
        for part in [x.re * x.re, x.im * x.im] {
            let s = hi + part;
            let bp = s - hi;
            lo += (hi - (s - bp)) + (part - bp);
            hi = s;
        }
    }
    hi + lo
}

fn gallery() -> Vec<(&'static str, Arc<dyn InfiniteOperator>)> {
    let band = |n: usize, s: f64| {
        (0..n)
            .map(|k| c(s * (k as f64 + 1.0).sin(), 0.3 * k as f64))
            .collect::<Vec<_>>()
    };
    let banded = BandedOperator::new(
        2,
        vec![(0, band(30, -2.0)), (1, band(29, 1.0)), (-2, band(28, 0.5))],
    )
    .unwrap();
    let sparse = SparseOperator::from_triplets(&[
        (1, 3, c(1.0, 2.0)),
        (7, 2, c(-0.5, 0.0)),
        (3, 3, c(4.0, 0.0)),
    ])
    .unwrap();
    let laplacian: Arc<dyn InfiniteOperator> =
        Arc::new(graph_laplacian(&[(1, 2), (2, 3), (3, 4), (4, 1), (2, 5)]).unwrap());
    let companion = block_companion(vec![
        Arc::new(DiagonalOperator::from_fn(|k| c(-(k as f64), 0.0), true)),
        Arc::new(DiagonalOperator::scalar(c(-0.5, 0.0))),
    ])
    .unwrap();
    vec![
        (
            "diagonal",
            Arc::new(DiagonalOperator::from_fn(
                |k| c(-(k as f64), k as f64 * 0.1),
                false,
            )),
        ),
        ("banded", Arc::new(banded)),
        ("sparse", Arc::new(sparse)),
        ("graph", laplacian.clone()),
        (
            "scaled",
            Arc::new(ScaledOperator::new(laplacian, c(0.0, 1.0))),
        ),
        ("companion", Arc::new(companion)),
    ]
}

fn dense_matvec(op: &dyn InfiniteOperator, v: &FiniteVector, shift: C, rows: usize) -> Vec<C> {
    let n = v.max_index();
    (1..=rows)
        .map(|r| {
            (1..=n)
                .map(|k| {
                    let mut a = op.entry(r, k, 53);
                    if r == k {
                        a -= shift;
                    }
                    a * v.get(k)
                })
                .sum()
        })
        .collect()
}

#[test]
fn gallery_oracles_are_exact() {
    for (name, op) in gallery() {
        assert!(op.is_exact(), "{name}");
        for r in 1..12 {
            for k in 1..12 {
                let a = op.entry(r, k, 1);
                assert_eq!(a, op.entry(r, k, 60), "{name} ({r},{k})");
                assert_eq!(op.gram(r, k, 1), op.gram(r, k, 60), "{name} gram ({r},{k})");
            }
        }
    }
}

#[test]
fn apply_shifted_matches_dense_matvec() {
    let shift = c(0.7, -0.2);
    for (name, op) in gallery() {
        for n in [1usize, 5, 17, 64] {
            let v = FiniteVector::from_dense(
                &(0..n)
                    .map(|k| c(1.0 / (k as f64 + 1.0), (k % 3) as f64))
                    .collect::<Vec<_>>(),
            );
            let eps = 1e-10;
            let got =
                apply_shifted(op.as_ref(), &v, shift, eps, &TruncationOptions::default()).unwrap();
            // Column supports reach at most a few indices (and one block) past n.
            let rows = 2 * n + 8;
            let oracle = FiniteVector::from_dense(&dense_matvec(op.as_ref(), &v, shift, rows));
            assert!(got.max_index() <= rows, "{name}");
            assert!(
                got.distance(&oracle) <= eps,
                "{name} n={n}: {}",
                got.distance(&oracle)
            );
        }
    }
}

#[test]
fn graph_laplacian_symmetric_with_zero_row_sums() {
    let edges = [
        (1, 2),
        (2, 3),
        (3, 1),
        (4, 5),
        (6, 7),
        (7, 8),
        (8, 9),
        (9, 6),
        (6, 8),
    ];
    let op = graph_laplacian(&edges).unwrap();
    let block = leading_block(&op, 12);
    for r in 0..12 {
        for k in 0..12 {
            assert_eq!(block[r][k], block[k][r]);
        }
        let sum: C = block[r].iter().sum();
        assert_eq!(sum, c(0.0, 0.0), "row {r}");
    }
}

#[test]
fn sector_scale_covariance_through_origin() {
    let regions = [
        RangeRegion::HalfPlane { max_re: 0.0 },
        RangeRegion::Sector {
            vertex: c(0.0, 0.0),
            half_angle: 0.3,
        },
        RangeRegion::Sector {
            vertex: c(0.0, 0.0),
            half_angle: 1.2,
        },
    ];
    for region in &regions {
        for k in 0..40 {
            let z = C::from_polar(0.5 + k as f64 * 0.3, -3.0 + 0.15 * k as f64);
            let Some(b) = resolvent_norm_bound(z, region) else {
                continue;
            };
            for s in [0.25, 2.0, 9.0] {
                let scaled = resolvent_norm_bound(z * s, region).unwrap();
                assert!(
                    (scaled - b / s).abs() <= 1e-13 * scaled,
                    "{region:?} z={z} s={s}"
                );
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn canonical_form_is_idempotent(v in sparse_vector()) {
        let entries = v.entries();
        prop_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        let again = FiniteVector::new(entries.to_vec()).unwrap();
        prop_assert_eq!(&again, &v);
    }

    #[test]
    fn norm_sq_matches_reference(v in sparse_vector()) {
        let reference = accurate_norm_sq(&v);
        let got = vector_norm_sq(&v);
        prop_assert!((got - reference).abs() <= 4.0 * f64::EPSILON * reference, "{} vs {}", got, reference);
    }

    #[test]
    fn truncation_of_geometric_vectors(ratio in 0.05..0.95f64, a in 0.1..5.0f64, eps in 1e-9..1e-1f64) {
        // x_j = a r^(j-1): ||x||² = a²/(1 - r²), tail beyond M is a² r^(2M)/(1 - r²).
        let x = FnVector::new(
            move |j: usize, _| c(a * ratio.powi(j as i32 - 1), 0.0),
            move |_| a * a / (1.0 - ratio * ratio),
        );
        let t = truncate_vector(&x, eps, &TruncationOptions::default()).unwrap();
        let m = t.max_index();
        let tail_sq = a * a * ratio.powi(2 * m as i32) / (1.0 - ratio * ratio);
        let coeff_sq: f64 = t.iter().map(|(j, v)| (v - c(a * ratio.powi(j as i32 - 1), 0.0)).norm_sqr()).sum();
        prop_assert!((tail_sq + coeff_sq).sqrt() <= eps, "M = {}", m);
    }
}
