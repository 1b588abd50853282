use certexp::operators::{leading_block, BandedOperator};
use certexp::resolvent::{
    adaptive_resolvent_solve, adaptive_resolvent_solve_with, ResolventOptions,
};
use certexp::Error;
use certexp::{FiniteVector, InfiniteOperator};
use num_complex::Complex64;
use proptest::prelude::*;

type C = Complex64;

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

/// Banded operator of bandwidth 2 with `n` nonzero leading rows and pseudo-random
/// entries, a point far enough from its numerical range and a right-hand side.
fn banded_case(
    (n, seed, angle, m): (usize, u64, f64, usize),
) -> (BandedOperator, usize, C, FiniteVector) {
    let mut state = seed | 1;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    let bands: Vec<(isize, Vec<C>)> = (-2isize..=2)
        .map(|o| {
            (
                o,
                (0..n - o.unsigned_abs())
                    .map(|_| c(next(), next()))
                    .collect(),
            )
        })
        .collect();
    let op = BandedOperator::new(2, bands).unwrap();
    // Every entry has modulus below sqrt(2), so ||A|| <= 5·sqrt(2) < 8.
    let z = C::from_polar(9.0, angle);
    let rhs = FiniteVector::from_dense(&(0..m).map(|_| c(next(), next())).collect::<Vec<_>>());
    (op, n, z, rhs)
}

fn case_params() -> impl Strategy<Value = (usize, u64, f64, usize)> {
    (
        3usize..25,
        any::<u64>(),
        0.0..std::f64::consts::TAU,
        1usize..6,
    )
}

/// `||(A - zI) r + rhs||` computed densely on rows `1..=rows`.
fn dense_residual(
    op: &dyn InfiniteOperator,
    z: C,
    r: &FiniteVector,
    rhs: &FiniteVector,
    rows: usize,
) -> f64 {
    let n = rows.max(r.max_index());
    let block = leading_block(op, n);
    (1..=n)
        .map(|i| {
            let mut acc = rhs.get(i) - z * r.get(i);
            for (k, v) in r.iter() {
                acc += block[i - 1][k - 1] * v;
            }
            acc.norm_sqr()
        })
        .sum::<f64>()
        .sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn certified_residual_is_sound(params in case_params()) {
        let (op, n, z, rhs) = banded_case(params);
        let solve = adaptive_resolvent_solve(&op, z, &rhs, 1e-10).unwrap();
        let dense = dense_residual(&op, z, &solve.solution, &rhs, n + solve.solution.max_index() + 2);
        prop_assert!(dense <= solve.residual_norm + 1e-15, "dense {} > certified {}", dense, solve.residual_norm);
        prop_assert!(solve.residual_norm <= 1e-10);
    }

    #[test]
    fn doubling_columns_never_increases_residual(params in case_params()) {
        let (op, _, z, rhs) = banded_case(params);
        let mut last = f64::INFINITY;
        for n in [8usize, 16, 32, 64] {
            let options = ResolventOptions { initial_cols: n, max_cols: n, ..ResolventOptions::default() };
            // An unreachable target forces the solve to stop at exactly n columns.
            let solve = match adaptive_resolvent_solve_with(&op, z, &rhs, f64::MIN_POSITIVE, &options) {
                Ok(s) => s,
                Err(Error::ResolventToleranceNotMet { best, .. }) => *best,
                Err(e) => panic!("{e}"),
            };
            prop_assert_eq!(solve.truncation_cols, n);
            let dense = dense_residual(&op, z, &solve.solution, &rhs, n + 4);
            prop_assert!(dense <= last + 1e-12, "n={}: {} after {}", n, dense, last);
            last = dense;
        }
    }

    #[test]
    fn least_squares_is_optimal_on_its_columns(params in case_params(), seed in any::<u64>()) {
        let (op, n, z, rhs) = banded_case(params);
        let solve = adaptive_resolvent_solve(&op, z, &rhs, 1e-12).unwrap();
        let cols = solve.truncation_cols;
        let rows = n.max(cols) + 4;
        let best = dense_residual(&op, z, &solve.solution, &rhs, rows);
        let mut state = seed | 1;
        for trial in 0..50 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let k = 1 + (state >> 33) as usize % cols;
            let size = 1e-6 * (1.0 + trial as f64);
            let perturbed = solve.solution.add_scaled(c(size, -size * 0.5), &FiniteVector::unit(k));
            let worse = dense_residual(&op, z, &perturbed, &rhs, rows);
            prop_assert!(worse >= best - 1e-14, "perturbation at {} lowered the residual", k);
        }
    }

    #[test]
    fn conjugation_symmetry_for_real_operators(n in 3usize..30, angle in 0.0..std::f64::consts::TAU, m in 1usize..5) {
        let bands: Vec<(isize, Vec<C>)> = (-1isize..=1)
            .map(|o| (o, (0..n - o.unsigned_abs()).map(|k| c(((k as f64) * 0.7 + o as f64).cos(), 0.0)).collect()))
            .collect();
        let op = BandedOperator::new(1, bands).unwrap();
        let z = C::from_polar(5.0, angle);
        let rhs = FiniteVector::from_dense(&(0..m).map(|k| c(1.0 / (k as f64 + 1.0), k as f64 * 0.3)).collect::<Vec<_>>());
        let a = adaptive_resolvent_solve(&op, z, &rhs, 1e-12).unwrap();
        let b = adaptive_resolvent_solve(&op, z.conj(), &rhs.conj(), 1e-12).unwrap();
        prop_assert!(a.solution.conj().distance(&b.solution) <= 1e-12);
    }
}
