//! Inversion of generalized Laplace transforms: Caputo fractional evolution
//! `D_t^ι u = A u`, whose transform replaces `(A - zI)^{-1}` by the pencil
//! `(A z^{1-ι} - zI)^{-1}`.

use std::f64::consts::{FRAC_PI_2, PI};

use statrs::function::gamma::ln_gamma;

use crate::contour::{contour_evolve, AnalyticConfig, Pencil};
use crate::error::{Error, Result};
use crate::evolution::EvolutionResult;
use crate::operators::{GeneratorBounds, InfiniteOperator};
use crate::vector::{CompensatedSum, FiniteVector};

/// Solves `D_t^ι u = A u`, `u(0) = u0` on the hyperbolic contour.
///
/// Each node solves `(A - z_j^ι I) r_j = -u0` and sets `R_j = z_j^{ι-1} r_j`,
/// which has the same residual as the pencil equation. The sector angle in
/// `bounds` must describe the analyticity region of the pencil, and the
/// resolvent-norm information describes `A` itself (it is evaluated at
/// `z_j^ι`). For `ι = 1` this is exactly [`evolve_analytic`](crate::contour::evolve_analytic).
pub fn evolve_fractional(
    op: &dyn InfiniteOperator,
    bounds: &GeneratorBounds,
    u0: &FiniteVector,
    times: &[f64],
    iota: f64,
    config: &AnalyticConfig,
) -> Result<EvolutionResult> {
    if !(iota > 0.0 && iota <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "iota must lie in (0, 1], got {iota}"
        )));
    }
    contour_evolve(op, bounds, u0, times, config, Pencil::Fractional(iota))
}

/// Below this order negative arguments go through the spectral integral.
const SERIES_MIN_ORDER: f64 = 0.9;

/// Largest `|x|` accepted by [`mittag_leffler`].
pub const MITTAG_LEFFLER_MAX_ARG: f64 = 5.0;

/// `E_ι(x)` for `|x| <= 5`.
///
/// Nonnegative `x` and orders near one use the power series `Σ_k x^k/Γ(ιk+1)`,
/// cut once the remaining tail is provably below `1e-13`: the term ratio
/// `|x| Γ(ιk+1)/Γ(ιk+ι+1)` decreases in `k` (log-convexity of Γ), so the tail
/// after a term with ratio `r < 1` is at most `term·r/(1-r)`. For negative `x`
/// and smaller orders the alternating series cancels catastrophically (terms
/// reach `1e13` at `ι = 0.3`, `x = -3`), so the positive spectral integral
/// [`mittag_leffler_negative`] is used instead.
pub fn mittag_leffler(iota: f64, x: f64) -> Result<f64> {
    if !(iota > 0.0 && iota <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "iota must lie in (0, 1], got {iota}"
        )));
    }
    if !(x.abs() <= MITTAG_LEFFLER_MAX_ARG) {
        return Err(Error::OutOfDomain(format!(
            "mittag_leffler needs |x| <= {MITTAG_LEFFLER_MAX_ARG}, got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x < 0.0 && iota < SERIES_MIN_ORDER {
        return Ok(mittag_leffler_negative(iota, -x));
    }
    let log_x = x.abs().ln();
    let mut sum = CompensatedSum::new();
    for k in 0usize.. {
        let kf = k as f64;
        let log_term = kf * log_x - ln_gamma(iota * kf + 1.0);
        let term = log_term.exp();
        sum.add(if x < 0.0 && k % 2 == 1 { -term } else { term });
        let ratio = (log_x + ln_gamma(iota * kf + 1.0) - ln_gamma(iota * kf + iota + 1.0)).exp();
        if ratio < 1.0 && term * ratio / (1.0 - ratio) <= 1e-13 {
            break;
        }
    }
    Ok(sum.value())
}

/// `E_ι(-x)` for `0 < ι < 1`, `x > 0`, from the complete monotonicity of
/// `E_ι(-s^ι)`: with `s = x^{1/ι}`,
/// `E_ι(-x) = ∫_0^∞ e^{-rs} sin(ιπ) r^{ι-1} / (π(r^{2ι} + 2r^ι cos ιπ + 1)) dr`.
/// After `r = e^y` the integrand is positive, decays like `e^{ιy}` to the
/// left and double-exponentially to the right, and is analytic in the strip
/// `|Im y| < min(π/2, (1-ι)π/ι)`, so the trapezoidal rule converges
/// geometrically in the strip width over the step.
fn mittag_leffler_negative(iota: f64, x: f64) -> f64 {
    let s = x.powf(1.0 / iota);
    let (sin, cos) = (iota * PI).sin_cos();
    let width = 0.9 * f64::min(FRAC_PI_2, (1.0 - iota) * PI / iota);
    // Discretization error is of order e^{-2π·width/h} = e^{-42}.
    let h = 2.0 * PI * width / 42.0;
    // The denominator is at least 1, or sin² ιπ when cos ιπ < 0, so the
    // left tail below y0 is at most e^{ι y0}/(ιπ sin ιπ · floor) <= 1e-18.
    let floor = if cos < 0.0 { sin * sin } else { 1.0 };
    let y0 = (1e-18 * iota * PI * floor / sin).ln() / iota;
    // Right of y1 the factor e^{-s e^y} is below e^{-45}.
    let y1 = (45.0 / s).ln();
    let integrand = |y: f64| {
        let e = (iota * y).exp();
        sin / PI * e / (e * e + 2.0 * e * cos + 1.0) * (-s * y.exp()).exp()
    };
    let first = (y0 / h).floor() as i64;
    let last = (y1 / h).ceil() as i64;
    let mut sum = CompensatedSum::new();
    for k in first..=last {
        sum.add(integrand(k as f64 * h));
    }
    h * sum.value()
}
