use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::Serialize;

use super::lambert::lambert_w;
use crate::error::{Error, Result};

pub const DEFAULT_BETA: f64 = 3.0;

/// Parameters of the hyperbolic contour `γ(x) = μ(1 + sin(ix - α))` and its
/// trapezoidal discretization `x_j = jh`, `|j| <= N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ContourParams {
    pub mu: f64,
    pub alpha: f64,
    pub h: f64,
    pub n: usize,
    pub beta: f64,
    pub t0: f64,
    pub t1: f64,
    pub lambda_t: f64,
    pub delta: f64,
}

impl ContourParams {
    pub fn gamma(&self, x: f64) -> Complex64 {
        Complex64::new(
            self.mu * (1.0 - self.alpha.sin() * x.cosh()),
            self.mu * self.alpha.cos() * x.sinh(),
        )
    }

    /// `γ'(x) = iμ cos(ix - α)`.
    pub fn gamma_prime(&self, x: f64) -> Complex64 {
        Complex64::new(
            -self.mu * self.alpha.sin() * x.sinh(),
            self.mu * self.alpha.cos() * x.cosh(),
        )
    }
}

/// Chooses μ, then h, then α for `N` nodes per half-contour on `[t0, t1]`.
///
/// μ depends only on (δ, β, t1) and h only on (N, Λ_t, β, δ), so α can be
/// formed last. `N = 0` is the single-node rule; its h is taken from `N = 1`.
pub fn select_contour(delta: f64, beta: f64, t0: f64, t1: f64, n: usize) -> Result<ContourParams> {
    if !(0.0..FRAC_PI_2).contains(&delta) {
        return Err(Error::InvalidConfiguration(format!(
            "delta must lie in [0, π/2), got {delta}"
        )));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidConfiguration(format!(
            "beta must be positive, got {beta}"
        )));
    }
    if !(t0 > 0.0) || !(t1 >= t0) || !t1.is_finite() {
        return Err(Error::InvalidConfiguration(format!(
            "need 0 < t0 <= t1 < ∞, got t0 = {t0}, t1 = {t1}"
        )));
    }
    let q = (PI - 2.0 * delta) / 4.0;
    let mu = beta / (t1 * (1.0 - q.sin()));
    let lambda_t = t1 / t0;
    let nn = n.max(1) as f64;
    let arg = lambda_t * nn * PI * (PI - 2.0 * delta) * (1.0 - q.sin()) / (beta * q.sin());
    let h = lambert_w(arg)? / nn;
    let alpha = (h * mu * t1 + PI * PI - 2.0 * PI * delta) / (4.0 * PI);
    if alpha >= FRAC_PI_2 - delta {
        return Err(Error::InvalidConfiguration(format!(
            "alpha = {alpha} violates alpha < π/2 - delta = {} (N = {n}, beta = {beta}, delta = {delta})",
            FRAC_PI_2 - delta
        )));
    }
    Ok(ContourParams {
        mu,
        alpha,
        h,
        n,
        beta,
        t0,
        t1,
        lambda_t,
        delta,
    })
}

/// Nodes `z_j = γ(jh)` and weights `w_j = hγ'(jh)/(2πi)` for `j = -N..=N`,
/// stored in ascending `j`.
#[derive(Clone, Debug, Serialize)]
pub struct QuadratureRule {
    pub nodes: Vec<Complex64>,
    pub weights: Vec<Complex64>,
    pub conjugate_symmetric: bool,
}

impl QuadratureRule {
    pub fn n(&self) -> usize {
        self.nodes.len() / 2
    }

    /// Position of index `j` in the node arrays.
    pub fn position(&self, j: i64) -> usize {
        (j + self.n() as i64) as usize
    }

    /// `Σ_j e^{z_j t} w_j f(z_j)` in ascending `j`.
    pub fn apply<F: Fn(Complex64) -> Complex64>(&self, t: f64, f: F) -> Complex64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| (z * t).exp() * w * f(z))
            .fold(Complex64::new(0.0, 0.0), |acc, x| acc + x)
    }
}

pub fn quadrature_rule(params: &ContourParams) -> QuadratureRule {
    let n = params.n as i64;
    // h/(2πi) = -i·h/(2π)
    let factor = Complex64::new(0.0, -params.h / (2.0 * PI));
    let (nodes, weights) = (-n..=n)
        .map(|j| {
            let x = j as f64 * params.h;
            (params.gamma(x), params.gamma_prime(x) * factor)
        })
        .unzip();
    QuadratureRule {
        nodes,
        weights,
        conjugate_symmetric: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mu_for_default_beta() {
        let p = select_contour(0.0, 3.0, 0.5, 1.0, 10).unwrap();
        assert!((p.mu - 10.242640687119282).abs() < 1e-12);
    }

    #[test]
    fn equal_times() {
        let p = select_contour(0.0, 3.0, 0.1, 0.1, 7).unwrap();
        assert_eq!(p.lambda_t, 1.0);
        assert!(p.t1 * p.mu * (1.0 - p.alpha.sin()) <= 3.0);
        assert!(p.alpha >= PI / 4.0);
    }

    #[test]
    fn center_node_is_real() {
        let p = select_contour(0.4, 3.0, 0.1, 1.0, 20).unwrap();
        let rule = quadrature_rule(&p);
        let z0 = rule.nodes[rule.position(0)];
        assert_eq!(z0.im, 0.0);
        assert!((z0.re - p.mu * (1.0 - p.alpha.sin())).abs() < 1e-14 * z0.re);
    }

    #[test]
    fn scalar_exponential() {
        let p = select_contour(0.0, 3.0, 1.0, 1.0, 40).unwrap();
        let rule = quadrature_rule(&p);
        let lambda = Complex64::new(-1.0, 0.0);
        let q = rule.apply(1.0, |z| 1.0 / (z - lambda));
        assert!((q - Complex64::new((-1f64).exp(), 0.0)).norm() <= 1e-10);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(select_contour(1.6, 3.0, 0.1, 1.0, 10).is_err());
        assert!(select_contour(0.0, -1.0, 0.1, 1.0, 10).is_err());
        assert!(select_contour(0.0, 3.0, 1.0, 0.5, 10).is_err());
        // Large β·δ with a single node pushes α past π/2 - δ.
        let err = select_contour(1.5, 50.0, 1.0, 1.0, 1).unwrap_err();
        assert!(matches!(err, Error::InvalidConfiguration(_)), "{err}");
    }
}
