use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::params::{quadrature_rule, select_contour, ContourParams, QuadratureRule, DEFAULT_BETA};
use crate::error::{Error, Result};
use crate::evolution::{ErrorReport, ErrorTerm, EvolutionMode, EvolutionResult, NodeDiagnostic};
use crate::operators::{GeneratorBounds, InfiniteOperator};
use crate::resolvent::{adaptive_resolvent_solve_with, ResolventOptions, ResolventSolve};
use crate::vector::FiniteVector;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Debug)]
pub struct AnalyticConfig {
    /// Nodes per half-contour.
    pub n: usize,
    pub beta: f64,
    /// Target for the aggregate error caused by inexact resolvents.
    pub eta: f64,
    /// Time window `[t0, t1]`; defaults to the range of the requested times.
    pub window: Option<(f64, f64)>,
    pub resolvent: ResolventOptions,
}

impl AnalyticConfig {
    pub fn new(n: usize, eta: f64) -> Self {
        Self {
            n,
            beta: DEFAULT_BETA,
            eta,
            window: None,
            resolvent: ResolventOptions::default(),
        }
    }
}

/// The error structure of the hyperbolic rule: an explicit coefficient for
/// the resolvent error η and the decay rate of the quadrature error, whose
/// multiplicative constant is not available.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalyticErrorReport {
    pub eta_coefficient: f64,
    pub resolvent_term: f64,
    pub quadrature_decay_exponent: f64,
    pub constant_c_known: bool,
    pub a_param: f64,
}

/// `∫_0^∞ e^{x - c cosh x} dx`, written as
/// `½∫_R cosh(x) e^{-c cosh x} dx + e^{-c}/c` and evaluated with the
/// trapezoidal rule on the real line (the symmetric integrand is analytic
/// in the strip `|Im x| < π/2` and decays double-exponentially).
pub fn cosh_kernel_integral(c: f64) -> f64 {
    assert!(c > 0.0, "cosh kernel needs c > 0");
    let h = 1.0 / 32.0;
    let g = |x: f64| x.cosh() * (-c * x.cosh()).exp();
    let mut sum = 0.5 * g(0.0);
    let mut k = 1;
    loop {
        let x = k as f64 * h;
        let term = g(x);
        sum += term;
        if term <= 1e-18 * sum && c * x.cosh() > 40.0 {
            break;
        }
        k += 1;
    }
    h * sum + (-c).exp() / c
}

pub fn analytic_error_report(params: &ContourParams, eta: f64) -> AnalyticErrorReport {
    let (sa, delta) = (params.alpha.sin(), params.delta);
    let integral = cosh_kernel_integral(params.mu * params.t0 * sa);
    let eta_coefficient = 2.0 * params.mu * (params.beta / (1.0 - sa)).exp() / PI * integral;
    let a_param = 1.0 / (PI / 4.0 - delta / 2.0).sin() - 1.0;
    let spread = params.n as f64 * PI * (PI - 2.0 * delta);
    let log_arg = params.lambda_t * (a_param / params.beta) * spread;
    let quadrature_decay_exponent = if params.n == 0 || log_arg <= 1.0 {
        0.0
    } else {
        -(spread / 2.0) / log_arg.ln()
    };
    AnalyticErrorReport {
        eta_coefficient,
        resolvent_term: eta_coefficient * eta,
        quadrature_decay_exponent,
        constant_c_known: false,
        a_param,
    }
}

/// `M_N = max_t |1 - Q_N(t)|` for the scalar `λ = 0` over `samples`
/// equispaced times in `[t0, Λ_t t0]`, with `Q_N(t) = Σ_j e^{z_j t} w_j / z_j`.
pub fn stability_metric(
    t0: f64,
    lambda_t: f64,
    n: usize,
    beta: f64,
    samples: usize,
) -> Result<f64> {
    if samples < 2 {
        return Err(Error::InvalidConfiguration(
            "need at least 2 time samples".into(),
        ));
    }
    let t1 = lambda_t * t0;
    let params = select_contour(0.0, beta, t0, t1, n)?;
    let rule = quadrature_rule(&params);
    let mut worst: f64 = 0.0;
    for k in 0..samples {
        let t = t0 + (t1 - t0) * k as f64 / (samples - 1) as f64;
        let q = rule.apply(t, |z| 1.0 / z);
        worst = worst.max((Complex64::new(1.0, 0.0) - q).norm());
    }
    Ok(worst)
}

/// How the resolvent at a contour node is obtained from a solve of `A - ζI`.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Pencil {
    /// `(A - zI) R = -u0`.
    Standard,
    /// `(A z^{1-ι} - zI) R = -u0`, i.e. `R = z^{ι-1} r` with `(A - z^ι I) r = -u0`.
    Fractional(f64),
}

impl Pencil {
    /// Solve point ζ and the factor with `R = factor · r`.
    fn map(self, z: Complex64) -> Result<(Complex64, Complex64)> {
        match self {
            Pencil::Standard => Ok((z, Complex64::new(1.0, 0.0))),
            Pencil::Fractional(iota) if iota == 1.0 => Ok((z, Complex64::new(1.0, 0.0))),
            Pencil::Fractional(iota) => {
                if z.im == 0.0 && z.re <= 0.0 {
                    return Err(Error::InvalidConfiguration(format!(
                        "contour node {z} lies on the branch cut of z^(1-ι)"
                    )));
                }
                Ok((z.powf(iota), z.powf(iota - 1.0)))
            }
        }
    }

    fn mode(self) -> EvolutionMode {
        match self {
            Pencil::Standard => EvolutionMode::Analytic,
            Pencil::Fractional(iota) => EvolutionMode::Fractional { iota },
        }
    }
}

/// Approximates `exp(tA) u0` for each requested time by the hyperbolic
/// contour rule, solving `(A - z_j I) R_j = -u0` at every node with a
/// certified residual.
///
/// Per-node residual targets are uniform, `η / Σ_j |w_j| e^{max_t Re z_j t} b_j`
/// with `b_j` a resolvent-norm bound at `z_j`, so the aggregate resolvent
/// error is at most `η` at every time in the window.
pub fn evolve_analytic(
    op: &dyn InfiniteOperator,
    bounds: &GeneratorBounds,
    u0: &FiniteVector,
    times: &[f64],
    config: &AnalyticConfig,
) -> Result<EvolutionResult> {
    contour_evolve(op, bounds, u0, times, config, Pencil::Standard)
}

struct NodePlan {
    index: i64,
    z: Complex64,
    weight: Complex64,
    solve_point: Complex64,
    factor: Complex64,
    bound: f64,
    certified: bool,
}

pub(crate) fn contour_evolve(
    op: &dyn InfiniteOperator,
    bounds: &GeneratorBounds,
    u0: &FiniteVector,
    times: &[f64],
    config: &AnalyticConfig,
    pencil: Pencil,
) -> Result<EvolutionResult> {
    bounds.validate()?;
    let delta = bounds.sector_delta.ok_or_else(|| {
        Error::InvalidInput("contour evolution needs a sector angle delta".into())
    })?;
    if times.is_empty() || times.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(Error::InvalidInput(
            "times must be positive and finite".into(),
        ));
    }
    if !(config.eta > 0.0) {
        return Err(Error::InvalidInput(format!(
            "eta must be positive, got {}",
            config.eta
        )));
    }
    let (t0, t1) = config.window.unwrap_or_else(|| {
        let lo = times.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = times.iter().copied().fold(0.0, f64::max);
        (lo, hi)
    });
    if times.iter().any(|&t| t < t0 || t > t1) {
        return Err(Error::InvalidInput(format!(
            "times must lie in [{t0}, {t1}]"
        )));
    }
    let params = select_contour(delta, config.beta, t0, t1, config.n)?;
    let rule = quadrature_rule(&params);
    let plans = plan_nodes(&rule, bounds, pencil)?;

    let weight_sum: f64 = plans
        .iter()
        .map(|p| p.weight.norm() * (p.z.re * t0).max(p.z.re * t1).exp() * p.factor.norm() * p.bound)
        .sum();
    let target = config.eta / weight_sum;

    let symmetric = op.is_real() && u0.is_real();
    let n = params.n as i64;
    let solved: Vec<(usize, Result<ResolventSolve>)> = plans
        .par_iter()
        .enumerate()
        .filter(|(_, p)| !symmetric || p.index >= 0)
        .map(|(pos, p)| {
            let solve =
                adaptive_resolvent_solve_with(op, p.solve_point, u0, target, &config.resolvent);
            (pos, solve)
        })
        .collect();

    let mut solves: Vec<Option<ResolventSolve>> = vec![None; plans.len()];
    let mut failures = Vec::new();
    for (pos, result) in solved {
        let solve = match result {
            Ok(s) => s,
            Err(Error::ResolventToleranceNotMet {
                best, z, achieved, ..
            }) => {
                failures.push(format!(
                    "node {} (ζ = {z}): residual {achieved:e}",
                    plans[pos].index
                ));
                *best
            }
            Err(e) => return Err(e),
        };
        solves[pos] = Some(solve);
    }
    let mut mirrored = vec![false; plans.len()];
    if symmetric {
        for j in 1..=n {
            let (neg, pos) = (rule.position(-j), rule.position(j));
            let s = solves[pos].clone().expect("solved above");
            solves[neg] = Some(ResolventSolve {
                solution: s.solution.conj(),
                ..s
            });
            mirrored[neg] = true;
        }
    }
    let solves: Vec<ResolventSolve> = solves
        .into_iter()
        .map(|s| s.expect("every node covered"))
        .collect();

    let mut solutions = Vec::with_capacity(times.len());
    let mut resolvent_term: f64 = 0.0;
    let dim = solves
        .iter()
        .map(|s| s.solution.max_index())
        .max()
        .unwrap_or(0);
    for &t in times {
        let mut acc = vec![ZERO; dim];
        let mut err = 0.0;
        for (p, s) in plans.iter().zip(&solves) {
            let c = (p.z * t).exp() * p.weight * p.factor;
            for (i, v) in s.solution.iter() {
                acc[i - 1] += c * v;
            }
            err += c.norm() * p.bound * s.residual_norm;
        }
        resolvent_term = resolvent_term.max(err);
        solutions.push(FiniteVector::from_dense(&acc));
    }

    let certified = plans.iter().all(|p| p.certified);
    let resolvent = if certified {
        ErrorTerm::certified("resolvent", resolvent_term)
    } else {
        ErrorTerm::estimate("resolvent", Some(resolvent_term))
    };
    let report = analytic_error_report(&params, config.eta);
    let error = ErrorReport::new(
        vec![resolvent, ErrorTerm::estimate("quadrature", None)],
        Some(report),
    );
    let nodes: Vec<NodeDiagnostic> = plans
        .iter()
        .zip(&solves)
        .zip(&mirrored)
        .map(|((p, s), &m)| NodeDiagnostic {
            index: p.index,
            z: p.z,
            weight: p.weight,
            solve_point: p.solve_point,
            residual: s.residual_norm,
            residual_target: target,
            resolvent_bound: p.bound,
            bound_certified: p.certified,
            truncation_cols: s.truncation_cols,
            rhs_truncation: s.rhs_truncation,
            iterations: s.iterations,
            mirrored: m,
        })
        .collect();
    let result = EvolutionResult {
        mode: pencil.mode(),
        times: times.to_vec(),
        solutions,
        error,
        contour: Some(params),
        node_count: nodes.len(),
        nodes,
    };
    if failures.is_empty() {
        Ok(result)
    } else {
        Err(Error::ToleranceNotMet {
            detail: format!(
                "{} node solve(s) missed the residual target {target:e}: {}",
                failures.len(),
                failures.join("; ")
            ),
            partial: Some(Box::new(result)),
        })
    }
}

fn plan_nodes(
    rule: &QuadratureRule,
    bounds: &GeneratorBounds,
    pencil: Pencil,
) -> Result<Vec<NodePlan>> {
    let n = rule.n() as i64;
    (-n..=n)
        .zip(rule.nodes.iter().zip(&rule.weights))
        .map(|(index, (&z, &weight))| {
            let (solve_point, factor) = pencil.map(z)?;
            let (bound, certified) = bounds.resolvent_bound(solve_point).ok_or_else(|| {
                Error::InvalidConfiguration(format!(
                    "no finite resolvent bound at contour node {z} (solve point {solve_point})"
                ))
            })?;
            Ok(NodePlan {
                index,
                z,
                weight,
                solve_point,
                factor,
                bound,
                certified,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{DiagonalOperator, RangeRegion};

    /// Composite Simpson on `[0, 40]` with 400k panels.
    fn kernel_brute(c: f64) -> f64 {
        let n = 400_000;
        let (a, b) = (0.0, 40.0);
        let h = (b - a) / n as f64;
        let f = |x: f64| (x - c * x.cosh()).exp();
        let mut s = f(a) + f(b);
        for k in 1..n {
            s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn cosh_kernel_at_one() {
        let v = cosh_kernel_integral(1.0);
        assert!((v - kernel_brute(1.0)).abs() < 1e-12, "{v}");
        // Closed form K_1(1) + e^{-1}.
        assert!((v - 0.969786671368677).abs() < 1e-13);
    }

    #[test]
    fn cosh_kernel_small_and_large() {
        for c in [0.05, 0.3, 5.0, 30.0] {
            let v = cosh_kernel_integral(c);
            let b = kernel_brute(c);
            assert!(
                (v - b).abs() <= 1e-10 * b.max(1e-300),
                "c = {c}: {v} vs {b}"
            );
        }
    }

    #[test]
    fn report_is_linear_in_eta() {
        let p = select_contour(0.0, 3.0, 0.1, 1.0, 30).unwrap();
        assert_eq!(analytic_error_report(&p, 0.0).resolvent_term, 0.0);
        let a = analytic_error_report(&p, 1e-6);
        let b = analytic_error_report(&p, 2e-6);
        assert!((b.resolvent_term - 2.0 * a.resolvent_term).abs() <= 1e-15 * b.resolvent_term);
        assert!(!a.constant_c_known);
        assert!(a.quadrature_decay_exponent < 0.0);
    }

    #[test]
    fn decay_exponent_decreases() {
        let mut last = 0.0;
        for n in [10, 20, 40, 80, 160] {
            let p = select_contour(0.4, 3.0, 0.1, 1.0, n).unwrap();
            let e = analytic_error_report(&p, 1.0).quadrature_decay_exponent;
            assert!(e < last);
            last = e;
        }
    }

    #[test]
    fn zero_generator() {
        let op = DiagonalOperator::scalar(ZERO);
        let bounds = GeneratorBounds::sectorial(0.0).with_region(RangeRegion::Sector {
            vertex: ZERO,
            half_angle: 0.0,
        });
        let times = [0.1, 0.5, 1.0];
        let res = evolve_analytic(
            &op,
            &bounds,
            &FiniteVector::unit(1),
            &times,
            &AnalyticConfig::new(40, 1e-12),
        )
        .unwrap();
        let m = stability_metric(0.1, 10.0, 40, 3.0, 201).unwrap();
        for (t, u) in times.iter().zip(&res.solutions) {
            assert!(
                u.distance(&FiniteVector::unit(1)) <= 10.0 * m + 1e-12,
                "t = {t}"
            );
        }
    }

    #[test]
    fn two_mode_diagonal() {
        let op = DiagonalOperator::from_real(&[-1.0, -2.0]);
        let bounds = GeneratorBounds::sectorial(0.0);
        let u0 = FiniteVector::from_real(&[1.0, 1.0]);
        let res =
            evolve_analytic(&op, &bounds, &u0, &[1.0], &AnalyticConfig::new(50, 1e-12)).unwrap();
        let exact = FiniteVector::from_real(&[(-1f64).exp(), (-2f64).exp()]);
        assert!(res.solutions[0].distance(&exact) <= 1e-8);
        assert!(res.nodes.iter().any(|n| n.mirrored));
    }

    #[test]
    fn single_node_rule_is_finite() {
        let op = DiagonalOperator::from_real(&[-1.0]);
        let bounds = GeneratorBounds::sectorial(0.0);
        let res = evolve_analytic(
            &op,
            &bounds,
            &FiniteVector::unit(1),
            &[0.7],
            &AnalyticConfig::new(0, 1e-10),
        )
        .unwrap();
        assert_eq!(res.nodes.len(), 1);
        let v = res.solutions[0].get(1);
        assert!(v.re.is_finite() && v.im.is_finite());
    }

    #[test]
    fn requires_sector() {
        let op = DiagonalOperator::from_real(&[-1.0]);
        let err = evolve_analytic(
            &op,
            &GeneratorBounds::new(1.0, 0.0),
            &FiniteVector::unit(1),
            &[1.0],
            &AnalyticConfig::new(10, 1e-10),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }
}
