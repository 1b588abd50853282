//! General C0-semigroups through the regularized vertical-line integral
//!
//! `exp(tA) u0 = -(A - cI)² B u0`, `B = (1/2πi) ∫_{Re z = ω+1} e^{zt} R(z, A) / (z - c)² dz`,
//! with `c = ω + 2`. With `z = ω + 1 + is` the integrand becomes
//! `F(s) = e^{(ω+1)t + ist} / (2π(is - 1)²) · R(ω + 1 + is, A) u`, whose norm is
//! at most `M e^{(1+ω)t} ||u|| / (2π(1 + s²))` by the Hille–Yosida bound.
//!
//! The error budget splits `ε` as `ε/2` (truncating `u0`), `ε/4` and `ε/8`
//! (the two applications of `A - cI`), `ε/16` (quadrature) and `ε/16`
//! (resolvents).

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolution::{
    ErrorReport, ErrorTerm, EvolutionMode, EvolutionResult, NodeDiagnostic, QuadratureMode,
};
use crate::operators::{apply_shifted, GeneratorBounds, InfiniteOperator};
use crate::resolvent::{adaptive_resolvent_solve_with, ResolventOptions, ResolventSolve};
use crate::vector::{
    truncate_vector, ErrorBudget, EvaluableVector, FiniteVector, TruncationOptions,
};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub const DEFAULT_NODE_CEILING: usize = 4_000_000;
/// Node diagnostics are kept in full only up to this many nodes.
pub const NODE_DIAGNOSTIC_LIMIT: usize = 4096;

const CHUNK: usize = 2048;

#[derive(Clone, Debug)]
pub struct RegularizedConfig {
    pub mode: QuadratureMode,
    pub node_ceiling: usize,
    pub resolvent: ResolventOptions,
    pub truncation: TruncationOptions,
}

impl RegularizedConfig {
    pub fn new(mode: QuadratureMode) -> Self {
        Self {
            mode,
            node_ceiling: DEFAULT_NODE_CEILING,
            resolvent: ResolventOptions::default(),
            truncation: TruncationOptions::default(),
        }
    }
}

impl Default for RegularizedConfig {
    fn default() -> Self {
        Self::new(QuadratureMode::Practical)
    }
}

/// Cutoff `L` with `M e^{(1+ω)t} / (πL) <= eps_hat`, rounded up to an integer.
pub fn cutoff_for(m: f64, omega: f64, t: f64, eps_hat: f64) -> f64 {
    (m * ((1.0 + omega) * t).exp() / (PI * eps_hat)).ceil()
}

/// Smallest integer `m` with `2L ||F'||_∞ / m <= eps_hat`, using
/// `||F'|| <= (3 + t) M e^{(1+ω)t} / (2π)`.
pub fn derivative_step_density(m: f64, omega: f64, t: f64, eps_hat: f64, cutoff: f64) -> f64 {
    let derivative = (3.0 + t) * m * ((1.0 + omega) * t).exp() / (2.0 * PI);
    (2.0 * cutoff * derivative / eps_hat).ceil()
}

/// `e^{(ω+1)t + ist} / (2π(is - 1)²)`.
pub fn kernel(omega: f64, t: f64, s: f64) -> Complex64 {
    let num = Complex64::new((omega + 1.0) * t, s * t).exp();
    let d = Complex64::new(-1.0, s);
    num / (2.0 * PI * d * d)
}

/// `M e^{(1+ω)t} ||u|| / (2π(1 + s²))`, the bound on `||F(s)||`.
pub fn kernel_envelope(m: f64, omega: f64, t: f64, u_norm: f64, s: f64) -> f64 {
    m * ((1.0 + omega) * t).exp() * u_norm / (2.0 * PI * (1.0 + s * s))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuadraturePlan {
    /// `h Σ_{|k|<=K} F(kh)`. The integrand is analytic in `|Im s| < 1`; on
    /// `|Im s| <= a` its line integrals are at most
    /// `M_a = M e^{(ω+1+a)t} ||u|| / (2(1 - a²))`, so the infinite sum is
    /// within `2M_a / (e^{2πa/h} - 1)` of the integral, and both tails beyond
    /// `Kh` are bounded through the envelope.
    Trapezoid {
        step: f64,
        half_count: usize,
        strip: f64,
        tail_bound: f64,
        discretization_bound: f64,
    },
    /// `(1/m) Σ_{j=-Lm+1}^{Lm} F(j/m)`.
    Rectangle {
        cutoff: usize,
        step_density: usize,
        tail_bound: f64,
        discretization_bound: f64,
    },
    /// Composite 7/15-point Gauss–Kronrod panels of fixed width on a
    /// symmetric interval that grows until an estimated tail is small.
    Panels { width: f64, initial_cutoff: f64 },
}

impl QuadraturePlan {
    pub fn node_count(&self) -> Option<usize> {
        match self {
            QuadraturePlan::Trapezoid { half_count, .. } => Some(2 * half_count + 1),
            QuadraturePlan::Rectangle {
                cutoff,
                step_density,
                ..
            } => Some(2 * cutoff * step_density),
            QuadraturePlan::Panels { .. } => None,
        }
    }

    /// Certified quadrature error for rigorous plans.
    pub fn error_bound(&self) -> Option<f64> {
        match self {
            QuadraturePlan::Trapezoid {
                tail_bound,
                discretization_bound,
                ..
            }
            | QuadraturePlan::Rectangle {
                tail_bound,
                discretization_bound,
                ..
            } => Some(tail_bound + discretization_bound),
            QuadraturePlan::Panels { .. } => None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RegularizedPlan {
    pub omega: f64,
    pub m: f64,
    pub t: f64,
    pub eps: f64,
    pub budget: ErrorBudget,
    /// Regularizer pole `ω + 2`.
    pub shift: f64,
    /// Integration line `Re z = ω + 1`.
    pub line_re: f64,
    /// Norm of the vector the quadrature is applied to.
    pub input_norm: f64,
    /// Quadrature error allowance per unit of input norm.
    pub eps_hat: f64,
    /// Cutoff and step density from the envelope and derivative bounds, each
    /// taking half of `eps_hat`.
    pub cutoff: f64,
    pub step_density: f64,
    pub mode: QuadratureMode,
    pub quadrature: QuadraturePlan,
}

/// Plan for a unit-norm input vector.
pub fn plan_regularized(
    m: f64,
    omega: f64,
    t: f64,
    eps: f64,
    mode: QuadratureMode,
) -> Result<RegularizedPlan> {
    plan_regularized_for(m, omega, t, eps, mode, 1.0, DEFAULT_NODE_CEILING)
}

pub fn plan_regularized_for(
    m: f64,
    omega: f64,
    t: f64,
    eps: f64,
    mode: QuadratureMode,
    input_norm: f64,
    node_ceiling: usize,
) -> Result<RegularizedPlan> {
    if !(m >= 1.0) || !m.is_finite() {
        return Err(Error::InvalidInput(format!("M must be >= 1, got {m}")));
    }
    if !omega.is_finite() {
        return Err(Error::InvalidInput("omega must be finite".into()));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidInput(format!("t must be positive, got {t}")));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidInput(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let mut budget = ErrorBudget::new(eps)?;
    budget.allocate("initial_truncation", eps / 2.0)?;
    budget.allocate("first_shift", eps / 4.0)?;
    budget.allocate("second_shift", eps / 8.0)?;
    let quad = budget.allocate("quadrature", eps / 16.0)?;
    budget.allocate("resolvent", eps / 16.0)?;

    let u = input_norm.max(f64::MIN_POSITIVE);
    let eps_hat = quad / u;
    let cutoff = cutoff_for(m, omega, t, eps_hat / 2.0);
    let step_density = derivative_step_density(m, omega, t, eps_hat / 2.0, cutoff);

    let quadrature = match mode {
        QuadratureMode::Rigorous => {
            let trapezoid = strip_trapezoid(m, omega, t, u, quad);
            let rectangle_nodes = 2.0 * cutoff * step_density;
            let chosen =
                if (rectangle_nodes as f64) < trapezoid.node_count().unwrap_or(usize::MAX) as f64 {
                    QuadraturePlan::Rectangle {
                        cutoff: cutoff as usize,
                        step_density: step_density as usize,
                        tail_bound: m * ((1.0 + omega) * t).exp() * u / (PI * cutoff),
                        discretization_bound: 2.0
                            * cutoff
                            * (3.0 + t)
                            * m
                            * ((1.0 + omega) * t).exp()
                            * u
                            / (2.0 * PI * step_density),
                    }
                } else {
                    trapezoid
                };
            let count = chosen.node_count().unwrap_or(usize::MAX);
            if count > node_ceiling {
                return Err(Error::ToleranceNotMet {
                    detail: format!(
                        "rigorous quadrature needs {count} nodes, above the ceiling {node_ceiling} \
                         (eps = {eps:e}, input norm = {input_norm:e})"
                    ),
                    partial: None,
                });
            }
            chosen
        }
        QuadratureMode::Practical => QuadraturePlan::Panels {
            width: (4.0 / t).min(1.0),
            initial_cutoff: (16.0f64).max(16.0 / t),
        },
    };

    Ok(RegularizedPlan {
        omega,
        m,
        t,
        eps,
        budget,
        shift: omega + 2.0,
        line_re: omega + 1.0,
        input_norm,
        eps_hat,
        cutoff,
        step_density,
        mode,
        quadrature,
    })
}

/// Cheapest trapezoidal rule meeting `budget` under the strip bound, over a
/// grid of strip half-widths and tail/discretization splits.
fn strip_trapezoid(m: f64, omega: f64, t: f64, u: f64, budget: f64) -> QuadraturePlan {
    let c = m * ((1.0 + omega) * t).exp() * u / (2.0 * PI);
    let tail = |l: f64| 4.0 * c * (PI / 2.0 - l.atan());
    let mut best: Option<(usize, f64, usize, f64)> = None;
    for ai in 1..20 {
        let a = ai as f64 * 0.05;
        let m_a = m * ((omega + 1.0 + a) * t).exp() * u / (2.0 * (1.0 - a * a));
        for fi in 0..10 {
            let f = 0.5 + 0.05 * fi as f64;
            let (eps_t, eps_d) = (f * budget, (1.0 - f) * budget);
            let x = eps_t / (4.0 * c);
            let l = if x >= PI / 2.0 { 0.0 } else { 1.0 / x.tan() };
            // Slightly below the exact solution so rounding cannot overshoot.
            let h = 2.0 * PI * a / (1.0 + 2.0 * m_a / eps_d).ln() * (1.0 - 1e-12);
            let k = (l / h).ceil();
            if !k.is_finite() || k > 1e15 {
                continue;
            }
            let k = k as usize;
            if best.map_or(true, |(bk, ..)| k < bk) {
                best = Some((k, h, ai, a));
            }
        }
    }
    let (k, h, _, a) = best.expect("grid is non-empty");
    let m_a = m * ((omega + 1.0 + a) * t).exp() * u / (2.0 * (1.0 - a * a));
    QuadraturePlan::Trapezoid {
        step: h,
        half_count: k,
        strip: a,
        tail_bound: tail(k as f64 * h),
        discretization_bound: 2.0 * m_a / ((2.0 * PI * a / h).exp() - 1.0),
    }
}

// 7-point Gauss / 15-point Kronrod abscissae and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Nodes of one panel in ascending order with Kronrod and Gauss weights.
fn panel_rule(lo: f64, hi: f64) -> [(f64, f64, f64); 15] {
    let (c, r) = ((lo + hi) / 2.0, (hi - lo) / 2.0);
    let mut out = [(0.0, 0.0, 0.0); 15];
    for i in 0..8 {
        let gauss = if i % 2 == 1 { WG[i / 2] } else { 0.0 };
        out[i] = (c - r * XGK[i], r * WGK[i], r * gauss);
        out[14 - i] = (c + r * XGK[i], r * WGK[i], r * gauss);
    }
    out
}

struct Solved {
    z: Complex64,
    kernel: Complex64,
    solve: ResolventSolve,
    failed: bool,
}

struct Context<'a> {
    op: &'a dyn InfiniteOperator,
    rhs: FiniteVector,
    omega: f64,
    t: f64,
    line_re: f64,
    target: f64,
    resolvent: &'a ResolventOptions,
}

impl Context<'_> {
    fn solve_all(&self, s: &[f64]) -> Result<Vec<Solved>> {
        s.par_iter()
            .map(|&s| {
                let z = Complex64::new(self.line_re, s);
                let (solve, failed) = match adaptive_resolvent_solve_with(
                    self.op,
                    z,
                    &self.rhs,
                    self.target,
                    self.resolvent,
                ) {
                    Ok(solve) => (solve, false),
                    Err(Error::ResolventToleranceNotMet { best, .. }) => (*best, true),
                    Err(e) => return Err(e),
                };
                Ok(Solved {
                    z,
                    kernel: kernel(self.omega, self.t, s),
                    solve,
                    failed,
                })
            })
            .collect()
    }
}

#[derive(Default)]
struct Accumulator {
    dense: Vec<Complex64>,
}

impl Accumulator {
    fn add(&mut self, c: Complex64, v: &FiniteVector) {
        if v.max_index() > self.dense.len() {
            self.dense.resize(v.max_index(), ZERO);
        }
        for (i, x) in v.iter() {
            self.dense[i - 1] += c * x;
        }
    }

    fn norm(&self) -> f64 {
        self.dense.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    fn into_vector(self) -> FiniteVector {
        FiniteVector::from_dense(&self.dense)
    }
}

#[derive(Default)]
struct Tally {
    output: Accumulator,
    weight_abs: f64,
    resolvent_error: f64,
    nodes: Vec<NodeDiagnostic>,
    node_count: usize,
    failures: usize,
    max_residual: f64,
    max_cols: usize,
}

impl Tally {
    fn record(&mut self, index: i64, node: &Solved, weight: Complex64, m: f64, target: f64) {
        self.output.add(weight, &node.solve.solution);
        self.weight_abs += weight.norm();
        // ||R(z)|| <= M / (Re z - ω) = M on the integration line.
        self.resolvent_error += weight.norm() * m * node.solve.residual_norm;
        self.node_count += 1;
        self.failures += node.failed as usize;
        self.max_residual = self.max_residual.max(node.solve.residual_norm);
        self.max_cols = self.max_cols.max(node.solve.truncation_cols);
        if self.nodes.len() < NODE_DIAGNOSTIC_LIMIT {
            self.nodes.push(NodeDiagnostic {
                index,
                z: node.z,
                weight,
                solve_point: node.z,
                residual: node.solve.residual_norm,
                residual_target: target,
                resolvent_bound: m,
                bound_certified: true,
                truncation_cols: node.solve.truncation_cols,
                rhs_truncation: node.solve.rhs_truncation,
                iterations: node.solve.iterations,
                mirrored: false,
            });
        }
    }
}

/// Approximates `exp(tA) u0` for a generator with `||exp(tA)|| <= M e^{ωt}`.
///
/// In rigorous mode the returned report carries a certified total bound
/// `<= eps`; in practical mode the quadrature term is an estimate.
pub fn evolve_c0<V: EvaluableVector + ?Sized>(
    op: &dyn InfiniteOperator,
    bounds: &GeneratorBounds,
    u0: &V,
    t: f64,
    eps: f64,
    config: &RegularizedConfig,
) -> Result<EvolutionResult> {
    bounds.validate()?;
    let (m, omega) = (bounds.m, bounds.omega);
    // Validates the scalar inputs before any oracle work.
    plan_regularized_for(m, omega, t, eps, config.mode, 1.0, usize::MAX)?;
    let shift = Complex64::new(omega + 2.0, 0.0);
    let decay = (-omega * t).exp();

    let u0e = truncate_vector(u0, eps * decay / (2.0 * m), &config.truncation)?;
    let step = eps * decay / (2.0 * m * m);
    let u1 = apply_shifted(op, &u0e, shift, step, &config.truncation)?;
    let u2 =
        apply_shifted(op, &u1, shift, step, &config.truncation)?.scale(Complex64::new(-1.0, 0.0));
    let u2_norm = u2.norm();

    let plan = plan_regularized_for(m, omega, t, eps, config.mode, u2_norm, config.node_ceiling)?;
    let quad_budget = plan.budget.get("quadrature").expect("allocated");
    let resolvent_budget = plan.budget.get("resolvent").expect("allocated");

    // Σ|w_j| is at most about ∫ e^{(ω+1)t} / (2π(1 + s²)) ds = e^{(ω+1)t}/2;
    // the target leaves a factor of two for the quadrature's overshoot.
    let target = resolvent_budget / (m * ((omega + 1.0) * t).exp());
    let ctx = Context {
        op,
        rhs: u2.scale(Complex64::new(-1.0, 0.0)),
        omega,
        t,
        line_re: plan.line_re,
        target,
        resolvent: &config.resolvent,
    };

    let (tally, quadrature_term) = if u2.is_empty() {
        (Tally::default(), ErrorTerm::certified("quadrature", 0.0))
    } else {
        match &plan.quadrature {
            QuadraturePlan::Trapezoid {
                step, half_count, ..
            } => {
                let k = *half_count as i64;
                let h = *step;
                let tally = run_uniform(&ctx, (-k..=k).map(|j| (j, j as f64 * h, h)), m)?;
                (
                    tally,
                    ErrorTerm::certified("quadrature", plan.quadrature.error_bound().unwrap()),
                )
            }
            QuadraturePlan::Rectangle {
                cutoff,
                step_density,
                ..
            } => {
                let lm = (*cutoff * *step_density) as i64;
                let q = 1.0 / *step_density as f64;
                let tally = run_uniform(&ctx, (-lm + 1..=lm).map(|j| (j, j as f64 * q, q)), m)?;
                (
                    tally,
                    ErrorTerm::certified("quadrature", plan.quadrature.error_bound().unwrap()),
                )
            }
            QuadraturePlan::Panels {
                width,
                initial_cutoff,
            } => {
                let (tally, estimate) = run_panels(
                    &ctx,
                    *width,
                    *initial_cutoff,
                    quad_budget,
                    m,
                    u2_norm,
                    config.node_ceiling,
                )?;
                (tally, ErrorTerm::estimate("quadrature", Some(estimate)))
            }
        }
    };

    let growth = (omega * t).exp();
    let terms = vec![
        ErrorTerm::certified("initial_truncation", m * growth * eps * decay / (2.0 * m)),
        ErrorTerm::certified("first_shift", m * m * growth / 2.0 * step),
        ErrorTerm::certified("second_shift", m * m * growth / 4.0 * step),
        quadrature_term,
        ErrorTerm::certified("resolvent", tally.resolvent_error),
    ];
    let error = ErrorReport::new(terms, None);
    let failures = tally.failures;
    let resolvent_error = tally.resolvent_error;
    let result = EvolutionResult {
        mode: EvolutionMode::Regularized {
            quadrature: config.mode,
        },
        times: vec![t],
        solutions: vec![tally.output.into_vector()],
        error,
        contour: None,
        node_count: tally.node_count,
        nodes: tally.nodes,
    };
    if failures > 0 || resolvent_error > resolvent_budget {
        return Err(Error::ToleranceNotMet {
            detail: format!(
                "{failures} node solve(s) missed the residual target {target:e}; \
                 resolvent error {resolvent_error:e} against budget {resolvent_budget:e}"
            ),
            partial: Some(Box::new(result)),
        });
    }
    Ok(result)
}

fn run_uniform(
    ctx: &Context<'_>,
    nodes: impl Iterator<Item = (i64, f64, f64)>,
    m: f64,
) -> Result<Tally> {
    let nodes: Vec<(i64, f64, f64)> = nodes.collect();
    let mut tally = Tally::default();
    for chunk in nodes.chunks(CHUNK) {
        let s: Vec<f64> = chunk.iter().map(|&(_, s, _)| s).collect();
        let solved = ctx.solve_all(&s)?;
        for (&(j, _, q), node) in chunk.iter().zip(&solved) {
            tally.record(j, node, node.kernel * q, m, ctx.target);
        }
    }
    Ok(tally)
}

fn run_panels(
    ctx: &Context<'_>,
    width: f64,
    initial_cutoff: f64,
    budget: f64,
    m: f64,
    u_norm: f64,
    node_ceiling: usize,
) -> Result<(Tally, f64)> {
    let mut width = width;
    let mut restarts = 0;
    loop {
        let (tally, tail, discretization) =
            panels_at_width(ctx, width, initial_cutoff, budget, m, u_norm, node_ceiling)?;
        if discretization <= budget / 2.0 || restarts >= 3 {
            return Ok((tally, tail + discretization));
        }
        width /= 2.0;
        restarts += 1;
    }
}

/// Integrates on growing symmetric intervals `[-L, L]`; returns the tally,
/// the tail estimate and the Kronrod–Gauss discretization estimate.
fn panels_at_width(
    ctx: &Context<'_>,
    width: f64,
    initial_cutoff: f64,
    budget: f64,
    m: f64,
    u_norm: f64,
    node_ceiling: usize,
) -> Result<(Tally, f64, f64)> {
    let mut tally = Tally::default();
    let mut discretization = 0.0;
    // Peak of ||F|| on the k-th panel away from the origin, per side.
    let mut peaks_pos: Vec<f64> = Vec::new();
    let mut peaks_neg: Vec<f64> = Vec::new();
    let mut panels = (initial_cutoff / width).ceil() as usize;
    let mut done = 0usize;
    let mut index = 0i64;
    loop {
        // Panels [kw, (k+1)w] and their mirrors for k in done..panels, in
        // ascending s.
        let mut layout: Vec<(usize, bool)> = (done..panels).rev().map(|k| (k, false)).collect();
        layout.extend((done..panels).map(|k| (k, true)));
        if tally.node_count + 15 * layout.len() > node_ceiling {
            return Err(Error::ToleranceNotMet {
                detail: format!(
                    "practical quadrature needs more than {node_ceiling} nodes (interval [-{l}, {l}])",
                    l = panels as f64 * width
                ),
                partial: None,
            });
        }
        peaks_pos.resize(panels, 0.0);
        peaks_neg.resize(panels, 0.0);
        for group in layout.chunks(CHUNK / 15) {
            let rules: Vec<[(f64, f64, f64); 15]> = group
                .iter()
                .map(|&(k, positive)| {
                    let (lo, hi) = (k as f64 * width, (k + 1) as f64 * width);
                    if positive {
                        panel_rule(lo, hi)
                    } else {
                        panel_rule(-hi, -lo)
                    }
                })
                .collect();
            let s: Vec<f64> = rules.iter().flat_map(|r| r.iter().map(|n| n.0)).collect();
            let solved = ctx.solve_all(&s)?;
            for ((rule, &(k, positive)), nodes) in rules.iter().zip(group).zip(solved.chunks(15)) {
                let mut diff = Accumulator::default();
                let mut peak = 0.0f64;
                for (&(_, wk, wg), node) in rule.iter().zip(nodes) {
                    diff.add(node.kernel * (wk - wg), &node.solve.solution);
                    peak = peak.max(node.kernel.norm() * node.solve.solution.norm());
                    tally.record(index, node, node.kernel * wk, m, ctx.target);
                    index += 1;
                }
                discretization += diff.norm();
                if positive {
                    peaks_pos[k] = peak;
                } else {
                    peaks_neg[k] = peak;
                }
            }
        }
        done = panels;
        let cutoff = panels as f64 * width;
        let tail =
            tail_estimate(&peaks_pos, cutoff, ctx.t) + tail_estimate(&peaks_neg, cutoff, ctx.t);
        // The envelope gives a hard bound on the truncation error.
        let envelope_tail = 4.0 * m * ((1.0 + ctx.omega) * ctx.t).exp() * u_norm / (2.0 * PI)
            * (PI / 2.0 - cutoff.atan());
        let tail = tail.min(envelope_tail);
        if tail <= budget / 2.0 {
            return Ok((tally, tail, discretization));
        }
        panels *= 2;
    }
}

/// Tail of `∫_L^∞ ||F||` from the panel peaks (indexed by distance from
/// the origin), assuming power-law decay fitted between `L/2` and `L`, or the
/// oscillatory bound `2||F(L)||/t` when smaller. Infinite when no decay is
/// visible.
fn tail_estimate(peaks: &[f64], cutoff: f64, t: f64) -> f64 {
    let n = peaks.len();
    if n < 2 {
        return f64::INFINITY;
    }
    let (outer, inner) = (peaks[n - 1], peaks[n / 2 - 1]);
    if outer == 0.0 {
        return 0.0;
    }
    // Panel n-1 sits near L and panel n/2-1 near L/2.
    let p = (inner / outer).ln() / ((n as f64 - 0.5) / (n as f64 / 2.0 - 0.5)).ln();
    if p > 1.5 {
        (outer * cutoff / (p - 1.0)).min(2.0 * outer / t)
    } else {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{graph_laplacian, DiagonalOperator, ScaledOperator};
    use std::sync::Arc;

    #[test]
    fn budget_identity() {
        let plan = plan_regularized(1.0, 0.0, 1.0, 0.8, QuadratureMode::Rigorous).unwrap();
        assert!((plan.budget.allocated() - 0.8).abs() < 1e-15);
        assert_eq!(plan.budget.splits.len(), 5);
    }

    #[test]
    fn proof_cutoff_and_step() {
        // M = 1, ω = 0, t = 1, ε̂ = 0.1: e/(0.1π) = 8.65...
        let e = 1f64.exp();
        assert_eq!(cutoff_for(1.0, 0.0, 1.0, 0.1), (e / (0.1 * PI)).ceil());
        assert_eq!(cutoff_for(1.0, 0.0, 1.0, 0.1), 9.0);
        let expected = (2.0 * 9.0 * 4.0 * e / (2.0 * PI) / 0.1).ceil();
        assert_eq!(derivative_step_density(1.0, 0.0, 1.0, 0.1, 9.0), expected);
        // ω = 1 doubles the exponent.
        assert_eq!(
            cutoff_for(1.0, 1.0, 1.0, 0.1),
            (2f64.exp() / (0.1 * PI)).ceil()
        );
    }

    #[test]
    fn plan_cutoff_dominates_envelope_tail() {
        let plan = plan_regularized(2.0, 0.5, 0.7, 0.3, QuadratureMode::Rigorous).unwrap();
        let needed = plan.m * ((1.0 + plan.omega) * plan.t).exp() / (PI * plan.eps_hat / 2.0);
        assert!(plan.cutoff >= needed);
        assert!(plan.quadrature.error_bound().unwrap() <= plan.eps / 16.0 * (1.0 + 1e-9));
    }

    #[test]
    fn envelope_dominates_kernel() {
        for &(omega, t) in &[(0.0, 1.0), (0.5, 0.3), (-1.0, 2.0)] {
            for k in -200..=200 {
                let s = k as f64 * 0.37;
                let m = 1.5;
                assert!(
                    kernel(omega, t, s).norm() * m
                        <= kernel_envelope(m, omega, t, 1.0, s) * (1.0 + 1e-14)
                );
            }
        }
    }

    #[test]
    fn ceiling_reports_required_nodes() {
        let err = plan_regularized_for(1.0, 0.0, 1.0, 1e-6, QuadratureMode::Rigorous, 1.0, 1000)
            .unwrap_err();
        match err {
            Error::ToleranceNotMet { detail, .. } => assert!(detail.contains("nodes"), "{detail}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_generator_rigorous() {
        let op = DiagonalOperator::scalar(ZERO);
        let u0 = FiniteVector::from_real(&[1.0, 0.5]);
        let res = evolve_c0(
            &op,
            &GeneratorBounds::new(1.0, 0.0),
            &u0,
            1.0,
            0.5,
            &RegularizedConfig::new(QuadratureMode::Rigorous),
        )
        .unwrap();
        assert!(res.solutions[0].distance(&u0) <= 0.5);
        assert!(res.error.certified_total.unwrap() <= 0.5 * (1.0 + 1e-12));
    }

    #[test]
    fn scalar_regularization_identity() {
        // For Re a < ω the regularized integral reproduces e^{ta}.
        for a in [Complex64::new(-0.7, 0.0), Complex64::new(-0.2, 1.3)] {
            let op = DiagonalOperator::scalar(a);
            let res = evolve_c0(
                &op,
                &GeneratorBounds::new(1.0, 0.0),
                &FiniteVector::unit(1),
                1.0,
                1e-7,
                &RegularizedConfig::new(QuadratureMode::Practical),
            )
            .unwrap();
            let got = res.solutions[0].get(1);
            assert!(
                (got - a.exp()).norm() < 1e-6,
                "a = {a}: {got} vs {}",
                a.exp()
            );
        }
    }

    #[test]
    fn skew_phase_practical() {
        let op = DiagonalOperator::new(vec![Complex64::new(0.0, 2.5)]);
        let res = evolve_c0(
            &op,
            &GeneratorBounds::new(1.0, 0.0),
            &FiniteVector::unit(1),
            1.0,
            1e-6,
            &RegularizedConfig::new(QuadratureMode::Practical),
        )
        .unwrap();
        let exact = Complex64::new(0.0, 2.5).exp();
        assert!((res.solutions[0].get(1) - exact).norm() < 1e-5);
    }

    #[test]
    fn bounded_skew_graph() {
        let lap: Arc<dyn InfiniteOperator> = Arc::new(graph_laplacian(&[(1, 2), (2, 3)]).unwrap());
        let op = ScaledOperator::new(lap, Complex64::new(0.0, 1.0));
        let res = evolve_c0(
            &op,
            &GeneratorBounds::new(1.0, 0.0),
            &FiniteVector::unit(2),
            2.0,
            1e-6,
            &RegularizedConfig::new(QuadratureMode::Practical),
        )
        .unwrap();
        // exp(2iΔ) e2 for the path P3: eigenpairs 0, -1, -3.
        let s2 = 2f64.sqrt();
        let s3 = 3f64.sqrt();
        let v = [
            [1.0 / s3, 1.0 / s3, 1.0 / s3],
            [1.0 / s2, 0.0, -1.0 / s2],
            [
                1.0 / (6f64).sqrt(),
                -2.0 / (6f64).sqrt(),
                1.0 / (6f64).sqrt(),
            ],
        ];
        let lam = [0.0, -1.0, -3.0];
        for row in 0..3 {
            let mut exact = ZERO;
            for k in 0..3 {
                exact += v[k][row] * v[k][1] * Complex64::new(0.0, 2.0 * lam[k]).exp();
            }
            assert!(
                (res.solutions[0].get(row + 1) - exact).norm() < 1e-5,
                "row {row}"
            );
        }
    }

    #[test]
    fn rejects_bad_m() {
        let op = DiagonalOperator::scalar(ZERO);
        let err = evolve_c0(
            &op,
            &GeneratorBounds::new(0.5, 0.0),
            &FiniteVector::unit(1),
            1.0,
            0.1,
            &RegularizedConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }
}
