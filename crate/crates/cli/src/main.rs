use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use certexp::contour::stability_metric;
use certexp::operators::{graph_laplacian, grid_graph_edges, parse_operator_spec, ScaledOperator};
use certexp::regularized::RegularizedConfig;
use certexp::vector::{format_real, format_vector, parse_vector};
use certexp::{
    evolve_analytic, evolve_c0, evolve_fractional, AnalyticConfig, Error, EvolutionResult,
    FiniteVector, GeneratorBounds, InfiniteOperator, QuadratureMode, RangeRegion,
};
use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

const EXIT_TOLERANCE: u8 = 2;
const EXIT_INVALID: u8 = 3;

#[derive(Parser)]
#[command(
    name = "certexp",
    version,
    about = "Certified exp(tA)u0 for infinite matrices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scalar stability metric M_N = max_t |1 - Q_N(t)| of the hyperbolic rule, as CSV.
    Stability(StabilityArgs),
    /// Evolve an initial vector under an operator given as a JSON spec.
    Evolve(EvolveArgs),
    /// Heat or Schrödinger evolution on a square grid graph.
    DemoGraph(DemoArgs),
}

#[derive(clap::Args)]
struct StabilityArgs {
    #[arg(long, default_value_t = 0.1)]
    t0: f64,
    /// Comma-separated ratios t1/t0.
    #[arg(long, value_delimiter = ',', default_value = "1,10,100")]
    lambda_t: Vec<f64>,
    /// Node counts: comma list or `start:end[:step]`.
    #[arg(long, default_value = "10:200:2")]
    n: String,
    #[arg(long, default_value_t = 3.0)]
    beta: f64,
    #[arg(long, default_value_t = 201)]
    samples: usize,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Mode {
    Analytic,
    C0,
    Fractional,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Quadrature {
    Rigorous,
    Practical,
}

impl From<Quadrature> for QuadratureMode {
    fn from(q: Quadrature) -> Self {
        match q {
            Quadrature::Rigorous => QuadratureMode::Rigorous,
            Quadrature::Practical => QuadratureMode::Practical,
        }
    }
}

#[derive(clap::Args, Serialize)]
struct EvolveArgs {
    /// Operator spec (JSON).
    #[arg(long)]
    operator: PathBuf,
    /// Initial vector (`index re im` per line).
    #[arg(long)]
    u0: PathBuf,
    #[arg(long, value_enum)]
    mode: Mode,
    /// Comma-separated output times.
    #[arg(long, value_delimiter = ',', required = true)]
    times: Vec<f64>,
    /// Contour window start (defaults to the smallest time).
    #[arg(long)]
    t0: Option<f64>,
    /// Contour window end (defaults to the largest time).
    #[arg(long)]
    t1: Option<f64>,
    /// Total error target for c0 mode.
    #[arg(long)]
    tol: Option<f64>,
    /// Resolvent error target for contour modes.
    #[arg(long, default_value_t = 1e-10)]
    eta: f64,
    /// Nodes per half-contour.
    #[arg(long = "nodes", default_value_t = 60)]
    n: usize,
    #[arg(long, default_value_t = 3.0)]
    beta: f64,
    /// Sector half-opening: the spectrum lies within this angle of the negative real axis.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    iota: Option<f64>,
    /// Hille–Yosida constant M.
    #[arg(long = "m")]
    m: Option<f64>,
    /// Hille–Yosida growth bound ω.
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long, value_enum, default_value = "practical")]
    quadrature: Quadrature,
    /// Numerical-range enclosure as JSON, e.g. `{"kind":"half_plane","max_re":0}`.
    #[arg(long)]
    range_region: Option<String>,
    /// Constant K in ||R(z)|| <= K/|z| on the sector.
    #[arg(long)]
    sector_constant: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Equation {
    Heat,
    Schrodinger,
}

#[derive(clap::Args, Serialize)]
struct DemoArgs {
    #[arg(long, default_value_t = 10)]
    grid_side: usize,
    #[arg(long, value_enum, default_value = "heat")]
    equation: Equation,
    #[arg(long, value_delimiter = ',', default_value = "0.1,1,10")]
    times: Vec<f64>,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Nodes per half-contour (heat).
    #[arg(long = "nodes", default_value_t = 80)]
    n: usize,
    #[arg(long, value_enum, default_value = "practical")]
    quadrature: Quadrature,
    #[arg(long)]
    out: PathBuf,
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Invalid(String),
    Tolerance(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::ToleranceNotMet { .. }
            | Error::ResolventToleranceNotMet { .. }
            | Error::CeilingExceeded { .. } => Failure::Tolerance(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Stability(args) => cmd_stability(&args),
        Command::Evolve(args) => cmd_evolve(&args),
        Command::DemoGraph(args) => cmd_demo_graph(&args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INVALID)
        }
        Err(Failure::Tolerance(msg)) => {
            eprintln!("tolerance not met: {msg}");
            ExitCode::from(EXIT_TOLERANCE)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("io error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn parse_n_list(text: &str) -> Result<Vec<usize>, Failure> {
    let bad = || Failure::Invalid(format!("cannot parse node list {text:?}"));
    if text.contains(':') {
        let parts: Vec<usize> = text
            .split(':')
            .map(|p| p.trim().parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        let (start, end, step) = match parts[..] {
            [a, b] => (a, b, 1),
            [a, b, s] => (a, b, s),
            _ => return Err(bad()),
        };
        if step == 0 || start > end {
            return Err(bad());
        }
        Ok((start..=end).step_by(step).collect())
    } else {
        text.split(',')
            .map(|p| p.trim().parse().map_err(|_| bad()))
            .collect()
    }
}

fn cmd_stability(args: &StabilityArgs) -> Result<(), Failure> {
    let ns = parse_n_list(&args.n)?;
    let mut csv = String::from("N,lambda_t,M_N\n");
    for &lambda_t in &args.lambda_t {
        if !(lambda_t >= 1.0) {
            return Err(Failure::Invalid(format!(
                "lambda_t must be >= 1, got {lambda_t}"
            )));
        }
        for &n in &ns {
            let m = stability_metric(args.t0, lambda_t, n, args.beta, args.samples)?;
            csv.push_str(&format!(
                "{n},{},{}\n",
                format_real(lambda_t),
                format_real(m)
            ));
        }
    }
    match &args.out {
        Some(path) => fs::write(path, csv).map_err(|e| io_error(path, e)),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn require<T: Copy>(value: Option<T>, flag: &str, mode: &str) -> Result<T, Failure> {
    value.ok_or_else(|| Failure::Invalid(format!("--{flag} is required for mode {mode}")))
}

fn check_times(times: &[f64]) -> Result<(), Failure> {
    if times.is_empty() {
        return Err(Failure::Invalid("at least one time is required".into()));
    }
    if let Some(t) = times.iter().find(|t| !(**t > 0.0) || !t.is_finite()) {
        return Err(Failure::Invalid(format!(
            "times must be positive and finite, got {t}"
        )));
    }
    Ok(())
}

/// Outcome of one library call: a result or a tolerance failure that may
/// carry a partial result.
struct Run {
    result: Option<EvolutionResult>,
    failure: Option<String>,
}

fn run(outcome: Result<EvolutionResult, Error>) -> Result<Run, Failure> {
    match outcome {
        Ok(result) => Ok(Run {
            result: Some(result),
            failure: None,
        }),
        Err(Error::ToleranceNotMet { detail, partial }) => Ok(Run {
            result: partial.map(|p| *p),
            failure: Some(detail),
        }),
        Err(e @ (Error::ResolventToleranceNotMet { .. } | Error::CeilingExceeded { .. })) => {
            Ok(Run {
                result: None,
                failure: Some(e.to_string()),
            })
        }
        Err(e) => Err(e.into()),
    }
}

fn run_json(result: &EvolutionResult) -> Value {
    let mut value = serde_json::to_value(result).expect("results serialize");
    if let Value::Object(map) = &mut value {
        map.remove("solutions");
        map.insert(
            "certified".into(),
            json!(result.error.certified_total.is_some()),
        );
    }
    value
}

/// Writes `solution_<i>.txt` per time and `report.json`; returns the tolerance
/// failure, if any, after everything is on disk.
fn write_outputs(
    out: &Path,
    command: &str,
    params: Value,
    runs: &[Run],
    extra: Value,
) -> Result<(), Failure> {
    fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    let mut files = Vec::new();
    let mut times = Vec::new();
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for run in runs {
        if let Some(result) = &run.result {
            for (t, v) in result.times.iter().zip(&result.solutions) {
                let name = format!("solution_{}.txt", files.len());
                let path = out.join(&name);
                fs::write(&path, format_vector(v)).map_err(|e| io_error(&path, e))?;
                files.push(name);
                times.push(*t);
            }
            reports.push(run_json(result));
        }
        if let Some(f) = &run.failure {
            failures.push(f.clone());
        }
    }
    let status = if failures.is_empty() {
        "ok"
    } else {
        "tolerance_not_met"
    };
    let mut report = json!({
        "command": command,
        "status": status,
        "failures": failures,
        "params": params,
        "times": times,
        "outputs": files,
        "runs": reports,
    });
    if let (Value::Object(map), Value::Object(more)) = (&mut report, extra) {
        map.extend(more);
    }
    let path = out.join("report.json");
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| io_error(&path, e))?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Tolerance(failures.join("; ")))
    }
}

fn cmd_evolve(args: &EvolveArgs) -> Result<(), Failure> {
    check_times(&args.times)?;
    let spec = parse_operator_spec(&read(&args.operator)?)?;
    let op = spec.build()?;
    let u0 = parse_vector(&read(&args.u0)?)?;
    let region = match &args.range_region {
        Some(text) => Some(
            serde_json::from_str::<RangeRegion>(text)
                .map_err(|e| Failure::Invalid(format!("--range-region: {e}")))?,
        ),
        None => None,
    };
    let params = serde_json::to_value(args).expect("flags serialize");

    let runs = match args.mode {
        Mode::Analytic | Mode::Fractional => {
            let name = if matches!(args.mode, Mode::Analytic) {
                "analytic"
            } else {
                "fractional"
            };
            let delta = require(args.delta, "delta", name)?;
            let mut bounds = GeneratorBounds::sectorial(delta);
            if let Some(r) = region {
                bounds = bounds.with_region(r);
            }
            if let Some(k) = args.sector_constant {
                bounds = bounds.with_sector_constant(k);
            }
            let mut config = AnalyticConfig::new(args.n, args.eta);
            config.beta = args.beta;
            if args.t0.is_some() || args.t1.is_some() {
                let lo = args.times.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = args.times.iter().cloned().fold(0.0, f64::max);
                config.window = Some((args.t0.unwrap_or(lo), args.t1.unwrap_or(hi)));
            }
            let outcome = match args.mode {
                Mode::Analytic => evolve_analytic(op.as_ref(), &bounds, &u0, &args.times, &config),
                _ => {
                    let iota = require(args.iota, "iota", name)?;
                    evolve_fractional(op.as_ref(), &bounds, &u0, &args.times, iota, &config)
                }
            };
            vec![run(outcome)?]
        }
        Mode::C0 => {
            let m = require(args.m, "m", "c0")?;
            let omega = require(args.omega, "omega", "c0")?;
            let tol = require(args.tol, "tol", "c0")?;
            let bounds = GeneratorBounds::new(m, omega);
            let config = RegularizedConfig::new(args.quadrature.into());
            args.times
                .iter()
                .map(|&t| run(evolve_c0(op.as_ref(), &bounds, &u0, t, tol, &config)))
                .collect::<Result<_, _>>()?
        }
    };
    write_outputs(&args.out, "evolve", params, &runs, json!({}))
}

fn cmd_demo_graph(args: &DemoArgs) -> Result<(), Failure> {
    if args.grid_side < 2 {
        return Err(Failure::Invalid(format!(
            "grid_side must be >= 2, got {}",
            args.grid_side
        )));
    }
    check_times(&args.times)?;
    if !(args.tol > 0.0) {
        return Err(Failure::Invalid(format!(
            "tol must be positive, got {}",
            args.tol
        )));
    }
    let side = args.grid_side;
    let laplacian: Arc<dyn InfiniteOperator> = Arc::new(graph_laplacian(&grid_graph_edges(side))?);
    let center = (side / 2) * side + side / 2 + 1;
    let u0 = FiniteVector::unit(center);
    let params = serde_json::to_value(args).expect("flags serialize");

    let runs = match args.equation {
        Equation::Heat => {
            // The Laplacian is self-adjoint and negative semidefinite, so its
            // numerical range lies on the ray (-∞, 0].
            let bounds = GeneratorBounds::sectorial(0.0).with_region(RangeRegion::Sector {
                vertex: Complex64::new(0.0, 0.0),
                half_angle: 0.0,
            });
            let config = AnalyticConfig::new(args.n, args.tol * 1e-2);
            vec![run(evolve_analytic(
                laplacian.as_ref(),
                &bounds,
                &u0,
                &args.times,
                &config,
            ))?]
        }
        Equation::Schrodinger => {
            let op = ScaledOperator::new(laplacian, Complex64::new(0.0, 1.0));
            let bounds = GeneratorBounds::new(1.0, 0.0);
            let config = RegularizedConfig::new(args.quadrature.into());
            args.times
                .iter()
                .map(|&t| run(evolve_c0(&op, &bounds, &u0, t, args.tol, &config)))
                .collect::<Result<_, _>>()?
        }
    };
    let masses: Vec<[f64; 2]> = runs
        .iter()
        .filter_map(|r| r.result.as_ref())
        .flat_map(|r| {
            r.solutions.iter().map(|v| {
                let s = v.sum();
                [s.re, s.im]
            })
        })
        .collect();
    let extra = json!({ "center": center, "initial_mass": 1.0, "mass": masses });
    write_outputs(&args.out, "demo-graph", params, &runs, extra)
}
