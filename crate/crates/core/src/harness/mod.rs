//! Test-case catalog, convergence sweeps, consistency maps and report
//! emission.

pub mod cases;
pub mod config;
pub mod consistency;
pub mod output;
pub mod selftest;

use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

use crate::grid::{build_stencil_family, discretize, stencil_with_points, BoundaryTrace, ConvexDomain, Field, Grid, StencilConfig};
use crate::schemes::{Scheme, SchemeKind};
use crate::solver::{damped_newton, NewtonOptions, NewtonReport, SolverError};

pub use cases::{make_case, TestCase, CASE_NAMES};
pub use config::{parse_config, RunConfig};
pub use consistency::{consistency_map, ConsistencyMap, MapScheme};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown test case '{0}'")]
    UnknownCase(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Scheme selection with stencil sizes given as point counts (8, 16, 24, 48).
#[derive(Clone, Debug, PartialEq)]
pub enum SchemeChoice {
    Fd,
    Ws { points: usize },
    Lbr { interior_points: usize, boundary_points: usize, layer: i64 },
    LbrExtensive { interior_points: usize, boundary_points: usize, layer: i64 },
}

impl SchemeChoice {
    pub fn lbr_default() -> Self {
        SchemeChoice::Lbr { interior_points: 8, boundary_points: 48, layer: 4 }
    }

    pub fn label(&self) -> String {
        match self {
            SchemeChoice::Fd => "fd".into(),
            SchemeChoice::Ws { points } => format!("ws{points}"),
            SchemeChoice::Lbr { .. } => "lbr".into(),
            SchemeChoice::LbrExtensive { .. } => "lbr-extensive".into(),
        }
    }

    fn stencil(points: usize) -> Result<crate::lattice::Stencil, HarnessError> {
        stencil_with_points(points)
            .ok_or_else(|| HarnessError::Config(format!("stencil size {points} not in {{8, 16, 24, 48}}")))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        match *self {
            SchemeChoice::Fd => Ok(()),
            SchemeChoice::Ws { points } => Self::stencil(points).map(|_| ()),
            SchemeChoice::Lbr { interior_points, boundary_points, layer }
            | SchemeChoice::LbrExtensive { interior_points, boundary_points, layer } => {
                Self::stencil(interior_points)?;
                Self::stencil(boundary_points)?;
                if layer < 0 {
                    return Err(HarnessError::Config("stencil layer must be nonnegative".into()));
                }
                Ok(())
            }
        }
    }

    pub fn build(&self, grid: &Grid) -> Result<Scheme, HarnessError> {
        let family = |ip: usize, bp: usize, layer: i64| -> Result<_, HarnessError> {
            let cfg = StencilConfig { interior: Self::stencil(ip)?, boundary: Self::stencil(bp)?, boundary_layer_width: layer };
            Ok(build_stencil_family(grid, &cfg)?)
        };
        let kind = match *self {
            SchemeChoice::Fd => SchemeKind::Fd,
            SchemeChoice::Ws { points } => SchemeKind::Ws(Self::stencil(points)?),
            SchemeChoice::Lbr { interior_points, boundary_points, layer } => {
                SchemeKind::LbrAdaptive(family(interior_points, boundary_points, layer)?)
            }
            SchemeChoice::LbrExtensive { interior_points, boundary_points, layer } => {
                SchemeKind::LbrExtensive(family(interior_points, boundary_points, layer)?)
            }
        };
        Ok(Scheme::new(kind))
    }
}

/// A test case discretized on the unit square at resolution n.
pub struct Problem {
    pub grid: Grid,
    /// h⁴ ρ(h x).
    pub rho: Vec<f64>,
    /// x ↦ U(h x).
    pub sigma: BoundaryTrace,
    /// U(h x) on the grid.
    pub exact: Vec<f64>,
}

impl Problem {
    pub fn new(case: &TestCase, n: usize) -> Result<Self, HarnessError> {
        let grid = discretize(&ConvexDomain::unit_square(), n)?;
        let h = grid.scale_h();
        let h4 = h.powi(4);
        let rho = grid.points().iter().map(|x| h4 * (case.rho)([x.a as f64 * h, x.b as f64 * h])).collect();
        let u = case.exact.clone();
        let sigma: BoundaryTrace = Arc::new(move |p: [f64; 2]| u([p[0] * h, p[1] * h]));
        let exact = grid.points().iter().map(|x| sigma(x.to_f64())).collect();
        Ok(Problem { grid, rho, sigma, exact })
    }

    pub fn exact_field(&self) -> Field {
        Field { values: self.exact.clone(), trace: self.sigma.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorNorms {
    pub linf: f64,
    pub l2: f64,
    pub l1: f64,
}

/// Errors against the exact values; L² and L¹ weighted by the cell area h².
pub fn error_norms(u: &[f64], exact: &[f64], h: f64) -> ErrorNorms {
    let mut linf = 0.0f64;
    let mut s2 = 0.0;
    let mut s1 = 0.0;
    for (a, b) in u.iter().zip(exact) {
        let d = (a - b).abs();
        linf = linf.max(d);
        s2 += d * d;
        s1 += d;
    }
    ErrorNorms { linf, l2: (h * h * s2).sqrt(), l1: h * h * s1 }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub case: String,
    pub scheme: String,
    pub n: usize,
    pub errors: ErrorNorms,
    pub newton_iters: usize,
    pub wall_seconds: f64,
    pub status: String,
}

/// Outcome of one solve.
pub struct SolveOutcome {
    pub problem: Problem,
    pub result: Result<(Field, NewtonReport), SolverError>,
    pub wall_seconds: f64,
}

pub fn solve_case(case: &TestCase, choice: &SchemeChoice, n: usize, opts: &NewtonOptions) -> Result<SolveOutcome, HarnessError> {
    let t0 = Instant::now();
    let problem = Problem::new(case, n)?;
    let scheme = choice.build(&problem.grid)?;
    let result = damped_newton(&problem.grid, &scheme, &problem.rho, &problem.sigma, opts);
    Ok(SolveOutcome { problem, result, wall_seconds: t0.elapsed().as_secs_f64() })
}

fn status_of(err: &SolverError) -> &'static str {
    match err {
        SolverError::InvalidInput(_) => "invalid_input",
        SolverError::InitializationFailed(_) => "initialization_failed",
        SolverError::LinearSolveFailed { .. } => "linear_solve_failed",
        SolverError::StallDetected { .. } => "stall",
        SolverError::Scheme(_) => "scheme_error",
        SolverError::Grid(_) => "grid_error",
    }
}

/// One row per grid size; solver failures become rows with a status.
pub fn run_convergence(config: &RunConfig) -> Result<Vec<ConvergenceRow>, HarnessError> {
    config.scheme.validate()?;
    let case = make_case(&config.case)?;
    let mut rows = Vec::with_capacity(config.sizes.len());
    for &n in &config.sizes {
        let out = solve_case(&case, &config.scheme, n, &config.newton)?;
        let h = out.problem.grid.scale_h();
        let (errors, iters, status) = match &out.result {
            Ok((field, rep)) => (
                error_norms(&field.values, &out.problem.exact, h),
                rep.iterations,
                if rep.converged { "converged" } else { "max_iterations" }.to_string(),
            ),
            Err(e) => {
                let nan = ErrorNorms { linf: f64::NAN, l2: f64::NAN, l1: f64::NAN };
                let iters = match e {
                    SolverError::LinearSolveFailed { report, .. } | SolverError::StallDetected { report, .. } => {
                        report.iterations
                    }
                    _ => 0,
                };
                (nan, iters, status_of(e).to_string())
            }
        };
        rows.push(ConvergenceRow {
            case: case.name.to_string(),
            scheme: config.scheme.label(),
            n,
            errors,
            newton_iters: iters,
            wall_seconds: out.wall_seconds,
            status,
        });
    }
    Ok(rows)
}

/// Least-squares slope of −log(error) against log(n).
pub fn estimated_order(ns: &[usize], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| -e.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
