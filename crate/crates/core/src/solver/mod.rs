//! Convex initialization and damped Newton iteration.

pub mod init;
pub mod linear;

use std::time::Instant;

use thiserror::Error;

use crate::grid::{BoundaryTrace, Field, Grid, GridError};
use crate::lattice::Stencil;
use crate::schemes::{Discretization, Scheme, SchemeError, SchemeKind};

pub use init::{convex_start, ConvexStart, LowerEnvelope};
pub use linear::{relative_residual, sparse_solve, LinearSolveError};

#[derive(Debug, Error, Clone)]
pub enum SolverError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("initialization failed: {0}")]
    InitializationFailed(String),
    #[error("linear solve failed at iteration {iteration}: {source}")]
    LinearSolveFailed {
        iteration: usize,
        source: LinearSolveError,
        report: Box<NewtonReport>,
    },
    #[error("no damping exponent up to {k_max} keeps the operator positive (iteration {iteration})")]
    StallDetected {
        iteration: usize,
        k_max: u32,
        report: Box<NewtonReport>,
    },
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// How the damping exponent is picked among the gated candidates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum StepRule {
    /// First k whose residual is a local minimum in k.
    #[default]
    LocalMinimum,
    /// Smallest residual over all gated k ≤ k_max.
    GlobalMinimum,
}

#[derive(Clone, Debug)]
pub struct NewtonOptions {
    pub damping_base: f64,
    pub max_outer_iterations: usize,
    pub max_damping_exponent: u32,
    /// Bound on ‖D u − ρ‖∞ / h⁴.
    pub residual_tolerance: f64,
    /// Defaults to true for degenerate elliptic schemes.
    pub require_positivity: Option<bool>,
    pub step_rule: StepRule,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            damping_base: 0.7,
            max_outer_iterations: 200,
            max_damping_exponent: 40,
            residual_tolerance: 1e-10,
            require_positivity: None,
            step_rule: StepRule::LocalMinimum,
        }
    }
}

impl NewtonOptions {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.damping_base > 0.0 && self.damping_base < 1.0) {
            return Err(SolverError::InvalidInput(format!("damping base {} not in (0, 1)", self.damping_base)));
        }
        if !(self.residual_tolerance > 0.0) {
            return Err(SolverError::InvalidInput("residual tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct NewtonReport {
    /// Number of Newton steps taken.
    pub iterations: usize,
    /// ‖D u − ρ‖∞ in lattice units, one entry per visited iterate.
    pub residual_history: Vec<f64>,
    /// The same divided by h⁴.
    pub scaled_residual_history: Vec<f64>,
    pub damping_history: Vec<u32>,
    /// Steps whose accepted residual did not decrease.
    pub non_monotone_steps: Vec<usize>,
    pub step_seconds: Vec<f64>,
    /// min over X of D u for each iterate, the initial one included.
    pub min_operator_history: Vec<f64>,
    pub converged: bool,
    pub wall_time: f64,
    pub init_epsilon: Option<f64>,
}

impl NewtonReport {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::NAN)
    }

    pub fn final_scaled_residual(&self) -> f64 {
        self.scaled_residual_history.last().copied().unwrap_or(f64::NAN)
    }
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Boundary-layer directions of the scheme, used to sample the boundary.
fn scheme_directions(grid: &Grid, scheme: &Scheme) -> Stencil {
    match &scheme.kind {
        SchemeKind::Fd => Stencil::v8(),
        SchemeKind::Ws(s) => s.clone(),
        SchemeKind::LbrExtensive(f) | SchemeKind::LbrAdaptive(f) => {
            let mut out = Stencil::v8();
            let mut seen = std::collections::HashSet::new();
            for i in 0..grid.len() {
                let s = f.stencil(i);
                if seen.insert(s as *const Stencil) {
                    for e in s.iter() {
                        out.insert(e);
                    }
                }
            }
            out
        }
    }
}

/// Strictly convex initial field from the boundary data.
pub fn convex_init(grid: &Grid, sigma: &BoundaryTrace) -> Result<Field, SolverError> {
    convex_start(grid, sigma, &Stencil::v8())
        .map(|s| s.field)
        .map_err(SolverError::InitializationFailed)
}

/// Damped Newton from the convex initialization.
pub fn damped_newton(
    grid: &Grid,
    scheme: &Scheme,
    rho: &[f64],
    sigma: &BoundaryTrace,
    opts: &NewtonOptions,
) -> Result<(Field, NewtonReport), SolverError> {
    check_rho(grid, rho)?;
    let start = convex_start(grid, sigma, &scheme_directions(grid, scheme)).map_err(SolverError::InitializationFailed)?;
    let (field, mut report) = damped_newton_from(grid, scheme, rho, start.field, opts)?;
    report.init_epsilon = Some(start.epsilon);
    Ok((field, report))
}

fn check_rho(grid: &Grid, rho: &[f64]) -> Result<(), SolverError> {
    if rho.len() != grid.len() {
        return Err(SolverError::InvalidInput(format!("rho has {} entries, grid has {}", rho.len(), grid.len())));
    }
    if let Some(i) = rho.iter().position(|&r| !(r > 0.0 && r.is_finite())) {
        return Err(SolverError::InvalidInput(format!("rho must be positive, got {} at {}", rho[i], grid.point(i))));
    }
    Ok(())
}

/// Damped Newton from a given initial field.
pub fn damped_newton_from(
    grid: &Grid,
    scheme: &Scheme,
    rho: &[f64],
    initial: Field,
    opts: &NewtonOptions,
) -> Result<(Field, NewtonReport), SolverError> {
    opts.validate()?;
    check_rho(grid, rho)?;
    if initial.values.len() != grid.len() {
        return Err(GridError::FieldSizeMismatch { expected: grid.len(), got: initial.values.len() }.into());
    }
    let t0 = Instant::now();
    let gate = opts.require_positivity.unwrap_or(scheme.kind.is_degenerate_elliptic());
    let h4 = grid.scale_h().powi(4);
    let disc = Discretization::new(grid, scheme, &*initial.trace)?;
    let mut u = initial.values;
    let mut report = NewtonReport::default();
    let (mut res, mut jac) = disc.assemble(&u, rho);
    let mut r = norm_inf(&res);

    loop {
        let dmin = disc.values(&u).into_iter().fold(f64::INFINITY, f64::min);
        debug_assert!(!gate || report.iterations == 0 || dmin > 0.0);
        report.min_operator_history.push(dmin);
        report.residual_history.push(r);
        report.scaled_residual_history.push(r / h4);
        if r / h4 <= opts.residual_tolerance {
            report.converged = true;
            break;
        }
        if report.iterations >= opts.max_outer_iterations {
            break;
        }
        let ts = Instant::now();
        let it = report.iterations;
        let neg: Vec<f64> = res.iter().map(|x| -x).collect();
        let v = match sparse_solve(&jac, &neg) {
            Ok(v) => v,
            Err(source) => {
                report.wall_time = t0.elapsed().as_secs_f64();
                return Err(SolverError::LinearSolveFailed { iteration: it, source, report: Box::new(report) });
            }
        };

        let trial = |k: u32| -> (Vec<f64>, Option<f64>) {
            let s = opts.damping_base.powi(k as i32);
            let cand: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + s * b).collect();
            let vals = disc.values(&cand);
            if gate && !vals.iter().all(|&d| d > 0.0) {
                return (cand, None);
            }
            let rk = vals.iter().zip(rho).fold(0.0f64, |m, (d, p)| m.max((d - p).abs()));
            (cand, if rk.is_finite() { Some(rk) } else { None })
        };

        let k_max = opts.max_damping_exponent;
        let mut first = None;
        for k in 0..=k_max {
            let (cand, rk) = trial(k);
            if let Some(rk) = rk {
                first = Some((k, cand, rk));
                break;
            }
        }
        let Some((k0, c0, r0)) = first else {
            report.wall_time = t0.elapsed().as_secs_f64();
            return Err(SolverError::StallDetected { iteration: it, k_max, report: Box::new(report) });
        };

        let mut best = (k0, c0, r0);
        match opts.step_rule {
            StepRule::LocalMinimum => {
                let mut cur = (k0, best.1.clone(), r0);
                let mut accepted = false;
                while cur.0 < k_max {
                    let (cand, rn) = trial(cur.0 + 1);
                    let rn = rn.unwrap_or(f64::INFINITY);
                    if cur.2 <= rn {
                        accepted = true;
                        break;
                    }
                    cur = (cur.0 + 1, cand, rn);
                    if cur.2 < best.2 {
                        best = cur.clone();
                    }
                }
                if accepted || cur.0 == k_max {
                    // the last k has no successor and counts as a local minimum
                    best = cur;
                }
            }
            StepRule::GlobalMinimum => {
                for k in k0 + 1..=k_max {
                    let (cand, rk) = trial(k);
                    if let Some(rk) = rk {
                        if rk < best.2 {
                            best = (k, cand, rk);
                        }
                    }
                }
            }
        }

        let (k, cand, rk) = best;
        if rk >= r {
            report.non_monotone_steps.push(it);
        }
        u = cand;
        (res, jac) = disc.assemble(&u, rho);
        r = norm_inf(&res);
        report.damping_history.push(k);
        report.iterations += 1;
        report.step_seconds.push(ts.elapsed().as_secs_f64());
    }
    report.wall_time = t0.elapsed().as_secs_f64();
    Ok((Field { values: u, trace: initial.trace }, report))
}
