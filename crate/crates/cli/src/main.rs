use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mongeampere::harness::consistency::{linspace, theta_samples};
use mongeampere::harness::output::{manifest, map_csv, sweep_csv, write_file};
use mongeampere::harness::{consistency_map, error_norms, make_case, parse_config, run_convergence, selftest, solve_case, HarnessError, MapScheme, RunConfig};
use mongeampere::grid::stencil_with_points;

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(name = "mongeampere", version, about = "Monotone Monge-Ampere solvers on Cartesian grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one test case at one resolution.
    Solve(RunArgs),
    /// Convergence sweep over several resolutions, written as CSV.
    Sweep(RunArgs),
    /// Relative consistency error of a scheme on quadratic forms.
    ConsistencyMap(MapArgs),
    /// Run the built-in invariant checks.
    Selftest,
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// quadratic, smoothed_cone, flat or singular.
    #[arg(long)]
    case: Option<String>,
    /// fd, ws, lbr or lbr-extensive.
    #[arg(long)]
    scheme: Option<String>,
    /// Comma separated grid sizes n (solve uses the first).
    #[arg(long)]
    sizes: Option<String>,
    /// Interior stencil size (8, 16, 24 or 48).
    #[arg(long)]
    stencil_points: Option<usize>,
    /// Boundary layer stencil size.
    #[arg(long)]
    boundary_points: Option<usize>,
    /// Boundary layer width in grid cells.
    #[arg(long)]
    layer: Option<i64>,
    /// Newton residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write 0 in the wall time column so the CSV is reproducible byte for byte.
    #[arg(long)]
    no_timings: bool,
}

#[derive(Args)]
struct MapArgs {
    /// fd, ws or lbr.
    #[arg(long)]
    scheme: String,
    #[arg(long, default_value_t = 8)]
    stencil_points: usize,
    #[arg(long, default_value_t = 12.0)]
    kappa_max: f64,
    #[arg(long, default_value_t = 50)]
    kappa_samples: usize,
    #[arg(long, default_value_t = 50)]
    theta_samples: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Solver(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Solver(_) => Failure::Solver(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

fn resolve(args: &RunArgs) -> Result<RunConfig, Failure> {
    let mut text = match &args.config {
        Some(p) => fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    // command line flags are appended so they override the file
    let mut push = |k: &str, v: String| {
        text.push_str(&format!("\n{k} = {v}"));
    };
    if let Some(c) = &args.case {
        push("case", c.clone());
    }
    if let Some(s) = &args.scheme {
        push("scheme", s.clone());
    }
    if let Some(s) = &args.sizes {
        push("sizes", s.clone());
    }
    if let Some(p) = args.stencil_points {
        push("stencil.interior_points", p.to_string());
    }
    if let Some(p) = args.boundary_points {
        push("stencil.boundary_points", p.to_string());
    }
    if let Some(l) = args.layer {
        push("stencil.layer", l.to_string());
    }
    if let Some(t) = args.tol {
        push("newton.tol", t.to_string());
    }
    if let Some(o) = &args.out {
        push("output.dir", o.display().to_string());
    }
    Ok(parse_config(&text)?)
}

fn solve(args: &RunArgs) -> Result<(), Failure> {
    let cfg = resolve(args)?;
    let n = cfg.sizes[0];
    let case = make_case(&cfg.case)?;
    let out = solve_case(&case, &cfg.scheme, n, &cfg.newton)?;
    let (field, rep) = out.result.map_err(|e| Failure::Solver(e.to_string()))?;
    let h = out.problem.grid.scale_h();
    let err = error_norms(&field.values, &out.problem.exact, h);
    println!("case = {}", cfg.case);
    println!("scheme = {}", cfg.scheme.label());
    println!("n = {n}");
    println!("points = {}", out.problem.grid.len());
    println!("converged = {}", rep.converged);
    println!("newton_iters = {}", rep.iterations);
    println!("scaled_residual = {:e}", rep.final_scaled_residual());
    println!("error_linf = {}", err.linf);
    println!("error_l2 = {}", err.l2);
    println!("wall_seconds = {:.3}", out.wall_seconds);
    if let Some(dir) = &cfg.output_dir {
        let mut csv = String::from("x,y,u,exact\n");
        for (i, x) in out.problem.grid.points().iter().enumerate() {
            let p = out.problem.grid.physical(x.to_f64());
            writeln!(csv, "{},{},{},{}", p[0], p[1], field.values[i], out.problem.exact[i]).unwrap();
        }
        write_file(dir, "solution.csv", &csv)?;
        let mut params = cfg.echo();
        params.push(("n".into(), n.to_string()));
        write_file(dir, "manifest.txt", &manifest("solve", &params, &["solution.csv".into()]))?;
    }
    if !rep.converged {
        return Err(Failure::Solver(format!("no convergence after {} iterations", rep.iterations)));
    }
    Ok(())
}

fn sweep(args: &RunArgs) -> Result<(), Failure> {
    let cfg = resolve(args)?;
    let rows = run_convergence(&cfg)?;
    let csv = sweep_csv(&rows, !args.no_timings);
    match &cfg.output_dir {
        Some(dir) => {
            write_file(dir, "sweep.csv", &csv)?;
            let mut params = cfg.echo();
            params.push(("timings".into(), (!args.no_timings).to_string()));
            write_file(dir, "manifest.txt", &manifest("sweep", &params, &["sweep.csv".into()]))?;
            eprintln!("wrote {}", dir.join("sweep.csv").display());
        }
        None => print!("{csv}"),
    }
    if let Some(r) = rows.iter().find(|r| r.status != "converged") {
        return Err(Failure::Solver(format!("n = {}: {}", r.n, r.status)));
    }
    Ok(())
}

fn consistency(args: &MapArgs) -> Result<(), Failure> {
    let stencil = || {
        stencil_with_points(args.stencil_points)
            .ok_or_else(|| Failure::Config(format!("stencil size {} not in {{8, 16, 24, 48}}", args.stencil_points)))
    };
    let scheme = match args.scheme.as_str() {
        "fd" => MapScheme::Fd,
        "ws" => MapScheme::Ws(stencil()?),
        "lbr" => MapScheme::Lbr(stencil()?),
        other => return Err(Failure::Config(format!("unknown scheme '{other}' (fd, ws or lbr)"))),
    };
    if !(args.kappa_max >= 1.0) || args.kappa_samples == 0 || args.theta_samples == 0 {
        return Err(Failure::Config("need kappa-max >= 1 and positive sample counts".into()));
    }
    let kappas = linspace(1.0, args.kappa_max, args.kappa_samples);
    let thetas = theta_samples(args.theta_samples);
    let map = consistency_map(&scheme, &kappas, &thetas).map_err(|e| Failure::Config(e.to_string()))?;
    let csv = map_csv(&map);
    match &args.out {
        Some(dir) => {
            write_file(dir, "consistency.csv", &csv)?;
            let params = vec![
                ("scheme".to_string(), args.scheme.clone()),
                ("stencil_points".into(), args.stencil_points.to_string()),
                ("kappa_max".into(), args.kappa_max.to_string()),
                ("kappa_samples".into(), args.kappa_samples.to_string()),
                ("theta_samples".into(), args.theta_samples.to_string()),
            ];
            write_file(dir, "manifest.txt", &manifest("consistency-map", &params, &["consistency.csv".into()]))?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn run_selftest() -> Result<(), Failure> {
    let checks = selftest::run();
    let mut failed = 0;
    for c in &checks {
        println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        failed += usize::from(!c.passed);
    }
    if failed > 0 {
        return Err(Failure::Solver(format!("{failed} of {} checks failed", checks.len())));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Solve(a) => solve(a),
        Command::Sweep(a) => sweep(a),
        Command::ConsistencyMap(a) => consistency(a),
        Command::Selftest => run_selftest(),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Solver(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_SOLVER)
        }
    }
}
