//! CSV tables and run manifests. Floats use Rust's shortest round-trip
//! formatting so identical inputs give identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{ConsistencyMap, ConvergenceRow, HarnessError};

pub const SWEEP_HEADER: &str = "case,scheme,n,error_linf,error_l2,error_l1,newton_iters,wall_seconds,status";

/// Sweep table. With `timings = false` the wall time column is written as 0
/// so that the file only depends on the configuration.
pub fn sweep_csv(rows: &[ConvergenceRow], timings: bool) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for r in rows {
        let wall = if timings { r.wall_seconds } else { 0.0 };
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.case, r.scheme, r.n, r.errors.linf, r.errors.l2, r.errors.l1, r.newton_iters, wall, r.status
        )
        .unwrap();
    }
    s
}

/// θ values across the first row, κ values down the first column.
pub fn map_csv(map: &ConsistencyMap) -> String {
    let mut s = String::from("kappa\\theta");
    for t in &map.thetas {
        write!(s, ",{t}").unwrap();
    }
    s.push('\n');
    for (k, row) in map.kappas.iter().zip(&map.errors) {
        write!(s, "{k}").unwrap();
        for e in row {
            write!(s, ",{e}").unwrap();
        }
        s.push('\n');
    }
    s
}

/// `key = value` lines describing a run.
pub fn manifest(command: &str, params: &[(String, String)], files: &[String]) -> String {
    let mut s = String::new();
    writeln!(s, "tool = {}", env!("CARGO_PKG_NAME")).unwrap();
    writeln!(s, "version = {}", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(s, "command = {command}").unwrap();
    for (k, v) in params {
        writeln!(s, "{k} = {v}").unwrap();
    }
    for f in files {
        writeln!(s, "output = {f}").unwrap();
    }
    s
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}
