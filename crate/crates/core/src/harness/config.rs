//! Flat `key = value` run configuration.
//!
//! ```text
//! # comment
//! case = smoothed_cone
//! scheme = lbr
//! stencil.interior_points = 8
//! stencil.boundary_points = 48
//! stencil.layer = 4
//! sizes = 17, 33, 65
//! newton.delta = 0.7
//! newton.tol = 1e-10
//! output.dir = out
//! ```

use std::path::PathBuf;

use crate::solver::NewtonOptions;

use super::{make_case, HarnessError, SchemeChoice};

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub case: String,
    pub scheme: SchemeChoice,
    pub sizes: Vec<usize>,
    pub newton: NewtonOptions,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(case: &str, scheme: SchemeChoice, sizes: Vec<usize>) -> Self {
        RunConfig { case: case.to_string(), scheme, sizes, newton: NewtonOptions::default(), output_dir: None }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        make_case(&self.case)?;
        self.scheme.validate()?;
        if self.sizes.is_empty() {
            return Err(HarnessError::Config("sizes must not be empty".into()));
        }
        if let Some(&n) = self.sizes.iter().find(|&&n| n < 4) {
            return Err(HarnessError::Config(format!("grid size {n} below 4")));
        }
        self.newton.validate().map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Parameter echo, one `key = value` per line, in schema order.
    pub fn echo(&self) -> Vec<(String, String)> {
        let mut out = vec![("case".to_string(), self.case.clone())];
        let (name, ip, bp, layer) = match &self.scheme {
            SchemeChoice::Fd => ("fd", None, None, None),
            SchemeChoice::Ws { points } => ("ws", Some(*points), None, None),
            SchemeChoice::Lbr { interior_points, boundary_points, layer } => {
                ("lbr", Some(*interior_points), Some(*boundary_points), Some(*layer))
            }
            SchemeChoice::LbrExtensive { interior_points, boundary_points, layer } => {
                ("lbr-extensive", Some(*interior_points), Some(*boundary_points), Some(*layer))
            }
        };
        out.push(("scheme".into(), name.into()));
        if let Some(v) = ip {
            out.push(("stencil.interior_points".into(), v.to_string()));
        }
        if let Some(v) = bp {
            out.push(("stencil.boundary_points".into(), v.to_string()));
        }
        if let Some(v) = layer {
            out.push(("stencil.layer".into(), v.to_string()));
        }
        let sizes: Vec<String> = self.sizes.iter().map(|n| n.to_string()).collect();
        out.push(("sizes".into(), sizes.join(",")));
        out.push(("newton.delta".into(), self.newton.damping_base.to_string()));
        out.push(("newton.tol".into(), self.newton.residual_tolerance.to_string()));
        out.push(("newton.max_iterations".into(), self.newton.max_outer_iterations.to_string()));
        out.push(("newton.kmax".into(), self.newton.max_damping_exponent.to_string()));
        if let Some(d) = &self.output_dir {
            out.push(("output.dir".into(), d.display().to_string()));
        }
        out
    }
}

fn bad(key: &str, value: &str) -> HarnessError {
    HarnessError::Config(format!("invalid value '{value}' for '{key}'"))
}

pub fn parse_sizes(value: &str) -> Result<Vec<usize>, HarnessError> {
    value
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|_| bad("sizes", s)))
        .collect()
}

/// Scheme from its name and stencil parameters.
pub fn scheme_choice(name: &str, interior: usize, boundary: usize, layer: i64) -> Result<SchemeChoice, HarnessError> {
    let choice = match name {
        "fd" => SchemeChoice::Fd,
        "ws" => SchemeChoice::Ws { points: interior },
        "lbr" | "lbr-adaptive" => SchemeChoice::Lbr { interior_points: interior, boundary_points: boundary, layer },
        "lbr-extensive" => SchemeChoice::LbrExtensive { interior_points: interior, boundary_points: boundary, layer },
        other => return Err(HarnessError::Config(format!("unknown scheme '{other}'"))),
    };
    choice.validate()?;
    Ok(choice)
}

pub fn parse_config(text: &str) -> Result<RunConfig, HarnessError> {
    let mut case = None;
    let mut scheme = "lbr".to_string();
    let mut interior = 8usize;
    let mut boundary = 48usize;
    let mut layer = 4i64;
    let mut sizes = None;
    let mut newton = NewtonOptions::default();
    let mut output_dir = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(HarnessError::Config(format!("line {}: expected key = value", lineno + 1)));
        };
        let (key, value) = (key.trim(), value.trim());
        match key {
            "case" => case = Some(value.to_string()),
            "scheme" => scheme = value.to_string(),
            "stencil.interior_points" => interior = value.parse().map_err(|_| bad(key, value))?,
            "stencil.boundary_points" => boundary = value.parse().map_err(|_| bad(key, value))?,
            "stencil.layer" => layer = value.parse().map_err(|_| bad(key, value))?,
            "sizes" => sizes = Some(parse_sizes(value)?),
            "newton.delta" => newton.damping_base = value.parse().map_err(|_| bad(key, value))?,
            "newton.tol" => newton.residual_tolerance = value.parse().map_err(|_| bad(key, value))?,
            "newton.max_iterations" => newton.max_outer_iterations = value.parse().map_err(|_| bad(key, value))?,
            "newton.kmax" => newton.max_damping_exponent = value.parse().map_err(|_| bad(key, value))?,
            "output.dir" => output_dir = Some(PathBuf::from(value)),
            _ => return Err(HarnessError::Config(format!("line {}: unknown key '{key}'", lineno + 1))),
        }
    }
    let cfg = RunConfig {
        case: case.ok_or_else(|| HarnessError::Config("missing key 'case'".into()))?,
        scheme: scheme_choice(&scheme, interior, boundary, layer)?,
        sizes: sizes.ok_or_else(|| HarnessError::Config("missing key 'sizes'".into()))?,
        newton,
        output_dir,
    };
    cfg.validate()?;
    Ok(cfg)
}
