use std::f64::consts::PI;

use crate::lattice::{Stencil, SymMatrix2};
use crate::schemes::{algebraic, SchemeError};

#[derive(Clone, Debug)]
pub enum MapScheme {
    Fd,
    Ws(Stencil),
    Lbr(Stencil),
}

impl MapScheme {
    /// Operator applied to x ↦ ½<x, M x>.
    pub fn apply(&self, m: &SymMatrix2) -> Result<f64, SchemeError> {
        Ok(match self {
            MapScheme::Fd => algebraic::fd(m),
            MapScheme::Ws(v) => algebraic::ws(m, v)?,
            MapScheme::Lbr(v) => algebraic::lbr(m, v),
        })
    }

    /// (D(u_M) − det M) / D(u_M).
    pub fn relative_error(&self, m: &SymMatrix2) -> Result<f64, SchemeError> {
        let v = self.apply(m)?;
        Ok((v - m.det()) / v)
    }
}

/// Relative consistency errors on a (κ, θ) grid; rows follow κ.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencyMap {
    pub kappas: Vec<f64>,
    pub thetas: Vec<f64>,
    pub errors: Vec<Vec<f64>>,
}

impl ConsistencyMap {
    pub fn entries(&self) -> impl Iterator<Item = f64> + '_ {
        self.errors.iter().flatten().copied()
    }

    pub fn min(&self) -> f64 {
        self.entries().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.entries().fold(0.0, |m, e| m.max(e.abs()))
    }

    /// Entries with |error| ≤ tol.
    pub fn zero_count(&self, tol: f64) -> usize {
        self.entries().filter(|&e| e.abs() <= tol).count()
    }
}

/// `count` equispaced values in [lo, hi].
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
    }
}

/// θ samples in [0, π].
pub fn theta_samples(count: usize) -> Vec<f64> {
    linspace(0.0, PI, count)
}

pub fn consistency_map(scheme: &MapScheme, kappas: &[f64], thetas: &[f64]) -> Result<ConsistencyMap, SchemeError> {
    let errors = kappas
        .iter()
        .map(|&k| thetas.iter().map(|&t| scheme.relative_error(&SymMatrix2::from_kappa_theta(k, t))).collect())
        .collect::<Result<_, _>>()?;
    Ok(ConsistencyMap { kappas: kappas.to_vec(), thetas: thetas.to_vec(), errors })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ws_exact_on_axis_aligned() {
        let m = consistency_map(&MapScheme::Ws(Stencil::v8()), &[1.0, 4.0, 9.0], &[0.0, PI / 2.0]).unwrap();
        assert!(m.max_abs() < 1e-15);
    }

    #[test]
    fn ws_positive_off_axis() {
        let m = consistency_map(&MapScheme::Ws(Stencil::v8()), &[8.0], &[1.0]).unwrap();
        assert!(m.errors[0][0] > 0.0);
    }

    #[test]
    fn lbr_zero_set_grows() {
        let k = linspace(1.0, 6.0, 12);
        let t = theta_samples(12);
        let small = consistency_map(&MapScheme::Lbr(Stencil::v8()), &k, &t).unwrap();
        let big = consistency_map(&MapScheme::Lbr(Stencil::ball(2.3).unwrap()), &k, &t).unwrap();
        assert!(big.zero_count(1e-12) >= small.zero_count(1e-12));
        assert!(big.zero_count(1e-12) > 0);
        assert!(small.min() >= -1e-14 && big.min() >= -1e-14);
    }
}
