use std::f64::consts::FRAC_PI_3;
use std::sync::Arc;

use crate::lattice::SymMatrix2;

use super::HarnessError;

pub type ScalarFn = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;

/// Synthetic problem on the unit square with closed-form solution.
#[derive(Clone)]
pub struct TestCase {
    pub name: &'static str,
    /// Exact solution U.
    pub exact: ScalarFn,
    /// det ∇²U.
    pub rho: ScalarFn,
}

impl std::fmt::Debug for TestCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TestCase").field("name", &self.name).finish_non_exhaustive()
    }
}

pub const CASE_NAMES: [&str; 4] = ["quadratic", "smoothed_cone", "flat", "singular"];

pub const CONE_DELTA: f64 = 0.1;
pub const FLAT_R0: f64 = 0.2;
pub const FLAT_EPS: f64 = 1e-6;
const CENTER: [f64; 2] = [0.5, 0.5];

/// M(10, π/3).
pub fn quadratic_matrix() -> SymMatrix2 {
    SymMatrix2::from_kappa_theta(10.0, FRAC_PI_3)
}

fn dist(p: [f64; 2], c: [f64; 2]) -> f64 {
    (p[0] - c[0]).hypot(p[1] - c[1])
}

pub fn make_case(name: &str) -> Result<TestCase, HarnessError> {
    let name = CASE_NAMES
        .iter()
        .find(|&&n| n == name || n.replace('_', "-") == name)
        .copied()
        .ok_or_else(|| HarnessError::UnknownCase(name.to_string()))?;
    Ok(match name {
        "quadratic" => {
            let m = quadratic_matrix();
            let det = m.det();
            TestCase { name, exact: Arc::new(move |p| 0.5 * m.quad_f64(p)), rho: Arc::new(move |_| det) }
        }
        "smoothed_cone" => {
            let d2 = CONE_DELTA * CONE_DELTA;
            TestCase {
                name,
                exact: Arc::new(move |p| (d2 + dist(p, CENTER).powi(2)).sqrt()),
                rho: Arc::new(move |p| {
                    let s = d2 + dist(p, CENTER).powi(2);
                    d2 / (s * s)
                }),
            }
        }
        "flat" => TestCase {
            name,
            exact: Arc::new(|p| {
                let r = dist(p, CENTER);
                (r - FLAT_R0).max(0.0).powi(2) + 0.5 * FLAT_EPS * r * r
            }),
            rho: Arc::new(|p| {
                let r = dist(p, CENTER);
                if r > FLAT_R0 {
                    (2.0 + FLAT_EPS) * (2.0 * (r - FLAT_R0) + FLAT_EPS * r) / r
                } else {
                    FLAT_EPS * FLAT_EPS
                }
            }),
        },
        "singular" => TestCase {
            name,
            exact: Arc::new(|p| -(2.0 - p[0] * p[0] - p[1] * p[1]).sqrt()),
            rho: Arc::new(|p| {
                let s = 2.0 - p[0] * p[0] - p[1] * p[1];
                2.0 / (s * s)
            }),
        },
        _ => unreachable!(),
    })
}
