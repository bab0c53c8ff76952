//! Strictly convex starting point from Dirichlet data: the lower convex
//! envelope of the lifted boundary samples σ − ε‖x − c‖², plus ε‖x − c‖².

use std::cmp::Ordering;

use crate::grid::{arm, BoundaryTrace, ConvexDomain, Field, Grid, Node};
use crate::lattice::Stencil;

/// Affine function z = a x + b y + c.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Plane {
    pub fn eval(&self, p: [f64; 2]) -> f64 {
        self.a * p[0] + self.b * p[1] + self.c
    }

    fn through(p: [f64; 3], q: [f64; 3], r: [f64; 3]) -> Plane {
        let (ux, uy, uz) = (q[0] - p[0], q[1] - p[1], q[2] - p[2]);
        let (vx, vy, vz) = (r[0] - p[0], r[1] - p[1], r[2] - p[2]);
        let det = ux * vy - uy * vx;
        let a = (uz * vy - uy * vz) / det;
        let b = (ux * vz - uz * vx) / det;
        Plane { a, b, c: p[2] - a * p[0] - b * p[1] }
    }
}

fn orient(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Lower hull facets of lifted points whose projections are in convex
/// position, listed counter-clockwise. Returns index triples.
pub fn lower_hull_convex_position(pts: &[[f64; 3]]) -> Vec<[usize; 3]> {
    let m = pts.len();
    let mut faces = Vec::new();
    if m < 3 {
        return faces;
    }
    let scale = pts.iter().fold(0.0f64, |s, p| s.max(p[0].abs()).max(p[1].abs())).max(1.0);
    let flat = 1e-12 * scale * scale;
    // chord (a, b): the chain a+1 .. b-1 lies to the left of a -> b traversed backwards
    let mut work = vec![(0usize, m - 1)];
    while let Some((a, b)) = work.pop() {
        if b <= a + 1 {
            continue;
        }
        let mut k: Option<usize> = None;
        for j in a + 1..b {
            if orient(pts[a], pts[j], pts[b]).abs() <= flat {
                continue;
            }
            match k {
                None => k = Some(j),
                Some(kk) => {
                    let plane = Plane::through(pts[a], pts[b], pts[kk]);
                    if pts[j][2] < plane.eval([pts[j][0], pts[j][1]]) {
                        k = Some(j);
                    }
                }
            }
        }
        let Some(k) = k else { continue };
        faces.push([a, k, b]);
        work.push((a, k));
        work.push((k, b));
    }
    faces
}

/// Convex envelope of lifted boundary samples, evaluated as the maximum of
/// the facet planes.
#[derive(Clone, Debug)]
pub struct LowerEnvelope {
    pub planes: Vec<Plane>,
}

impl LowerEnvelope {
    pub fn new(pts: &[[f64; 3]]) -> Self {
        let planes = lower_hull_convex_position(pts)
            .into_iter()
            .map(|[a, k, b]| Plane::through(pts[a], pts[k], pts[b]))
            .collect();
        LowerEnvelope { planes }
    }

    pub fn eval(&self, p: [f64; 2]) -> f64 {
        self.planes.iter().map(|pl| pl.eval(p)).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Boundary points used for the envelope: a uniform refinement plus every
/// crossing of the grid's V8 and boundary-layer arms, sorted by angle.
pub fn boundary_points(grid: &Grid, extra_dirs: &Stencil) -> Vec<[f64; 2]> {
    let domain = grid.domain();
    let (lo, hi) = domain.bounding_box();
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]).ceil() as usize;
    let mut pts = domain.boundary_samples(8 * extent.max(8));
    let dirs: Vec<_> = Stencil::v8().half().chain(extra_dirs.half()).collect();
    for &x in grid.points() {
        for &e in &dirs {
            let a = arm(grid, x, e, &|_| 0.0);
            for node in [a.plus, a.minus] {
                if let Node::Boundary { point, .. } = node {
                    pts.push(snap(domain, point));
                }
            }
        }
    }
    let c = domain.interior_point();
    let angle = |p: &[f64; 2]| (p[1] - c[1]).atan2(p[0] - c[0]);
    pts.sort_by(|p, q| angle(p).partial_cmp(&angle(q)).unwrap_or(Ordering::Equal));
    let tol = 1e-9 * (extent.max(1) as f64);
    let mut out: Vec<[f64; 2]> = Vec::with_capacity(pts.len());
    for p in pts {
        if out.last().map_or(true, |q| (p[0] - q[0]).hypot(p[1] - q[1]) > tol) {
            out.push(p);
        }
    }
    if out.len() > 1 {
        let (f, l) = (out[0], out[out.len() - 1]);
        if (f[0] - l[0]).hypot(f[1] - l[1]) <= tol {
            out.pop();
        }
    }
    out
}

fn snap(domain: &ConvexDomain, mut p: [f64; 2]) -> [f64; 2] {
    if let ConvexDomain::Box { min, max } = domain {
        for k in 0..2 {
            let tol = 1e-9 * (max[k] - min[k]);
            if (p[k] - min[k]).abs() <= tol {
                p[k] = min[k];
            } else if (p[k] - max[k]).abs() <= tol {
                p[k] = max[k];
            }
        }
    }
    p
}

/// Samples on each straight boundary piece, ordered along the piece.
fn straight_runs(domain: &ConvexDomain, pts: &[[f64; 2]]) -> Vec<Vec<usize>> {
    type OnEdge = Box<dyn Fn([f64; 2]) -> bool>;
    let edges: Vec<(OnEdge, [f64; 2])> = match domain {
        ConvexDomain::Disk { .. } => return Vec::new(),
        ConvexDomain::Box { min, max } => {
            let (min, max) = (*min, *max);
            vec![
                (Box::new(move |p: [f64; 2]| p[1] == min[1]), [1.0, 0.0]),
                (Box::new(move |p: [f64; 2]| p[0] == max[0]), [0.0, 1.0]),
                (Box::new(move |p: [f64; 2]| p[1] == max[1]), [1.0, 0.0]),
                (Box::new(move |p: [f64; 2]| p[0] == min[0]), [0.0, 1.0]),
            ]
        }
        ConvexDomain::Polygon { halfplanes } => halfplanes
            .iter()
            .map(|hp| {
                let hp = *hp;
                let tol = 1e-9 * hp.normal[0].hypot(hp.normal[1]) * hp.offset.abs().max(1.0);
                let on: OnEdge =
                    Box::new(move |p: [f64; 2]| (hp.normal[0] * p[0] + hp.normal[1] * p[1] - hp.offset).abs() <= tol);
                (on, [-hp.normal[1], hp.normal[0]])
            })
            .collect(),
    };
    edges
        .iter()
        .map(|(on, t)| {
            let mut idx: Vec<usize> = (0..pts.len()).filter(|&i| on(pts[i])).collect();
            let key = |i: usize| pts[i][0] * t[0] + pts[i][1] * t[1];
            idx.sort_by(|&i, &j| key(i).partial_cmp(&key(j)).unwrap_or(Ordering::Equal));
            idx
        })
        .collect()
}

/// Whether the values are convex along every straight boundary piece, up
/// to `tol` on slope increments.
fn runs_convex(pts: &[[f64; 2]], z: &[f64], runs: &[Vec<usize>], tol: f64) -> bool {
    runs.iter().all(|run| {
        run.windows(3).all(|w| {
            let (i, j, k) = (w[0], w[1], w[2]);
            let d1 = (pts[j][0] - pts[i][0]).hypot(pts[j][1] - pts[i][1]);
            let d2 = (pts[k][0] - pts[j][0]).hypot(pts[k][1] - pts[j][1]);
            if d1 == 0.0 || d2 == 0.0 {
                return true;
            }
            (z[k] - z[j]) / d2 - (z[j] - z[i]) / d1 >= -tol
        })
    })
}

/// Replaces the values on each straight run by their lower convex minorant
/// along the run.
fn convexify_runs(pts: &[[f64; 2]], z: &mut [f64], runs: &[Vec<usize>]) {
    for run in runs {
        if run.len() < 3 {
            continue;
        }
        let p0 = pts[run[0]];
        let t: Vec<f64> = run.iter().map(|&i| (pts[i][0] - p0[0]).hypot(pts[i][1] - p0[1])).collect();
        let v: Vec<f64> = run.iter().map(|&i| z[i]).collect();
        let mut hull: Vec<usize> = Vec::new();
        for k in 0..run.len() {
            while hull.len() >= 2 {
                let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
                // drop b when it lies on or above the chord a -> k
                if (v[b] - v[a]) * (t[k] - t[a]) >= (v[k] - v[a]) * (t[b] - t[a]) {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(k);
        }
        for w in hull.windows(2) {
            let (a, b) = (w[0], w[1]);
            for k in a + 1..b {
                let s = (t[k] - t[a]) / (t[b] - t[a]);
                z[run[k]] = z[run[k]].min(v[a] + s * (v[b] - v[a]));
            }
        }
    }
}

/// Sweep 2⁻ᵏ·range(σ)/diam², k = 0..=20, for the largest ε keeping σ − ε‖x − c‖²
/// convex on straight boundary pieces.
pub const EPSILON_SWEEP: u32 = 20;

#[derive(Clone, Debug)]
pub struct ConvexStart {
    pub field: Field,
    pub epsilon: f64,
    pub samples: usize,
    /// Whether the data had to be replaced by its minorant on straight pieces.
    pub minorant: bool,
}

/// Initial field Σ_ε + ε‖x − c‖². `extra_dirs` adds the boundary crossings
/// of further stencil directions to the samples. When no ε in the sweep
/// keeps the data convex along straight pieces, the largest ε is used with
/// the data replaced by its convex minorant there, so the start lies below
/// σ at the samples and stays strictly convex.
pub fn convex_start(grid: &Grid, sigma: &BoundaryTrace, extra_dirs: &Stencil) -> Result<ConvexStart, String> {
    let pts = boundary_points(grid, extra_dirs);
    let s: Vec<f64> = pts.iter().map(|&p| sigma(p)).collect();
    if !s.iter().all(|v| v.is_finite()) {
        return Err("boundary data is not finite".into());
    }
    let smin = s.iter().copied().fold(f64::INFINITY, f64::min);
    let smax = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = if smax > smin { smax - smin } else { 1.0 };
    let diam = grid.domain().diameter();
    let c = grid.domain().interior_point();
    let r2 = |p: [f64; 2]| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
    let runs = straight_runs(grid.domain(), &pts);
    let tol = 1e-12 * range.max(1.0);
    let lifted_values = |eps: f64| -> Vec<f64> { pts.iter().zip(&s).map(|(&p, &v)| v - eps * r2(p)).collect() };
    let mut chosen = None;
    for k in 0..=EPSILON_SWEEP {
        let eps = range / (diam * diam) * 0.5f64.powi(k as i32);
        let z = lifted_values(eps);
        if runs_convex(&pts, &z, &runs, tol) {
            chosen = Some((eps, z, false));
            break;
        }
    }
    let (eps, z, minorant) = chosen.unwrap_or_else(|| {
        let eps = range / (diam * diam);
        let mut z = lifted_values(eps);
        convexify_runs(&pts, &mut z, &runs);
        (eps, z, true)
    });
    let lifted: Vec<[f64; 3]> = pts.iter().zip(&z).map(|(p, &v)| [p[0], p[1], v]).collect();
    let env = LowerEnvelope::new(&lifted);
    if env.planes.is_empty() {
        return Err("degenerate boundary sampling".into());
    }
    let values = grid
        .points()
        .iter()
        .map(|x| {
            let p = x.to_f64();
            env.eval(p) + eps * r2(p)
        })
        .collect();
    Ok(ConvexStart { field: Field { values, trace: sigma.clone() }, epsilon: eps, samples: pts.len(), minorant })
}
