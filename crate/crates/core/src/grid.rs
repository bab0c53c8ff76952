//! Convex domains, the lattice discretization X = Ω ∩ Z², boundary-aware
//! second differences and per-point stencil families.

use std::f64::consts::PI;
use std::sync::Arc;

use thiserror::Error;

use crate::lattice::{decompose, lv, parent, LatticeVector, Stencil};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("resolution n = {0} is below the minimum of 4")]
    InvalidResolution(usize),
    #[error("domain contains no lattice point")]
    DomainTooSmall,
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid stencil configuration: {0}")]
    InvalidStencilConfig(String),
    #[error("field has {got} values, grid has {expected} points")]
    FieldSizeMismatch { expected: usize, got: usize },
}

/// Open half-plane {p : <normal, p> < offset}.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HalfPlane {
    pub normal: [f64; 2],
    pub offset: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ConvexDomain {
    Box { min: [f64; 2], max: [f64; 2] },
    Disk { center: [f64; 2], radius: f64 },
    Polygon { halfplanes: Vec<HalfPlane> },
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

impl ConvexDomain {
    pub fn unit_square() -> Self {
        ConvexDomain::Box { min: [0.0, 0.0], max: [1.0, 1.0] }
    }

    pub fn new_box(min: [f64; 2], max: [f64; 2]) -> Result<Self, GridError> {
        if !(min[0] < max[0] && min[1] < max[1]) || !min.iter().chain(&max).all(|v| v.is_finite()) {
            return Err(GridError::InvalidDomain(format!("box {min:?} .. {max:?}")));
        }
        Ok(ConvexDomain::Box { min, max })
    }

    pub fn new_disk(center: [f64; 2], radius: f64) -> Result<Self, GridError> {
        if !(radius > 0.0 && radius.is_finite() && center.iter().all(|v| v.is_finite())) {
            return Err(GridError::InvalidDomain(format!("disk radius {radius}")));
        }
        Ok(ConvexDomain::Disk { center, radius })
    }

    /// Polygon from its vertices in counter-clockwise order.
    pub fn polygon_from_vertices(vertices: &[[f64; 2]]) -> Result<Self, GridError> {
        let n = vertices.len();
        if n < 3 {
            return Err(GridError::InvalidDomain("polygon needs 3 vertices".into()));
        }
        let mut halfplanes = Vec::with_capacity(n);
        for i in 0..n {
            let p = vertices[i];
            let q = vertices[(i + 1) % n];
            let r = vertices[(i + 2) % n];
            let turn = (q[0] - p[0]) * (r[1] - q[1]) - (q[1] - p[1]) * (r[0] - q[0]);
            if turn <= 0.0 {
                return Err(GridError::InvalidDomain("polygon is not strictly convex and counter-clockwise".into()));
            }
            let normal = [q[1] - p[1], p[0] - q[0]];
            halfplanes.push(HalfPlane { normal, offset: dot(normal, p) });
        }
        Ok(ConvexDomain::Polygon { halfplanes })
    }

    /// Strict membership.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            ConvexDomain::Box { min, max } => min[0] < p[0] && p[0] < max[0] && min[1] < p[1] && p[1] < max[1],
            ConvexDomain::Disk { center, radius } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                dx * dx + dy * dy < radius * radius
            }
            ConvexDomain::Polygon { halfplanes } => {
                // points within rounding of an edge count as boundary points
                let scale = 1e-12 * (p[0].abs() + p[1].abs()).max(1.0);
                halfplanes.iter().all(|hp| dot(hp.normal, p) < hp.offset - scale * hp.normal[0].hypot(hp.normal[1]))
            }
        }
    }

    pub fn contains_lattice(&self, p: LatticeVector) -> bool {
        self.contains(p.to_f64())
    }

    /// Largest t with p + t d in the closure, for p inside and d nonzero.
    pub fn exit_time(&self, p: [f64; 2], d: [f64; 2]) -> f64 {
        match self {
            ConvexDomain::Box { min, max } => {
                let mut t = f64::INFINITY;
                for k in 0..2 {
                    if d[k] > 0.0 {
                        t = t.min((max[k] - p[k]) / d[k]);
                    } else if d[k] < 0.0 {
                        t = t.min((min[k] - p[k]) / d[k]);
                    }
                }
                t
            }
            ConvexDomain::Disk { center, radius } => {
                let q = [p[0] - center[0], p[1] - center[1]];
                let a = dot(d, d);
                let b = dot(q, d);
                let c = dot(q, q) - radius * radius;
                let disc = (b * b - a * c).max(0.0).sqrt();
                if b > 0.0 {
                    -c / (b + disc)
                } else {
                    (disc - b) / a
                }
            }
            ConvexDomain::Polygon { halfplanes } => {
                let mut t = f64::INFINITY;
                for hp in halfplanes {
                    let nd = dot(hp.normal, d);
                    if nd > 0.0 {
                        t = t.min((hp.offset - dot(hp.normal, p)) / nd);
                    }
                }
                t
            }
        }
    }

    /// Exit time and exit point; on a box face the crossed coordinate is exact.
    pub fn exit_point(&self, p: [f64; 2], d: [f64; 2]) -> (f64, [f64; 2]) {
        let t = self.exit_time(p, d);
        let mut q = [p[0] + t * d[0], p[1] + t * d[1]];
        if let ConvexDomain::Box { min, max } = self {
            for k in 0..2 {
                let face = if d[k] > 0.0 { max[k] } else { min[k] };
                if d[k] != 0.0 && (face - p[k]) / d[k] == t {
                    q[k] = face;
                }
            }
        }
        (t, q)
    }

    pub fn scaled(&self, s: f64) -> ConvexDomain {
        match self {
            ConvexDomain::Box { min, max } => ConvexDomain::Box {
                min: [min[0] * s, min[1] * s],
                max: [max[0] * s, max[1] * s],
            },
            ConvexDomain::Disk { center, radius } => ConvexDomain::Disk {
                center: [center[0] * s, center[1] * s],
                radius: radius * s,
            },
            ConvexDomain::Polygon { halfplanes } => ConvexDomain::Polygon {
                halfplanes: halfplanes.iter().map(|hp| HalfPlane { normal: hp.normal, offset: hp.offset * s }).collect(),
            },
        }
    }

    /// Vertices of a polygon domain, counter-clockwise.
    pub fn polygon_vertices(halfplanes: &[HalfPlane]) -> Vec<[f64; 2]> {
        let n = halfplanes.len();
        (0..n)
            .map(|i| {
                let h1 = halfplanes[(i + n - 1) % n];
                let h2 = halfplanes[i];
                let det = h1.normal[0] * h2.normal[1] - h1.normal[1] * h2.normal[0];
                [
                    (h1.offset * h2.normal[1] - h2.offset * h1.normal[1]) / det,
                    (h1.normal[0] * h2.offset - h2.normal[0] * h1.offset) / det,
                ]
            })
            .collect()
    }

    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        match self {
            ConvexDomain::Box { min, max } => (*min, *max),
            ConvexDomain::Disk { center, radius } => (
                [center[0] - radius, center[1] - radius],
                [center[0] + radius, center[1] + radius],
            ),
            ConvexDomain::Polygon { halfplanes } => {
                let vs = Self::polygon_vertices(halfplanes);
                let mut lo = [f64::INFINITY; 2];
                let mut hi = [f64::NEG_INFINITY; 2];
                for v in vs {
                    for k in 0..2 {
                        lo[k] = lo[k].min(v[k]);
                        hi[k] = hi[k].max(v[k]);
                    }
                }
                (lo, hi)
            }
        }
    }

    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        (hi[0] - lo[0]).hypot(hi[1] - lo[1])
    }

    /// A point strictly inside.
    pub fn interior_point(&self) -> [f64; 2] {
        match self {
            ConvexDomain::Box { min, max } => [0.5 * (min[0] + max[0]), 0.5 * (min[1] + max[1])],
            ConvexDomain::Disk { center, .. } => *center,
            ConvexDomain::Polygon { halfplanes } => {
                let vs = Self::polygon_vertices(halfplanes);
                let k = vs.len() as f64;
                [vs.iter().map(|v| v[0]).sum::<f64>() / k, vs.iter().map(|v| v[1]).sum::<f64>() / k]
            }
        }
    }

    /// At least `count` points of the boundary, counter-clockwise, with all
    /// corners included.
    pub fn boundary_samples(&self, count: usize) -> Vec<[f64; 2]> {
        let count = count.max(8);
        match self {
            ConvexDomain::Disk { center, radius } => (0..count)
                .map(|i| {
                    let t = 2.0 * PI * i as f64 / count as f64;
                    [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
                })
                .collect(),
            ConvexDomain::Box { min, max } => {
                let w = max[0] - min[0];
                let hgt = max[1] - min[1];
                let per = 2.0 * (w + hgt);
                let kx = ((count as f64 * w / per).ceil() as usize).max(1);
                let ky = ((count as f64 * hgt / per).ceil() as usize).max(1);
                let mut out = Vec::with_capacity(2 * (kx + ky));
                for i in 0..kx {
                    out.push([min[0] + w * i as f64 / kx as f64, min[1]]);
                }
                for i in 0..ky {
                    out.push([max[0], min[1] + hgt * i as f64 / ky as f64]);
                }
                for i in 0..kx {
                    out.push([max[0] - w * i as f64 / kx as f64, max[1]]);
                }
                for i in 0..ky {
                    out.push([min[0], max[1] - hgt * i as f64 / ky as f64]);
                }
                out
            }
            ConvexDomain::Polygon { halfplanes } => {
                let vs = Self::polygon_vertices(halfplanes);
                let per: f64 = (0..vs.len())
                    .map(|i| {
                        let q = vs[(i + 1) % vs.len()];
                        (q[0] - vs[i][0]).hypot(q[1] - vs[i][1])
                    })
                    .sum();
                let mut out = Vec::new();
                for i in 0..vs.len() {
                    let p = vs[i];
                    let q = vs[(i + 1) % vs.len()];
                    let len = (q[0] - p[0]).hypot(q[1] - p[1]);
                    let k = ((count as f64 * len / per).ceil() as usize).max(1);
                    for j in 0..k {
                        let t = j as f64 / k as f64;
                        out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
                    }
                }
                out
            }
        }
    }
}

/// Lattice points of a convex domain, row-major, with a dense lookup table.
#[derive(Clone, Debug)]
pub struct Grid {
    domain: ConvexDomain,
    scale_h: f64,
    points: Vec<LatticeVector>,
    lo: [i64; 2],
    dims: [usize; 2],
    index: Vec<u32>,
}

const NO_INDEX: u32 = u32::MAX;

impl Grid {
    /// Grid over a domain given in lattice coordinates.
    pub fn new(domain: ConvexDomain, scale_h: f64) -> Result<Self, GridError> {
        if !(scale_h > 0.0 && scale_h.is_finite()) {
            return Err(GridError::InvalidDomain(format!("scale {scale_h}")));
        }
        let (lo_f, hi_f) = domain.bounding_box();
        let lo = [lo_f[0].floor() as i64, lo_f[1].floor() as i64];
        let hi = [hi_f[0].ceil() as i64, hi_f[1].ceil() as i64];
        let dims = [(hi[0] - lo[0] + 1) as usize, (hi[1] - lo[1] + 1) as usize];
        let mut index = vec![NO_INDEX; dims[0] * dims[1]];
        let mut points = Vec::new();
        for y in lo[1]..=hi[1] {
            for x in lo[0]..=hi[0] {
                let p = lv(x, y);
                if domain.contains_lattice(p) {
                    index[(y - lo[1]) as usize * dims[0] + (x - lo[0]) as usize] = points.len() as u32;
                    points.push(p);
                }
            }
        }
        if points.is_empty() {
            return Err(GridError::DomainTooSmall);
        }
        Ok(Grid { domain, scale_h, points, lo, dims, index })
    }

    pub fn domain(&self) -> &ConvexDomain {
        &self.domain
    }

    pub fn scale_h(&self) -> f64 {
        self.scale_h
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[LatticeVector] {
        &self.points
    }

    pub fn point(&self, i: usize) -> LatticeVector {
        self.points[i]
    }

    pub fn index_of(&self, p: LatticeVector) -> Option<usize> {
        let x = p.a.checked_sub(self.lo[0])?;
        let y = p.b.checked_sub(self.lo[1])?;
        if x < 0 || y < 0 || x as usize >= self.dims[0] || y as usize >= self.dims[1] {
            return None;
        }
        let k = self.index[y as usize * self.dims[0] + x as usize];
        (k != NO_INDEX).then_some(k as usize)
    }

    pub fn contains(&self, p: LatticeVector) -> bool {
        self.index_of(p).is_some()
    }

    /// Physical coordinates h·x of a lattice point.
    pub fn physical(&self, p: [f64; 2]) -> [f64; 2] {
        [p[0] * self.scale_h, p[1] * self.scale_h]
    }

    /// Bound on the infinity norm of any e with x ± e both in the grid.
    pub fn reach(&self) -> i64 {
        (self.dims[0].max(self.dims[1]) as i64 + 1) / 2
    }
}

/// Lattice grid for a physical domain at resolution n (h = 1/n).
pub fn discretize(domain_phys: &ConvexDomain, n: usize) -> Result<Grid, GridError> {
    if n < 4 {
        return Err(GridError::InvalidResolution(n));
    }
    Grid::new(domain_phys.scaled(n as f64), 1.0 / n as f64)
}

/// Boundary data in lattice coordinates.
pub type BoundaryTrace = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;

/// Values on X together with the Dirichlet trace.
#[derive(Clone)]
pub struct Field {
    pub values: Vec<f64>,
    pub trace: BoundaryTrace,
}

impl std::fmt::Debug for Field {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Field").field("values", &self.values).finish_non_exhaustive()
    }
}

impl Field {
    pub fn new(grid: &Grid, values: Vec<f64>, trace: BoundaryTrace) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::FieldSizeMismatch { expected: grid.len(), got: values.len() });
        }
        Ok(Field { values, trace })
    }

    /// Samples `f` (lattice coordinates) at the grid points and uses it as trace.
    pub fn from_fn(grid: &Grid, f: BoundaryTrace) -> Self {
        let values = grid.points().iter().map(|p| f(p.to_f64())).collect();
        Field { values, trace: f }
    }
}

/// End of an arm: a grid unknown or a boundary point carrying a trace value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Node {
    Interior(usize),
    Boundary { point: [f64; 2], value: f64 },
}

/// The two sides of x ± e with their step fractions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Arm {
    pub plus: Node,
    pub minus: Node,
    pub h_plus: f64,
    pub h_minus: f64,
}

impl Arm {
    /// Coefficients of (u⁺ - u) and (u⁻ - u) in the second difference.
    #[inline]
    pub fn weights(&self) -> (f64, f64) {
        if self.h_plus == 1.0 && self.h_minus == 1.0 {
            return (1.0, 1.0);
        }
        let s = 2.0 / (self.h_plus + self.h_minus);
        (s / self.h_plus, s / self.h_minus)
    }

    #[inline]
    pub fn delta(&self, center: f64, values: &[f64]) -> f64 {
        let up = match self.plus {
            Node::Interior(i) => values[i],
            Node::Boundary { value, .. } => value,
        };
        let um = match self.minus {
            Node::Interior(i) => values[i],
            Node::Boundary { value, .. } => value,
        };
        let (wp, wm) = self.weights();
        if wp == 1.0 && wm == 1.0 {
            return up - 2.0 * center + um;
        }
        wp * (up - center) + wm * (um - center)
    }
}

fn side(grid: &Grid, x: LatticeVector, e: LatticeVector, trace: &dyn Fn([f64; 2]) -> f64) -> (Node, f64) {
    if let Some(i) = x.checked_add(e).and_then(|p| grid.index_of(p)) {
        return (Node::Interior(i), 1.0);
    }
    let xf = x.to_f64();
    let ef = e.to_f64();
    let (t, point) = match grid.domain().exit_point(xf, ef) {
        (t, q) if t < 1.0 => (t, q),
        _ => (1.0, [xf[0] + ef[0], xf[1] + ef[1]]),
    };
    (Node::Boundary { point, value: trace(point) }, t)
}

/// Arm of direction e at x, evaluating the trace at boundary crossings.
pub fn arm(grid: &Grid, x: LatticeVector, e: LatticeVector, trace: &dyn Fn([f64; 2]) -> f64) -> Arm {
    let (plus, h_plus) = side(grid, x, e, trace);
    let (minus, h_minus) = side(grid, x, -e, trace);
    Arm { plus, minus, h_plus, h_minus }
}

/// (h⁺, h⁻) for the arm x ± e.
pub fn boundary_fraction(grid: &Grid, x: LatticeVector, e: LatticeVector) -> (f64, f64) {
    let a = arm(grid, x, e, &|_| 0.0);
    (a.h_plus, a.h_minus)
}

/// Δ_e u(x), using the trace where the arm leaves the domain.
pub fn second_difference(grid: &Grid, field: &Field, x: LatticeVector, e: LatticeVector) -> f64 {
    let i = grid.index_of(x).expect("point not in grid");
    arm(grid, x, e, &*field.trace).delta(field.values[i], &field.values)
}

/// Whether e = f ⊕ g with x ± e, x ± f, x ± g all in Ω.
pub fn v_omega_contains(grid: &Grid, x: LatticeVector, e: LatticeVector) -> bool {
    let Ok((f, g)) = decompose(e) else { return false };
    [e, f, g].iter().all(|&v| {
        let (Some(p), Some(m)) = (x.checked_add(v), x.checked_sub(v)) else { return false };
        grid.contains(p) && grid.contains(m)
    })
}

/// Distance used for the boundary layer: the smallest axis exit time, rounded down.
pub fn axis_distance(grid: &Grid, x: LatticeVector) -> i64 {
    let p = x.to_f64();
    let t = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]
        .iter()
        .map(|&d| grid.domain().exit_time(p, d))
        .fold(f64::INFINITY, f64::min);
    t.floor() as i64
}

#[derive(Clone, Debug)]
pub struct StencilConfig {
    pub interior: Stencil,
    pub boundary: Stencil,
    pub boundary_layer_width: i64,
}

impl Default for StencilConfig {
    /// V8 inside, 48 points on a 4 pixel layer along the boundary.
    fn default() -> Self {
        StencilConfig {
            interior: Stencil::v8(),
            boundary: stencil_with_points(48).expect("48 point stencil"),
            boundary_layer_width: 4,
        }
    }
}

/// Ball stencils with 8, 16, 24 or 48 elements.
pub fn stencil_with_points(points: usize) -> Option<Stencil> {
    let r = match points {
        8 => 1.5,
        16 => 2.3,
        24 => 3.2,
        48 => 5.0,
        _ => return None,
    };
    Stencil::ball(r).ok()
}

/// Per-point stencils V(x).
#[derive(Clone, Debug)]
pub struct StencilFamily {
    stencils: Vec<Arc<Stencil>>,
    in_layer: Vec<bool>,
    additions: Vec<(usize, LatticeVector)>,
}

fn check_config_stencil(name: &str, s: &Stencil) -> Result<(), GridError> {
    if !s.is_superset_of(&Stencil::v8()) {
        return Err(GridError::InvalidStencilConfig(format!("{name} stencil does not contain V8")));
    }
    if !s.is_parent_closed() {
        return Err(GridError::InvalidStencilConfig(format!("{name} stencil is not parent-closed")));
    }
    Ok(())
}

// upper representatives e with x ± e both in the grid
fn symmetric_reach(grid: &Grid, x: LatticeVector) -> Vec<LatticeVector> {
    let r = grid.reach();
    let mut out = Vec::new();
    for b in 0..=r {
        for a in -r..=r {
            let e = lv(a, b);
            if !e.is_upper() || !e.is_irreducible() {
                continue;
            }
            if grid.contains(x + e) && grid.contains(x - e) {
                out.push(e);
            }
        }
    }
    out
}

fn add_with_ancestors(s: &mut Stencil, e: LatticeVector) {
    let mut cur = Some(e);
    while let Some(v) = cur {
        if s.contains(v) {
            break;
        }
        s.insert(v);
        cur = parent(v).ok().flatten();
    }
}

impl StencilFamily {
    pub fn build(grid: &Grid, config: &StencilConfig) -> Result<Self, GridError> {
        check_config_stencil("interior", &config.interior)?;
        check_config_stencil("boundary", &config.boundary)?;
        let interior = Arc::new(config.interior.clone());
        let boundary = Arc::new(config.boundary.clone());
        let mut stencils = Vec::with_capacity(grid.len());
        let mut in_layer = Vec::with_capacity(grid.len());
        let mut additions = Vec::new();
        for (i, &x) in grid.points().iter().enumerate() {
            let layer = axis_distance(grid, x) <= config.boundary_layer_width;
            let base = if layer { &boundary } else { &interior };
            in_layer.push(layer);
            let axes_inside = [lv(1, 0), lv(0, 1)].iter().all(|&e| grid.contains(x + e) && grid.contains(x - e));
            if axes_inside {
                stencils.push(base.clone());
                continue;
            }
            let mut s: Option<Stencil> = None;
            for e in symmetric_reach(grid, x) {
                if base.contains(e) || s.as_ref().is_some_and(|s| s.contains(e)) || v_omega_contains(grid, x, e) {
                    continue;
                }
                let st = s.get_or_insert_with(|| (**base).clone());
                add_with_ancestors(st, e);
                additions.push((i, e));
            }
            stencils.push(match s {
                Some(s) => Arc::new(s),
                None => base.clone(),
            });
        }
        Ok(StencilFamily { stencils, in_layer, additions })
    }

    /// Family with the same stencil everywhere, no repairs.
    pub fn uniform(grid: &Grid, stencil: Stencil) -> Self {
        let s = Arc::new(stencil);
        StencilFamily { stencils: vec![s; grid.len()], in_layer: vec![false; grid.len()], additions: Vec::new() }
    }

    pub fn stencil(&self, i: usize) -> &Stencil {
        &self.stencils[i]
    }

    pub(crate) fn stencil_arc(&self, i: usize) -> &Arc<Stencil> {
        &self.stencils[i]
    }

    pub fn len(&self) -> usize {
        self.stencils.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stencils.is_empty()
    }

    pub fn in_layer(&self, i: usize) -> bool {
        self.in_layer[i]
    }

    /// Vectors added to satisfy Reachability, by point index.
    pub fn reachability_additions(&self) -> &[(usize, LatticeVector)] {
        &self.additions
    }

    /// V̄(x) = V(x) ∪ 𝒱_Ω(x).
    pub fn extended(&self, grid: &Grid) -> StencilFamily {
        let stencils = grid
            .points()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let extra: Vec<_> = symmetric_reach(grid, x)
                    .into_iter()
                    .filter(|&e| !self.stencils[i].contains(e) && v_omega_contains(grid, x, e))
                    .collect();
                if extra.is_empty() {
                    return self.stencils[i].clone();
                }
                let mut s = (*self.stencils[i]).clone();
                for e in extra {
                    s.insert(e);
                }
                Arc::new(s)
            })
            .collect();
        StencilFamily { stencils, in_layer: self.in_layer.clone(), additions: self.additions.clone() }
    }

    /// Checks V8 ⊂ V(x) ⊂ 𝕋, Hierarchy and Reachability at every point.
    pub fn validate(&self, grid: &Grid) -> Result<(), String> {
        let v8 = Stencil::v8();
        for (i, &x) in grid.points().iter().enumerate() {
            let s = &self.stencils[i];
            if !s.is_superset_of(&v8) {
                return Err(format!("V8 not contained at {x}"));
            }
            if let Some(e) = s.iter().find(|e| !e.is_irreducible()) {
                return Err(format!("reducible vector {e} at {x}"));
            }
            if !s.is_parent_closed() {
                return Err(format!("hierarchy violated at {x}"));
            }
            for e in symmetric_reach(grid, x) {
                if !s.contains(e) && !v_omega_contains(grid, x, e) {
                    return Err(format!("reachability violated at {x} for {e}"));
                }
            }
        }
        Ok(())
    }
}

/// Builds the per-point stencil family.
pub fn build_stencil_family(grid: &Grid, config: &StencilConfig) -> Result<StencilFamily, GridError> {
    StencilFamily::build(grid, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grid(n: usize) -> Grid {
        discretize(&ConvexDomain::unit_square(), n).unwrap()
    }

    #[test]
    fn box_point_counts() {
        let g = unit_grid(4);
        assert_eq!(g.len(), 9);
        assert_eq!(g.point(0), lv(1, 1));
        assert_eq!(g.point(1), lv(2, 1));
        assert_eq!(unit_grid(64).len(), 3969);
        assert_eq!(discretize(&ConvexDomain::unit_square(), 3).unwrap_err(), GridError::InvalidResolution(3));
    }

    #[test]
    fn tiny_disk_is_empty() {
        let d = ConvexDomain::new_disk([0.6, 0.6], 0.1).unwrap();
        assert_eq!(discretize(&d, 4).unwrap_err(), GridError::DomainTooSmall);
    }

    #[test]
    fn fractions_on_box() {
        let g = unit_grid(4);
        assert_eq!(boundary_fraction(&g, lv(1, 2), lv(1, 0)), (1.0, 1.0));
        let a = arm(&g, lv(1, 2), lv(1, 0), &|_| 7.0);
        assert!(matches!(a.minus, Node::Boundary { point, value } if point == [0.0, 2.0] && value == 7.0));
        assert_eq!(boundary_fraction(&g, lv(1, 2), lv(2, 1)), (1.0, 0.5));
    }

    #[test]
    fn fraction_on_disk_lands_on_circle() {
        let d = ConvexDomain::new_disk([0.5, 0.5], 0.45).unwrap();
        let g = discretize(&d, 20).unwrap();
        for &x in g.points() {
            for e in [lv(1, 0), lv(2, 1), lv(-3, 1)] {
                let a = arm(&g, x, e, &|_| 0.0);
                for (node, h) in [(a.plus, a.h_plus), (a.minus, a.h_minus)] {
                    assert!(h > 0.0 && h <= 1.0);
                    if let Node::Boundary { point, .. } = node {
                        let r = (point[0] - 10.0).hypot(point[1] - 10.0);
                        assert!((r - 9.0).abs() < 1e-12 * 9.0);
                    }
                }
            }
        }
    }

    #[test]
    fn v_omega_examples() {
        let g = unit_grid(4);
        assert!(v_omega_contains(&g, lv(2, 2), lv(1, 1)));
        assert!(!v_omega_contains(&g, lv(1, 1), lv(2, 1)));
        assert!(!v_omega_contains(&g, lv(2, 2), lv(1, 0)));
    }

    #[test]
    fn box_family_needs_no_repairs() {
        let g = unit_grid(12);
        let fam = build_stencil_family(&g, &StencilConfig::default()).unwrap();
        assert!(fam.reachability_additions().is_empty());
        fam.validate(&g).unwrap();
        assert!(fam.in_layer(0));
        assert_eq!(fam.stencil(0).len(), 48);
        let c = g.index_of(lv(6, 6)).unwrap();
        assert_eq!(fam.stencil(c).len(), 8);
    }

    #[test]
    fn bad_config_rejected() {
        let g = unit_grid(8);
        let cfg = StencilConfig {
            interior: Stencil::new([lv(1, 0), lv(0, 1), lv(1, 1), lv(1, -1), lv(3, 2)]).unwrap(),
            ..StencilConfig::default()
        };
        assert!(matches!(build_stencil_family(&g, &cfg), Err(GridError::InvalidStencilConfig(_))));
    }

    #[test]
    fn polygon_membership() {
        let p = ConvexDomain::polygon_from_vertices(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!(p.contains([0.2, 0.2]));
        assert!(!p.contains([0.6, 0.6]));
        assert!((p.exit_time([0.2, 0.2], [1.0, 0.0]) - 0.6).abs() < 1e-15);
        let g = discretize(&p, 8).unwrap();
        assert_eq!(g.len(), 21);
    }
}
