//! Discrete Monge-Ampère operators: finite differences (FD), wide stencil
//! (WS) and the lattice basis reduction scheme (LBR), the latter both as a
//! full minimum over a stencil and as the adaptive tree traversal.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{arm, v_omega_contains, Arm, Field, Grid, Node, StencilFamily};
use crate::lattice::{decompose, lv, LatticeVector, Stencil};
use crate::sparse::SparseMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error("h is only defined for nonnegative arguments, got ({0}, {1}, {2})")]
    DomainError(f64, f64, f64),
    #[error("invalid stencil: {0}")]
    InvalidStencil(String),
    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },
}

#[inline]
fn h_core(a: f64, b: f64, c: f64) -> (f64, [f64; 3]) {
    // evaluate on sorted arguments so the value is exactly symmetric
    let mut idx = [0usize, 1, 2];
    let v = [a, b, c];
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let (s0, s1, s2) = (v[idx[0]], v[idx[1]], v[idx[2]]);
    let mut grad = [0.0; 3];
    let value = if s2 >= s0 + s1 {
        grad[idx[0]] = s1;
        grad[idx[1]] = s0;
        s0 * s1
    } else {
        // s2 = p + q, s1 = p + r, s0 = q + r with p, q, r > 0
        let p = 0.5 * (s1 + s2 - s0);
        let q = 0.5 * (s0 + s2 - s1);
        let r = 0.5 * (s0 + s1 - s2);
        grad[idx[0]] = p;
        grad[idx[1]] = q;
        grad[idx[2]] = r;
        p * q + q * r + r * p
    };
    (value, grad)
}

fn check_nonneg(a: f64, b: f64, c: f64) -> Result<(), SchemeError> {
    if a >= 0.0 && b >= 0.0 && c >= 0.0 {
        Ok(())
    } else {
        Err(SchemeError::DomainError(a, b, c))
    }
}

/// h(a, b, c): bc when a ≥ b + c (and symmetrically), otherwise
/// ½(ab + bc + ca) − ¼(a² + b² + c²).
pub fn h_func(a: f64, b: f64, c: f64) -> Result<f64, SchemeError> {
    check_nonneg(a, b, c)?;
    Ok(h_core(a, b, c).0)
}

pub fn h_gradient(a: f64, b: f64, c: f64) -> Result<[f64; 3], SchemeError> {
    check_nonneg(a, b, c)?;
    Ok(h_core(a, b, c).1)
}

/// Which candidate attains the operator value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Active {
    FiniteDifference,
    Pair { f: LatticeVector, g: LatticeVector },
    /// e = f ⊕ g, the superbase (e, −f, −g).
    Superbase { e: LatticeVector, f: LatticeVector, g: LatticeVector },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchemeEval {
    pub value: f64,
    pub active: Active,
    /// ∂value/∂u at grid indices, sorted by index. Boundary values are data
    /// and carry no entry.
    pub derivative: Vec<(usize, f64)>,
}

#[derive(Clone, Debug)]
pub enum SchemeKind {
    Fd,
    Ws(Stencil),
    LbrExtensive(StencilFamily),
    LbrAdaptive(StencilFamily),
}

impl SchemeKind {
    pub fn name(&self) -> &'static str {
        match self {
            SchemeKind::Fd => "fd",
            SchemeKind::Ws(_) => "ws",
            SchemeKind::LbrExtensive(_) => "lbr-extensive",
            SchemeKind::LbrAdaptive(_) => "lbr",
        }
    }

    /// Degenerate elliptic schemes, whose value is monotone in the differences.
    pub fn is_degenerate_elliptic(&self) -> bool {
        !matches!(self, SchemeKind::Fd)
    }
}

/// Operator with optional proper-elliptic shift: D u − ε u.
#[derive(Clone, Debug)]
pub struct Scheme {
    pub kind: SchemeKind,
    pub epsilon: f64,
}

impl Scheme {
    pub fn new(kind: SchemeKind) -> Self {
        Scheme { kind, epsilon: 0.0 }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }
}

impl From<SchemeKind> for Scheme {
    fn from(kind: SchemeKind) -> Self {
        Scheme::new(kind)
    }
}

#[inline]
fn pos(d: f64) -> (f64, f64) {
    if d > 0.0 {
        (d, 1.0)
    } else {
        (0.0, 0.0)
    }
}

/// Up to four partial derivatives with respect to second differences.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Partials {
    items: [(LatticeVector, f64); 4],
    len: usize,
}

impl Partials {
    fn push(&mut self, e: LatticeVector, c: f64) {
        self.items[self.len] = (e, c);
        self.len += 1;
    }

    pub(crate) fn iter(&self) -> impl Iterator<Item = (LatticeVector, f64)> + '_ {
        self.items[..self.len].iter().copied()
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct KernelOut {
    pub value: f64,
    pub active: Active,
    pub partials: Partials,
}

/// Directions and candidate sets attached to one stencil.
#[derive(Debug)]
pub(crate) struct DirTable {
    /// One representative per ± pair, sorted.
    pub dirs: Vec<LatticeVector>,
    /// Orthogonal pairs with 1/(‖f‖²‖g‖²).
    pub pairs: Vec<(u32, u32, f64)>,
    /// Superbase classes (e, f, g), e = f ⊕ g, as direction indices.
    pub triples: Vec<[u32; 3]>,
    /// Actual vectors of each triple.
    pub triple_vecs: Vec<[LatticeVector; 3]>,
}

const FD_DIRS: [LatticeVector; 4] = [lv(1, 0), lv(0, 1), lv(1, 1), lv(-1, 1)];

impl DirTable {
    fn index(&self, e: LatticeVector) -> Option<usize> {
        self.dirs.binary_search(&e.upper()).ok()
    }

    fn fd() -> Self {
        let mut dirs = FD_DIRS.to_vec();
        dirs.sort();
        DirTable { dirs, pairs: vec![], triples: vec![], triple_vecs: vec![] }
    }

    fn ws(stencil: &Stencil) -> Result<Self, SchemeError> {
        let dirs: Vec<_> = stencil.half().collect();
        let mut pairs = Vec::new();
        for i in 0..dirs.len() {
            for j in i + 1..dirs.len() {
                if dirs[i].dot(dirs[j]) == 0 {
                    let w = 1.0 / (dirs[i].norm2() as f64 * dirs[j].norm2() as f64);
                    pairs.push((i as u32, j as u32, w));
                }
            }
        }
        if pairs.is_empty() {
            return Err(SchemeError::InvalidStencil("no orthogonal pair".into()));
        }
        Ok(DirTable { dirs, pairs, triples: vec![], triple_vecs: vec![] })
    }

    fn lbr(stencil: &Stencil) -> Self {
        let dirs: Vec<_> = stencil.half().collect();
        let idx = |e: LatticeVector| dirs.binary_search(&e.upper()).unwrap() as u32;
        let mut seen = std::collections::HashSet::new();
        let mut triples = Vec::new();
        let mut triple_vecs = Vec::new();
        // same classes as enumerate_superbases, with a class and its negative merged
        for e in stencil.iter() {
            let Ok((f, g)) = decompose(e) else { continue };
            if !(stencil.contains(f) && stencil.contains(g)) {
                continue;
            }
            let mut key = [e.upper(), f.upper(), g.upper()];
            key.sort();
            if !seen.insert(key) {
                continue;
            }
            triples.push([idx(e), idx(f), idx(g)]);
            triple_vecs.push([e, f, g]);
        }
        DirTable { dirs, pairs: vec![], triples, triple_vecs }
    }

    fn plain(stencil: &Stencil) -> Self {
        DirTable { dirs: stencil.half().collect(), pairs: vec![], triples: vec![], triple_vecs: vec![] }
    }
}

pub(crate) fn fd_kernel(d: impl Fn(LatticeVector) -> f64) -> KernelOut {
    let d10 = d(lv(1, 0));
    let d01 = d(lv(0, 1));
    let d11 = d(lv(1, 1));
    let d1m = d(lv(1, -1));
    let s = d11 - d1m;
    let mut partials = Partials::default();
    partials.push(lv(1, 0), d01);
    partials.push(lv(0, 1), d10);
    partials.push(lv(1, 1), -s / 8.0);
    partials.push(lv(1, -1), s / 8.0);
    KernelOut { value: d10 * d01 - s * s / 16.0, active: Active::FiniteDifference, partials }
}

pub(crate) fn ws_kernel(t: &DirTable, deltas: &[f64]) -> KernelOut {
    let mut best = f64::INFINITY;
    let mut arg = 0;
    for (k, &(i, j, w)) in t.pairs.iter().enumerate() {
        let v = deltas[i as usize].max(0.0) * deltas[j as usize].max(0.0) * w;
        if v < best {
            best = v;
            arg = k;
        }
    }
    let (i, j, w) = t.pairs[arg];
    let (pf, sf) = pos(deltas[i as usize]);
    let (pg, sg) = pos(deltas[j as usize]);
    let (f, g) = (t.dirs[i as usize], t.dirs[j as usize]);
    let mut partials = Partials::default();
    partials.push(f, sf * pg * w);
    partials.push(g, sg * pf * w);
    KernelOut { value: best, active: Active::Pair { f, g }, partials }
}

fn h_partials(e: LatticeVector, f: LatticeVector, g: LatticeVector, de: f64, df: f64, dg: f64) -> (f64, Partials) {
    let (a, sa) = pos(de);
    let (b, sb) = pos(df);
    let (c, sc) = pos(dg);
    let (v, grad) = h_core(a, b, c);
    let mut p = Partials::default();
    p.push(e, grad[0] * sa);
    p.push(f, grad[1] * sb);
    p.push(g, grad[2] * sc);
    (v, p)
}

pub(crate) fn lbr_table_kernel(t: &DirTable, deltas: &[f64]) -> KernelOut {
    let mut best = f64::INFINITY;
    let mut arg = 0;
    for (k, tr) in t.triples.iter().enumerate() {
        let v = h_core(
            deltas[tr[0] as usize].max(0.0),
            deltas[tr[1] as usize].max(0.0),
            deltas[tr[2] as usize].max(0.0),
        )
        .0;
        if v < best {
            best = v;
            arg = k;
        }
    }
    let tr = t.triples[arg];
    let [e, f, g] = t.triple_vecs[arg];
    let (value, partials) = h_partials(e, f, g, deltas[tr[0] as usize], deltas[tr[1] as usize], deltas[tr[2] as usize]);
    KernelOut { value, active: Active::Superbase { e, f, g }, partials }
}

/// Depth-first traversal of the Stern-Brocot tree over the upper half plane.
/// `in_v(e)` gives Δ_e when e belongs to the stencil; `in_v_omega(e)` gives
/// Δ_e when e belongs to 𝒱_Ω(x).
pub(crate) fn lbr_adaptive_kernel(
    in_v: impl Fn(LatticeVector) -> Option<f64>,
    in_v_omega: impl Fn(LatticeVector) -> Option<f64>,
    max_norm_inf: i64,
) -> KernelOut {
    let d10 = in_v(lv(1, 0)).expect("V8 in stencil");
    let d01 = in_v(lv(0, 1)).expect("V8 in stencil");
    let mut f = (lv(1, 0), d10);
    let mut stack = vec![(lv(-1, 0), d10), (lv(0, 1), d01)];
    let mut best = f64::INFINITY;
    let mut arg = ((lv(1, 1), d10), f, f);
    while let Some(&g) = stack.last() {
        let e = f.0 + g.0;
        assert!(e.norm_inf() <= max_norm_inf, "traversal left the domain");
        let accepted = match in_v(e) {
            Some(de) => Some(de),
            None => in_v_omega(e).filter(|&de| de < f.1 + g.1),
        };
        match accepted {
            Some(de) => {
                let v = h_core(de.max(0.0), f.1.max(0.0), g.1.max(0.0)).0;
                if v < best {
                    best = v;
                    arg = ((e, de), f, g);
                }
                stack.push((e, de));
            }
            None => {
                f = stack.pop().unwrap();
            }
        }
    }
    let ((e, de), (f, df), (g, dg)) = arg;
    let (value, partials) = h_partials(e, f, g, de, df, dg);
    KernelOut { value, active: Active::Superbase { e, f, g }, partials }
}

enum PointRule<'a> {
    Fd,
    Ws,
    Extensive,
    Adaptive { grid: &'a Grid },
}

fn run_kernel(
    rule: &PointRule,
    table: &DirTable,
    arms: &[Arm],
    values: &[f64],
    x: LatticeVector,
    i: usize,
) -> KernelOut {
    let u0 = values[i];
    let deltas: Vec<f64> = arms.iter().map(|a| a.delta(u0, values)).collect();
    match rule {
        PointRule::Fd => fd_kernel(|e| deltas[table.index(e).unwrap()]),
        PointRule::Ws => ws_kernel(table, &deltas),
        PointRule::Extensive => lbr_table_kernel(table, &deltas),
        PointRule::Adaptive { grid } => lbr_adaptive_kernel(
            |e| table.index(e).map(|k| deltas[k]),
            |e| {
                if v_omega_contains(grid, x, e) {
                    let p = grid.index_of(x + e).unwrap();
                    let m = grid.index_of(x - e).unwrap();
                    Some(values[p] - 2.0 * u0 + values[m])
                } else {
                    None
                }
            },
            grid.reach() * 2,
        ),
    }
}

fn derivative_row(
    grid: &Grid,
    table: &DirTable,
    arms: &[Arm],
    x: LatticeVector,
    i: usize,
    partials: &Partials,
    epsilon: f64,
) -> Vec<(usize, f64)> {
    let mut row = Vec::with_capacity(9);
    let mut center = -epsilon;
    for (e, c) in partials.iter() {
        if c == 0.0 {
            continue;
        }
        let a = match table.index(e) {
            Some(k) => arms[k],
            None => arm(grid, x, e, &|_| 0.0),
        };
        let (wp, wm) = a.weights();
        center -= c * (wp + wm);
        if let Node::Interior(j) = a.plus {
            row.push((j, c * wp));
        }
        if let Node::Interior(j) = a.minus {
            row.push((j, c * wm));
        }
    }
    row.push((i, center));
    row.sort_by_key(|&(j, _)| j);
    let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
    for (j, v) in row {
        match merged.last_mut() {
            Some(last) if last.0 == j => last.1 += v,
            _ => merged.push((j, v)),
        }
    }
    merged
}

/// A scheme bound to a grid and boundary data, with the boundary arms of
/// every stencil direction precomputed.
pub struct Discretization<'a> {
    grid: &'a Grid,
    scheme: &'a Scheme,
    tables: Vec<Arc<DirTable>>,
    offsets: Vec<usize>,
    arms: Vec<Arm>,
}

impl<'a> Discretization<'a> {
    pub fn new(grid: &'a Grid, scheme: &'a Scheme, trace: &(dyn Fn([f64; 2]) -> f64 + Sync)) -> Result<Self, SchemeError> {
        let n = grid.len();
        let tables: Vec<Arc<DirTable>> = match &scheme.kind {
            SchemeKind::Fd => vec![Arc::new(DirTable::fd()); n],
            SchemeKind::Ws(s) => vec![Arc::new(DirTable::ws(s)?); n],
            SchemeKind::LbrExtensive(fam) | SchemeKind::LbrAdaptive(fam) => {
                if fam.len() != n {
                    return Err(SchemeError::SizeMismatch { expected: n, got: fam.len() });
                }
                let extensive = matches!(scheme.kind, SchemeKind::LbrExtensive(_));
                let mut cache: HashMap<*const Stencil, Arc<DirTable>> = HashMap::new();
                (0..n)
                    .map(|i| {
                        let s = fam.stencil_arc(i);
                        cache
                            .entry(Arc::as_ptr(s))
                            .or_insert_with(|| Arc::new(if extensive { DirTable::lbr(s) } else { DirTable::plain(s) }))
                            .clone()
                    })
                    .collect()
            }
        };
        let per_point: Vec<Vec<Arm>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let x = grid.point(i);
                tables[i].dirs.iter().map(|&e| arm(grid, x, e, trace)).collect()
            })
            .collect();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut arms = Vec::new();
        offsets.push(0);
        for a in per_point {
            arms.extend(a);
            offsets.push(arms.len());
        }
        Ok(Discretization { grid, scheme, tables, offsets, arms })
    }

    pub fn grid(&self) -> &Grid {
        self.grid
    }

    pub fn scheme(&self) -> &Scheme {
        self.scheme
    }

    fn rule(&self) -> PointRule<'a> {
        match self.scheme.kind {
            SchemeKind::Fd => PointRule::Fd,
            SchemeKind::Ws(_) => PointRule::Ws,
            SchemeKind::LbrExtensive(_) => PointRule::Extensive,
            SchemeKind::LbrAdaptive(_) => PointRule::Adaptive { grid: self.grid },
        }
    }

    fn kernel(&self, values: &[f64], i: usize) -> KernelOut {
        let arms = &self.arms[self.offsets[i]..self.offsets[i + 1]];
        run_kernel(&self.rule(), &self.tables[i], arms, values, self.grid.point(i), i)
    }

    pub fn value(&self, values: &[f64], i: usize) -> f64 {
        self.kernel(values, i).value - self.scheme.epsilon * values[i]
    }

    pub fn eval(&self, values: &[f64], i: usize) -> SchemeEval {
        let k = self.kernel(values, i);
        let arms = &self.arms[self.offsets[i]..self.offsets[i + 1]];
        let derivative =
            derivative_row(self.grid, &self.tables[i], arms, self.grid.point(i), i, &k.partials, self.scheme.epsilon);
        SchemeEval { value: k.value - self.scheme.epsilon * values[i], active: k.active, derivative }
    }

    /// Operator values at every point.
    pub fn values(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.grid.len());
        (0..self.grid.len()).into_par_iter().map(|i| self.value(values, i)).collect()
    }

    /// Residual D u − ρ and its Jacobian.
    pub fn assemble(&self, values: &[f64], rho: &[f64]) -> (Vec<f64>, SparseMatrix) {
        assert_eq!(values.len(), self.grid.len());
        assert_eq!(rho.len(), self.grid.len());
        let evals: Vec<SchemeEval> = (0..self.grid.len()).into_par_iter().map(|i| self.eval(values, i)).collect();
        let residual = evals.iter().zip(rho).map(|(e, r)| e.value - r).collect();
        let rows = evals.into_iter().map(|e| e.derivative).collect();
        (residual, SparseMatrix::from_rows(self.grid.len(), rows))
    }
}

fn eval_single(grid: &Grid, field: &Field, x: LatticeVector, rule: PointRule, table: &DirTable) -> SchemeEval {
    let i = grid.index_of(x).expect("point not in grid");
    let arms: Vec<Arm> = table.dirs.iter().map(|&e| arm(grid, x, e, &*field.trace)).collect();
    let k = run_kernel(&rule, table, &arms, &field.values, x, i);
    let derivative = derivative_row(grid, table, &arms, x, i, &k.partials, 0.0);
    SchemeEval { value: k.value, active: k.active, derivative }
}

/// Δ₁₀Δ₀₁ − (Δ₁₁ − Δ₁,₋₁)²/16 at x.
pub fn eval_fd(grid: &Grid, field: &Field, x: LatticeVector) -> SchemeEval {
    eval_single(grid, field, x, PointRule::Fd, &DirTable::fd())
}

/// Minimum over orthogonal pairs of Δ⁺_f Δ⁺_g / (‖f‖²‖g‖²).
pub fn eval_ws(grid: &Grid, field: &Field, x: LatticeVector, v: &Stencil) -> Result<SchemeEval, SchemeError> {
    Ok(eval_single(grid, field, x, PointRule::Ws, &DirTable::ws(v)?))
}

/// Minimum of h(Δ⁺_e, Δ⁺_f, Δ⁺_g) over e ∈ V, e = f ⊕ g with f, g ∈ V.
pub fn eval_lbr_extensive(grid: &Grid, field: &Field, x: LatticeVector, v: &Stencil) -> SchemeEval {
    eval_single(grid, field, x, PointRule::Extensive, &DirTable::lbr(v))
}

/// Adaptive evaluation over the family's stencil at x.
pub fn eval_lbr_adaptive(grid: &Grid, field: &Field, x: LatticeVector, family: &StencilFamily) -> SchemeEval {
    let i = grid.index_of(x).expect("point not in grid");
    eval_single(grid, field, x, PointRule::Adaptive { grid }, &DirTable::plain(family.stencil(i)))
}

/// Residual D u − ρ and Jacobian for a field.
pub fn assemble(grid: &Grid, field: &Field, scheme: &Scheme, rho: &[f64]) -> Result<(Vec<f64>, SparseMatrix), SchemeError> {
    if rho.len() != grid.len() {
        return Err(SchemeError::SizeMismatch { expected: grid.len(), got: rho.len() });
    }
    if field.values.len() != grid.len() {
        return Err(SchemeError::SizeMismatch { expected: grid.len(), got: field.values.len() });
    }
    let d = Discretization::new(grid, scheme, &*field.trace)?;
    Ok(d.assemble(&field.values, rho))
}

/// Operator applied to a quadratic form through Δ_e = <e, M e>.
pub mod algebraic {
    use super::*;
    use crate::lattice::SymMatrix2;

    pub fn fd(m: &SymMatrix2) -> f64 {
        fd_kernel(|e| m.quad(e)).value
    }

    pub fn ws(m: &SymMatrix2, v: &Stencil) -> Result<f64, SchemeError> {
        let t = DirTable::ws(v)?;
        let d: Vec<f64> = t.dirs.iter().map(|&e| m.quad(e)).collect();
        Ok(ws_kernel(&t, &d).value)
    }

    /// For e = f + g the quantities (b + c − a)/2, (a + c − b)/2, (a + b − c)/2
    /// of h are the bilinear forms −<f, M g>, <e, M g>, <e, M f>. Evaluating
    /// them directly avoids the cancellation of forming them from Δ values.
    pub fn lbr(m: &SymMatrix2, v: &Stencil) -> f64 {
        let t = DirTable::lbr(v);
        t.triple_vecs.iter().map(|&[e, f, g]| h_quadratic(m, e, f, g)).fold(f64::INFINITY, f64::min)
    }

    fn h_quadratic(m: &SymMatrix2, e: LatticeVector, f: LatticeVector, g: LatticeVector) -> f64 {
        let p = -m.bilinear(f, g);
        let q = m.bilinear(e, g);
        let r = m.bilinear(e, f);
        if p <= 0.0 {
            m.quad(f) * m.quad(g)
        } else if q <= 0.0 {
            m.quad(e) * m.quad(g)
        } else if r <= 0.0 {
            m.quad(e) * m.quad(f)
        } else {
            crate::lattice::dot_compensated(&[(p, q), (q, r), (r, p)])
        }
    }
}
