//! Integer lattice geometry: vectors, superbases, Selling reduction and
//! the Stern-Brocot style decomposition of irreducible vectors.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("invalid lattice vector {0}")]
    InvalidVector(LatticeVector),
    #[error("vector {0} has no decomposition")]
    NoDecomposition(LatticeVector),
    #[error("vectors do not form a superbase: {0}")]
    NotSuperbase(String),
    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("Selling reduction did not terminate within {0} steps")]
    ReductionDiverged(usize),
    #[error("stencil is invalid: {0}")]
    InvalidStencil(String),
    #[error("empty stencil for radius {0}")]
    EmptyStencil(f64),
}

/// Element of Z^2. Arithmetic panics on i64 overflow.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct LatticeVector {
    pub a: i64,
    pub b: i64,
}

impl fmt::Debug for LatticeVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.a, self.b)
    }
}

impl fmt::Display for LatticeVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.a, self.b)
    }
}

#[inline]
pub const fn lv(a: i64, b: i64) -> LatticeVector {
    LatticeVector { a, b }
}

impl LatticeVector {
    pub const ZERO: LatticeVector = lv(0, 0);

    pub const fn new(a: i64, b: i64) -> Self {
        LatticeVector { a, b }
    }

    pub fn is_zero(self) -> bool {
        self.a == 0 && self.b == 0
    }

    pub fn norm2(self) -> i64 {
        self.a
            .checked_mul(self.a)
            .and_then(|x| self.b.checked_mul(self.b).and_then(|y| x.checked_add(y)))
            .expect("lattice norm overflow")
    }

    pub fn norm(self) -> f64 {
        (self.a as f64).hypot(self.b as f64)
    }

    pub fn norm_inf(self) -> i64 {
        self.a.abs().max(self.b.abs())
    }

    pub fn dot(self, o: LatticeVector) -> i64 {
        self.a * o.a + self.b * o.b
    }

    /// Determinant of the 2x2 matrix with columns `self`, `o`.
    pub fn det(self, o: LatticeVector) -> i64 {
        self.a * o.b - self.b * o.a
    }

    /// Counter-clockwise quarter turn.
    pub fn rot90(self) -> LatticeVector {
        lv(-self.b, self.a)
    }

    pub fn rot270(self) -> LatticeVector {
        lv(self.b, -self.a)
    }

    pub fn to_f64(self) -> [f64; 2] {
        [self.a as f64, self.b as f64]
    }

    pub fn checked_add(self, o: LatticeVector) -> Option<LatticeVector> {
        Some(lv(self.a.checked_add(o.a)?, self.b.checked_add(o.b)?))
    }

    pub fn checked_sub(self, o: LatticeVector) -> Option<LatticeVector> {
        Some(lv(self.a.checked_sub(o.a)?, self.b.checked_sub(o.b)?))
    }

    pub fn gcd(self) -> i64 {
        gcd(self.a, self.b)
    }

    pub fn is_irreducible(self) -> bool {
        self.gcd() == 1
    }

    /// Representative of {e, -e}: second coordinate positive, or zero with a > 0.
    pub fn is_upper(self) -> bool {
        self.b > 0 || (self.b == 0 && self.a > 0)
    }

    pub fn upper(self) -> LatticeVector {
        if self.is_upper() {
            self
        } else {
            -self
        }
    }
}

impl Add for LatticeVector {
    type Output = LatticeVector;
    fn add(self, o: LatticeVector) -> LatticeVector {
        self.checked_add(o).expect("lattice coordinate overflow")
    }
}

impl Sub for LatticeVector {
    type Output = LatticeVector;
    fn sub(self, o: LatticeVector) -> LatticeVector {
        self.checked_sub(o).expect("lattice coordinate overflow")
    }
}

impl Neg for LatticeVector {
    type Output = LatticeVector;
    fn neg(self) -> LatticeVector {
        lv(
            self.a.checked_neg().expect("lattice coordinate overflow"),
            self.b.checked_neg().expect("lattice coordinate overflow"),
        )
    }
}

impl Mul<LatticeVector> for i64 {
    type Output = LatticeVector;
    fn mul(self, v: LatticeVector) -> LatticeVector {
        lv(
            self.checked_mul(v.a).expect("lattice coordinate overflow"),
            self.checked_mul(v.b).expect("lattice coordinate overflow"),
        )
    }
}

pub fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.unsigned_abs(), b.unsigned_abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a as i64
}

/// gcd of the two coordinates of `e`.
pub fn gcd_vec(e: LatticeVector) -> Result<i64, LatticeError> {
    if e.is_zero() {
        return Err(LatticeError::InvalidVector(e));
    }
    Ok(e.gcd())
}

// (g, x, y) with a x + b y = g, for a, b >= 0.
fn ext_gcd(a: i64, b: i64) -> (i64, i64, i64) {
    let (mut r0, mut r1) = (a as i128, b as i128);
    let (mut s0, mut s1) = (1i128, 0i128);
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (s0, s1) = (s1, s0 - q * s1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    (r0 as i64, s0 as i64, t0 as i64)
}

// Decomposition in the open positive quadrant.
fn decompose_positive(e: LatticeVector) -> (LatticeVector, LatticeVector) {
    let (a, b) = (e.a, e.b);
    debug_assert!(a > 0 && b > 0);
    // a v - b u = 1
    let (_, x, y) = ext_gcd(a, b);
    let u0 = -(y as i128);
    let v0 = x as i128;
    let (ai, bi) = (a as i128, b as i128);
    let u = u0.rem_euclid(ai);
    let k = (u - u0) / ai;
    let v = v0 + k * bi;
    debug_assert!(ai * v - bi * u == 1);
    let (u, v) = (u as i64, v as i64);
    let g = lv(u, v);
    let f = lv(a - u, b - v);
    (f, g)
}

/// Unique (f, g) with e = f + g, det(f, g) = 1 and <f, g> >= 0,
/// for irreducible off-axis e.
pub fn decompose(e: LatticeVector) -> Result<(LatticeVector, LatticeVector), LatticeError> {
    if e.a == 0 || e.b == 0 || !e.is_irreducible() {
        return Err(LatticeError::NoDecomposition(e));
    }
    // rotate into the open positive quadrant, counting quarter turns
    let mut v = e;
    let mut turns = 0;
    while !(v.a > 0 && v.b > 0) {
        v = v.rot270();
        turns += 1;
    }
    let (mut f, mut g) = decompose_positive(v);
    for _ in 0..turns {
        f = f.rot90();
        g = g.rot90();
    }
    Ok((f, g))
}

/// (f + e, e + g) where (f, g) = decompose(e).
pub fn children(e: LatticeVector) -> Result<(LatticeVector, LatticeVector), LatticeError> {
    let (f, g) = decompose(e)?;
    Ok((f + e, e + g))
}

/// Parent in the Stern-Brocot tree: the longer of the two factors, or None
/// for the eight shortest irreducible vectors.
pub fn parent(e: LatticeVector) -> Result<Option<LatticeVector>, LatticeError> {
    if e.is_zero() || !e.is_irreducible() {
        return Err(LatticeError::InvalidVector(e));
    }
    if e.norm2() <= 2 {
        return Ok(None);
    }
    let (f, g) = decompose(e)?;
    Ok(Some(if g.norm2() > f.norm2() { g } else { f }))
}

/// Symmetric 2x2 matrix [[m11, m12], [m12, m22]].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymMatrix2 {
    pub m11: f64,
    pub m12: f64,
    pub m22: f64,
}

// exact product as a sum of two floats
#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Compensated sum of products; accurate to a few ulps of the result.
pub fn dot_compensated(terms: &[(f64, f64)]) -> f64 {
    let mut s = 0.0;
    let mut c = 0.0;
    for &(x, y) in terms {
        let (p, ep) = two_prod(x, y);
        let (t, es) = two_sum(s, p);
        s = t;
        c += ep + es;
    }
    s + c
}

impl SymMatrix2 {
    pub const IDENTITY: SymMatrix2 = SymMatrix2 { m11: 1.0, m12: 0.0, m22: 1.0 };

    pub fn new(m11: f64, m12: f64, m22: f64) -> Self {
        SymMatrix2 { m11, m12, m22 }
    }

    /// kappa^-1 e_theta e_theta^T + kappa e_theta^perp (e_theta^perp)^T, unit determinant.
    pub fn from_kappa_theta(kappa: f64, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        let k = kappa;
        let ik = 1.0 / kappa;
        SymMatrix2 {
            m11: ik * c * c + k * s * s,
            m12: (ik - k) * c * s,
            m22: ik * s * s + k * c * c,
        }
    }

    pub fn scaled(self, s: f64) -> Self {
        SymMatrix2::new(self.m11 * s, self.m12 * s, self.m22 * s)
    }

    /// Determinant with a fused multiply-add correction.
    pub fn det(&self) -> f64 {
        let w = self.m12 * self.m12;
        let e = (-self.m12).mul_add(self.m12, w);
        let f = self.m11.mul_add(self.m22, -w);
        f + e
    }

    pub fn trace(&self) -> f64 {
        self.m11 + self.m22
    }

    /// Eigenvalues in increasing order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let half_tr = 0.5 * self.trace();
        let d = 0.5 * (self.m11 - self.m22);
        let r = d.hypot(self.m12);
        let hi = half_tr + r;
        // product is the determinant; avoids cancellation in the small one
        let lo = if hi != 0.0 { self.det() / hi } else { half_tr - r };
        (lo.min(hi), hi.max(lo))
    }

    pub fn is_spd(&self) -> bool {
        self.m11 > 0.0 && self.m22 > 0.0 && self.det() > 0.0 && self.m11.is_finite() && self.m22.is_finite() && self.m12.is_finite()
    }

    pub fn condition_number(&self) -> f64 {
        let (lo, hi) = self.eigenvalues();
        hi / lo
    }

    pub fn inverse(&self) -> SymMatrix2 {
        let d = self.det();
        SymMatrix2::new(self.m22 / d, -self.m12 / d, self.m11 / d)
    }

    /// <e, M f>, compensated.
    pub fn bilinear(&self, e: LatticeVector, f: LatticeVector) -> f64 {
        let (ea, eb, fa, fb) = (e.a as f64, e.b as f64, f.a as f64, f.b as f64);
        dot_compensated(&[
            (self.m11, ea * fa),
            (self.m12, ea * fb),
            (self.m12, eb * fa),
            (self.m22, eb * fb),
        ])
    }

    /// <e, M e>.
    pub fn quad(&self, e: LatticeVector) -> f64 {
        self.bilinear(e, e)
    }

    pub fn quad_f64(&self, x: [f64; 2]) -> f64 {
        self.m11 * x[0] * x[0] + 2.0 * self.m12 * x[0] * x[1] + self.m22 * x[1] * x[1]
    }
}

/// Triple (e0, e1, e2) with e0 + e1 + e2 = 0 and |det(e1, e2)| = 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Superbase {
    v: [LatticeVector; 3],
}

impl Superbase {
    pub fn new(e0: LatticeVector, e1: LatticeVector, e2: LatticeVector) -> Result<Self, LatticeError> {
        let sum = e0.checked_add(e1).and_then(|s| s.checked_add(e2));
        if sum != Some(LatticeVector::ZERO) {
            return Err(LatticeError::NotSuperbase(format!("{e0} + {e1} + {e2} != 0")));
        }
        if e1.det(e2).abs() != 1 {
            return Err(LatticeError::NotSuperbase(format!("|det({e1}, {e2})| != 1")));
        }
        Ok(Superbase { v: [e0, e1, e2] })
    }

    /// ((-1,-1), (1,0), (0,1)).
    pub fn standard() -> Self {
        Superbase { v: [lv(-1, -1), lv(1, 0), lv(0, 1)] }
    }

    pub fn vectors(&self) -> [LatticeVector; 3] {
        self.v
    }

    pub fn e(&self, i: usize) -> LatticeVector {
        self.v[i]
    }

    /// Representative of the class under permutations: e0 is the
    /// lexicographic maximum and det(e1, e2) = +1.
    pub fn canonical(&self) -> Superbase {
        let mut idx = 0;
        for i in 1..3 {
            if self.v[i] > self.v[idx] {
                idx = i;
            }
        }
        let e0 = self.v[idx];
        let mut e1 = self.v[(idx + 1) % 3];
        let mut e2 = self.v[(idx + 2) % 3];
        if e1.det(e2) < 0 {
            std::mem::swap(&mut e1, &mut e2);
        }
        Superbase { v: [e0, e1, e2] }
    }

    pub fn is_obtuse(&self, m: &SymMatrix2) -> bool {
        (0..3).all(|i| (i + 1..3).all(|j| m.bilinear(self.v[i], self.v[j]) <= 0.0))
    }

    /// Sum of <e_i, M e_i>.
    pub fn energy(&self, m: &SymMatrix2) -> f64 {
        self.v.iter().map(|&e| m.quad(e)).sum()
    }
}

#[derive(Clone, Debug)]
pub struct SellingResult {
    pub superbase: Superbase,
    pub steps: usize,
    /// Energy before each step and after the last one.
    pub energy_trace: Vec<f64>,
}

fn selling_cap(m: &SymMatrix2) -> usize {
    let cond = m.condition_number();
    (64.0 * (1.0 + cond.log2().max(0.0))).ceil() as usize
}

/// Selling's algorithm, producing an M-obtuse superbase. Starts from
/// `Superbase::standard()` unless `init` is given.
pub fn selling_reduce(m: &SymMatrix2, init: Option<Superbase>) -> Result<SellingResult, LatticeError> {
    if !m.is_spd() {
        return Err(LatticeError::NotPositiveDefinite);
    }
    let cap = selling_cap(m);
    let mut sb = init.unwrap_or_else(Superbase::standard);
    let mut trace = vec![sb.energy(m)];
    let mut steps = 0;
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let p = m.bilinear(sb.v[i], sb.v[j]);
            if p > 0.0 && best.map_or(true, |(_, _, q)| p > q) {
                best = Some((i, j, p));
            }
        }
        let Some((i, j, _)) = best else { break };
        if steps >= cap {
            return Err(LatticeError::ReductionDiverged(cap));
        }
        let k = 3 - i - j;
        let (ei, ej) = (sb.v[i], sb.v[j]);
        let mut nv = [LatticeVector::ZERO; 3];
        nv[i] = ei - ej;
        nv[j] = ej;
        nv[k] = -ei;
        sb = Superbase { v: nv };
        steps += 1;
        trace.push(sb.energy(m));
    }
    Ok(SellingResult { superbase: sb, steps, energy_trace: trace })
}

/// Finite symmetric set of irreducible nonzero vectors.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Stencil {
    set: BTreeSet<LatticeVector>,
}

impl Stencil {
    /// Builds the symmetric closure of `vectors`; fails on zero or
    /// reducible entries.
    pub fn new<I: IntoIterator<Item = LatticeVector>>(vectors: I) -> Result<Self, LatticeError> {
        let mut set = BTreeSet::new();
        for e in vectors {
            if e.is_zero() {
                return Err(LatticeError::InvalidVector(e));
            }
            if !e.is_irreducible() {
                return Err(LatticeError::InvalidVector(e));
            }
            set.insert(e);
            set.insert(-e);
        }
        Ok(Stencil { set })
    }

    /// Irreducible representatives of the directions of `vectors`.
    pub fn normalize<I: IntoIterator<Item = LatticeVector>>(vectors: I) -> Result<Self, LatticeError> {
        let mut out = Vec::new();
        for e in vectors {
            if e.is_zero() {
                return Err(LatticeError::InvalidVector(e));
            }
            let g = e.gcd();
            out.push(lv(e.a / g, e.b / g));
        }
        Stencil::new(out)
    }

    /// {(+-1, 0), (0, +-1), (+-1, +-1)}.
    pub fn v8() -> Self {
        Stencil::new([lv(1, 0), lv(0, 1), lv(1, 1), lv(1, -1)]).unwrap()
    }

    /// Irreducible vectors with Euclidean norm at most `r`.
    pub fn ball(r: f64) -> Result<Self, LatticeError> {
        if !(r.is_finite() && r >= 1.0) {
            return Err(LatticeError::EmptyStencil(r));
        }
        let k = r.floor() as i64;
        let r2 = r * r;
        let mut set = BTreeSet::new();
        for a in -k..=k {
            for b in -k..=k {
                let e = lv(a, b);
                if !e.is_zero() && e.is_irreducible() && (e.norm2() as f64) <= r2 {
                    set.insert(e);
                }
            }
        }
        Ok(Stencil { set })
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    pub fn contains(&self, e: LatticeVector) -> bool {
        self.set.contains(&e)
    }

    pub fn iter(&self) -> impl Iterator<Item = LatticeVector> + '_ {
        self.set.iter().copied()
    }

    /// One vector out of each pair {e, -e}.
    pub fn half(&self) -> impl Iterator<Item = LatticeVector> + '_ {
        self.set.iter().copied().filter(|e| e.is_upper())
    }

    pub fn insert(&mut self, e: LatticeVector) {
        assert!(e.is_irreducible(), "stencil vectors must be irreducible");
        self.set.insert(e);
        self.set.insert(-e);
    }

    pub fn is_superset_of(&self, other: &Stencil) -> bool {
        other.set.is_subset(&self.set)
    }

    /// Every vector beyond the shortest eight has its parent in the set.
    pub fn is_parent_closed(&self) -> bool {
        self.set
            .iter()
            .all(|&e| matches!(parent(e), Ok(None)) || matches!(parent(e), Ok(Some(p)) if self.set.contains(&p)))
    }

    pub fn max_norm_inf(&self) -> i64 {
        self.set.iter().map(|e| e.norm_inf()).max().unwrap_or(0)
    }
}

/// Canonical superbase classes generated by the stencil: for each e in V
/// with e = f + g (decomposition) and f, g in V, the class of (e, -f, -g).
/// Classes are taken up to permutation; a class and its negative are
/// listed separately.
pub fn enumerate_superbases(v: &Stencil) -> Vec<Superbase> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for e in v.iter() {
        let Ok((f, g)) = decompose(e) else { continue };
        if !(v.contains(f) && v.contains(g)) {
            continue;
        }
        let sb = Superbase { v: [e, -f, -g] }.canonical();
        if seen.insert(sb) {
            out.push(sb);
        }
    }
    out
}

/// Area of {l : |<l, e_i>| <= delta_i}, by clipping a bounding square.
pub fn polygon_area_oracle(delta: [f64; 3], sb: &Superbase) -> f64 {
    let e = sb.vectors();
    let ef: Vec<[f64; 2]> = e.iter().map(|v| v.to_f64()).collect();
    // |<l,e1>| <= d1 and |<l,e2>| <= d2 bound l inside a parallelogram
    let r = delta[1] * e[2].norm() + delta[2] * e[1].norm() + 1.0;
    let mut poly = vec![[-r, -r], [r, -r], [r, r], [-r, r]];
    for i in 0..3 {
        for s in [1.0, -1.0] {
            let n = [s * ef[i][0], s * ef[i][1]];
            poly = clip_halfplane(&poly, n, delta[i]);
        }
    }
    shoelace(&poly)
}

fn clip_halfplane(poly: &[[f64; 2]], n: [f64; 2], c: f64) -> Vec<[f64; 2]> {
    let val = |p: [f64; 2]| n[0] * p[0] + n[1] * p[1] - c;
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        let (vp, vq) = (val(p), val(q));
        if vp <= 0.0 {
            out.push(p);
        }
        if (vp < 0.0 && vq > 0.0) || (vp > 0.0 && vq < 0.0) {
            let t = vp / (vp - vq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    out
}

pub(crate) fn shoelace(poly: &[[f64; 2]]) -> f64 {
    let mut s = 0.0;
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        s += p[0] * q[1] - p[1] * q[0];
    }
    0.5 * s.abs()
}
