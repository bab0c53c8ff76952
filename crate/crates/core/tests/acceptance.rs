//! Acceptance suite. Each test prints one `[PASS]` or `[FAIL]` line and then
//! asserts. Tests share a lock so that wall-clock limits are measured
//! without contention from the other tests in this binary.

use std::f64::consts::{FRAC_PI_3, PI};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Instant;

use mongeampere::grid::{build_stencil_family, discretize, second_difference, ConvexDomain, Field, Grid, StencilConfig};
use mongeampere::harness::{make_case, run_convergence, RunConfig, SchemeChoice};
use mongeampere::lattice::{children, decompose, lv, parent, polygon_area_oracle, selling_reduce, LatticeVector, Stencil, Superbase, SymMatrix2};
use mongeampere::schemes::{algebraic, eval_lbr_adaptive, h_func, Active, Discretization, Scheme, SchemeKind};
use mongeampere::solver::{damped_newton, NewtonOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static LOCK: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(name: &str, ok: bool, detail: String) {
    println!("[{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{name}: {detail}");
}

/// det of the stored matrix with error-free products.
fn exact_det(m: &SymMatrix2) -> f64 {
    let p = m.m11 * m.m22;
    let ep = m.m11.mul_add(m.m22, -p);
    let q = m.m12 * m.m12;
    let eq = m.m12.mul_add(m.m12, -q);
    (p - q) + (ep - eq)
}

/// Random SPD matrix with eigenvalues scale·(κ, 1/κ), κ ≤ sqrt(max_cond).
fn random_spd(rng: &mut ChaCha8Rng, max_cond: f64) -> (SymMatrix2, f64) {
    let kappa = rng.gen_range(1.0..=max_cond.sqrt());
    let theta = rng.gen_range(0.0..PI);
    let s = rng.gen_range(0.2..5.0);
    let (l1, l2) = (s * kappa, s / kappa);
    let (c, si) = (theta.cos(), theta.sin());
    let m = SymMatrix2::new(l1 * c * c + l2 * si * si, (l1 - l2) * c * si, l1 * si * si + l2 * c * c);
    (m, kappa * kappa)
}

fn quad(m: &SymMatrix2, e: LatticeVector, f: LatticeVector) -> f64 {
    let (a, b, c, d) = (e.a as f64, e.b as f64, f.a as f64, f.b as f64);
    m.m11 * a * c + m.m12 * (a * d + b * c) + m.m22 * b * d
}

#[test]
fn quadratic_exact_recovery() {
    let _g = serial();
    let t0 = Instant::now();
    let n = 64;
    let m = SymMatrix2::from_kappa_theta(10.0, FRAC_PI_3);
    let case = make_case("quadratic").unwrap();
    let grid = discretize(&ConvexDomain::unit_square(), n).unwrap();
    let h = grid.scale_h();
    let rho: Vec<f64> = grid.points().iter().map(|x| h.powi(4) * (case.rho)([x.a as f64 * h, x.b as f64 * h])).collect();
    let exact = move |p: [f64; 2]| {
        let (x, y) = (p[0] * h, p[1] * h);
        0.5 * (m.m11 * x * x + 2.0 * m.m12 * x * y + m.m22 * y * y)
    };
    let sigma: mongeampere::BoundaryTrace = Arc::new(exact);
    let scheme = SchemeChoice::lbr_default().build(&grid).unwrap();
    let res = damped_newton(&grid, &scheme, &rho, &sigma, &NewtonOptions::default());
    let secs = t0.elapsed().as_secs_f64();
    let (ok, detail) = match res {
        Ok((u, rep)) => {
            let ue: Vec<f64> = grid.points().iter().map(|x| exact(x.to_f64())).collect();
            let err = u.values.iter().zip(&ue).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            let scale = ue.iter().fold(0.0f64, |a, y| a.max(y.abs()));
            (
                rep.converged && err <= 1e-8 * scale && secs <= 10.0,
                format!("converged={} iters={} rel_err={:.3e} time={secs:.2}s", rep.converged, rep.iterations, err / scale),
            )
        }
        Err(e) => (false, format!("solver error: {e}")),
    };
    report("quadratic_exact_recovery", ok, detail);
}

#[test]
fn lbr_consistency_on_quadratics() {
    let _g = serial();
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let kappa = 10.0;
    let v = Stencil::ball(2.0 * kappa).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (m, _) = random_spd(&mut rng, kappa * kappa);
        let d = algebraic::lbr(&m, &v);
        let det = exact_det(&m);
        worst = worst.max(((d - det) / det).abs());
    }
    let secs = t0.elapsed().as_secs_f64();
    report(
        "lbr_consistency_on_quadratics",
        worst <= 1e-12 && secs <= 5.0,
        format!("1000 matrices, max rel err {worst:.3e}, time {secs:.2}s"),
    );
}

#[test]
fn overestimation_invariants() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let stencils: Vec<Stencil> = [1.5, 2.3, 3.2, 5.0].iter().map(|&r| Stencil::ball(r).unwrap()).collect();
    let mut mats: Vec<SymMatrix2> = Vec::new();
    for i in 0..50 {
        for j in 0..50 {
            let k = 1.0 + 11.0 * i as f64 / 49.0;
            mats.push(SymMatrix2::from_kappa_theta(k, PI * j as f64 / 49.0));
        }
    }
    for _ in 0..1000 {
        mats.push(random_spd(&mut rng, 1e4).0);
    }
    let mut worst_lbr = f64::INFINITY;
    let mut worst_ws = f64::INFINITY;
    let mut at = String::new();
    for m in &mats {
        let det = exact_det(m);
        for v in &stencils {
            let l = (algebraic::lbr(m, v) - det) / det;
            let w = (algebraic::ws(m, v).unwrap() - det) / det;
            if l < worst_lbr {
                worst_lbr = l;
                at = format!("{m:?} on {} points", v.len());
            }
            worst_ws = worst_ws.min(w);
        }
    }
    report(
        "overestimation_invariants",
        worst_lbr >= -1e-14 && worst_ws >= -1e-14,
        format!("{} matrices x 4 stencils, min rel lbr {worst_lbr:.3e} (at {at}), min rel ws {worst_ws:.3e}", mats.len()),
    );
}

#[test]
fn selling_reduction_suite() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut failures = Vec::new();
    let mut max_steps = 0;
    for _ in 0..1000 {
        let (m, cond) = random_spd(&mut rng, 1e4);
        let r = match selling_reduce(&m, None) {
            Ok(r) => r,
            Err(e) => {
                failures.push(format!("{m:?}: {e}"));
                continue;
            }
        };
        max_steps = max_steps.max(r.steps);
        let e = r.superbase.vectors();
        if e[0] + e[1] + e[2] != lv(0, 0) || e[0].det(e[1]).abs() != 1 {
            failures.push(format!("{m:?}: not a superbase"));
        }
        for i in 0..3 {
            for j in i + 1..3 {
                if quad(&m, e[i], e[j]) > 0.0 {
                    failures.push(format!("{m:?}: not obtuse"));
                }
            }
            if e[i].norm2() as f64 > 2.0 * cond * (1.0 + 1e-9) {
                failures.push(format!("{m:?}: |e|^2 = {} exceeds {}", e[i].norm2(), 2.0 * cond));
            }
        }
        let energy: f64 = e.iter().map(|&v| quad(&m, v, v)).sum();
        let last = *r.energy_trace.last().unwrap();
        if (energy - last).abs() > 1e-9 * energy || r.energy_trace.windows(2).any(|w| w[1] >= w[0]) {
            failures.push(format!("{m:?}: energy trace {:?}", r.energy_trace));
        }
    }
    report(
        "selling_reduction_suite",
        failures.is_empty(),
        format!("1000 matrices, max steps {max_steps}, failures {}{}", failures.len(), failures.first().map(|f| format!(" e.g. {f}")).unwrap_or_default()),
    );
}

fn small_grids(rng: &mut ChaCha8Rng, count: usize) -> Vec<Grid> {
    (0..count)
        .map(|k| {
            let n = rng.gen_range(8..=16);
            let dom = if k % 2 == 0 {
                ConvexDomain::unit_square()
            } else {
                ConvexDomain::new_disk([0.5, 0.5], rng.gen_range(0.35..0.5)).unwrap()
            };
            discretize(&dom, n).unwrap()
        })
        .collect()
}

fn random_config(rng: &mut ChaCha8Rng) -> StencilConfig {
    let pick = |rng: &mut ChaCha8Rng| mongeampere::grid::stencil_with_points([8, 16, 24, 48][rng.gen_range(0..4)]).unwrap();
    let interior = pick(rng);
    let boundary = pick(rng);
    StencilConfig { interior, boundary, boundary_layer_width: rng.gen_range(0..4) }
}

/// Smooth strictly convex function in lattice units.
fn random_convex(rng: &mut ChaCha8Rng) -> mongeampere::BoundaryTrace {
    let (m, _) = random_spd(rng, 50.0);
    let w = [rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)];
    let c = rng.gen_range(0.0..1.0);
    let b = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    Arc::new(move |p: [f64; 2]| {
        0.5 * m.quad_f64(p) + c * (w[0] * p[0] + w[1] * p[1]).exp() + b[0] * p[0] + b[1] * p[1]
    })
}

/// Minimum of h(Δ⁺) over every superbase whose vectors all lie in ±V.
fn brute_force_extensive(grid: &Grid, field: &Field, x: LatticeVector, v: &Stencil) -> f64 {
    let upper: Vec<LatticeVector> = v.iter().filter(|e| e.is_upper()).collect();
    let delta: std::collections::HashMap<LatticeVector, f64> =
        upper.iter().map(|&e| (e, second_difference(grid, field, x, e).max(0.0))).collect();
    let get = |e: LatticeVector| delta.get(&e.upper()).copied();
    let mut best = f64::INFINITY;
    for (i, &u) in upper.iter().enumerate() {
        for &w in &upper[i + 1..] {
            if u.det(w).abs() != 1 {
                continue;
            }
            for t in [u + w, u - w] {
                if let Some(dt) = get(t) {
                    best = best.min(h_func(delta[&u], delta[&w], dt).unwrap());
                }
            }
        }
    }
    best
}

#[test]
fn adaptive_matches_extensive_oracle() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = Vec::new();
    let mut below = Vec::new();
    let mut points = 0;
    let grids = small_grids(&mut rng, 200);
    for (k, grid) in grids.iter().enumerate() {
        let family = build_stencil_family(grid, &random_config(&mut rng)).unwrap();
        let ext = family.extended(grid);
        let sigma = random_convex(&mut rng);
        let convex = Field::from_fn(grid, sigma.clone());
        let noisy = Field {
            values: convex.values.iter().map(|v| v + rng.gen_range(-2.0..2.0)).collect(),
            trace: sigma.clone(),
        };
        for (i, &x) in grid.points().iter().enumerate() {
            points += 1;
            let a = eval_lbr_adaptive(grid, &convex, x, &family).value;
            let b = brute_force_extensive(grid, &convex, x, ext.stencil(i));
            if a != b {
                mismatches.push(format!("grid {k} at {x}: adaptive {a} vs extensive {b}"));
            }
            let a = eval_lbr_adaptive(grid, &noisy, x, &family).value;
            let b = brute_force_extensive(grid, &noisy, x, ext.stencil(i));
            if a < b {
                below.push(format!("grid {k} at {x}: adaptive {a} < extensive {b}"));
            }
        }
    }
    report(
        "adaptive_matches_extensive_oracle",
        mismatches.is_empty() && below.is_empty(),
        format!(
            "200 convex + 200 unconstrained fields, {points} points each, equality failures {}, ordering failures {}{}",
            mismatches.len(),
            below.len(),
            mismatches.iter().chain(&below).next().map(|f| format!(" e.g. {f}")).unwrap_or_default()
        ),
    );
}

#[test]
fn discrete_convexity_equivalence() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let grids = small_grids(&mut rng, 10);
    let mut failures = Vec::new();
    let (mut pos, mut nonpos) = (0usize, 0usize);
    for f in 0..500 {
        let grid = &grids[f % grids.len()];
        let family = build_stencil_family(grid, &random_config(&mut rng)).unwrap();
        let sigma = random_convex(&mut rng);
        let base = Field::from_fn(grid, sigma.clone());
        let amp = [0.0, 0.05, 0.3, 2.0][f % 4];
        let values: Vec<f64> = base.values.iter().map(|v| v + amp * rng.gen_range(-1.0..1.0)).collect();
        let field = Field { values, trace: sigma };
        let scheme = Scheme::new(SchemeKind::LbrExtensive(family.clone()));
        let disc = Discretization::new(grid, &scheme, &*field.trace).unwrap();
        for (i, &x) in grid.points().iter().enumerate() {
            let d = disc.value(&field.values, i);
            let all = family.stencil(i).iter().all(|e| second_difference(grid, &field, x, e) > 0.0);
            if d > 0.0 {
                pos += 1;
            } else {
                nonpos += 1;
            }
            if (d > 0.0) != all {
                failures.push(format!("field {f} at {x}: D = {d}, all positive = {all}"));
            }
        }
    }
    report(
        "discrete_convexity_equivalence",
        failures.is_empty() && pos > 0 && nonpos > 0,
        format!("500 fields, {pos} positive / {nonpos} nonpositive points, failures {}{}", failures.len(), failures.first().map(|f| format!(" e.g. {f}")).unwrap_or_default()),
    );
}

fn random_superbase(rng: &mut ChaCha8Rng, max_norm: f64) -> Superbase {
    loop {
        let mut f = lv(1, 0);
        let mut g = lv(0, 1);
        for _ in 0..rng.gen_range(0..8) {
            match rng.gen_range(0..4) {
                0 => f = f + g,
                1 => g = g + f,
                2 => f = f - g,
                _ => g = g - f,
            }
        }
        let sb = Superbase::new(f, g, -(f + g)).unwrap();
        if sb.vectors().iter().all(|e| e.norm() <= max_norm) {
            return sb;
        }
    }
}

#[test]
fn h_area_oracle() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let sb = random_superbase(&mut rng, 10.0);
        let d = [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)];
        let a = polygon_area_oracle(d, &sb) / 4.0;
        worst = worst.max((a - h_func(d[0], d[1], d[2]).unwrap()).abs());
    }
    report("h_area_oracle", worst <= 1e-9, format!("1000 samples, max abs diff {worst:.3e}"));
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 { a.abs() } else { gcd(b, a % b) }
}

#[test]
fn stern_brocot_arithmetic() {
    let _g = serial();
    let mut failures = Vec::new();
    let mut checked = 0;
    for a in -50i64..=50 {
        for b in -50i64..=50 {
            if a == 0 || b == 0 || gcd(a, b) != 1 {
                continue;
            }
            let e = lv(a, b);
            checked += 1;
            let (f, g) = decompose(e).unwrap();
            if f + g != e || f.det(g) != 1 || f.dot(g) < 0 {
                failures.push(format!("decompose({e}) = ({f}, {g})"));
            }
            if e.norm_inf() <= 12 {
                let mut found = Vec::new();
                for p in -12i64..=12 {
                    for q in -12i64..=12 {
                        let f2 = lv(p, q);
                        let g2 = e - f2;
                        if f2.det(g2) == 1 && f2.dot(g2) >= 0 {
                            found.push((f2, g2));
                        }
                    }
                }
                if found != vec![(f, g)] {
                    failures.push(format!("uniqueness at {e}: {found:?}"));
                }
            }
            if e.norm2() > 2 {
                match parent(e) {
                    Ok(Some(p)) => {
                        if p != f && p != g {
                            failures.push(format!("parent({e}) = {p}"));
                        }
                        let (c1, c2) = children(p).unwrap();
                        if c1 != e && c2 != e {
                            failures.push(format!("{e} not among children of {p}"));
                        }
                    }
                    other => failures.push(format!("parent({e}) = {other:?}")),
                }
            }
            if a > 0 && b > 0 {
                // closed triangle (1,0), (0,1), e via signed areas
                let inside = |v: LatticeVector| {
                    let (p0, p1, p2) = (lv(1, 0), lv(0, 1), e);
                    let s = |o: LatticeVector, u: LatticeVector, w: LatticeVector| (u - o).det(w - o);
                    let (d0, d1, d2) = (s(p0, p1, v), s(p1, p2, v), s(p2, p0, v));
                    (d0 >= 0 && d1 >= 0 && d2 >= 0) || (d0 <= 0 && d1 <= 0 && d2 <= 0)
                };
                if !inside(f) || !inside(g) {
                    failures.push(format!("({f}, {g}) outside triangle of {e}"));
                }
            }
        }
    }
    report(
        "stern_brocot_arithmetic",
        failures.is_empty(),
        format!("{checked} vectors, failures {}{}", failures.len(), failures.first().map(|f| format!(" e.g. {f}")).unwrap_or_default()),
    );
}

fn slope(ns: &[usize], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| -e.ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

#[test]
fn convergence_properties() {
    let _g = serial();
    let t0 = Instant::now();
    let sizes = vec![17, 33, 65, 129];
    let cone = run_convergence(&RunConfig::new("smoothed_cone", SchemeChoice::lbr_default(), sizes.clone())).unwrap();
    let sing = run_convergence(&RunConfig::new("singular", SchemeChoice::lbr_default(), sizes.clone())).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let errs: Vec<f64> = cone.iter().map(|r| r.errors.linf).collect();
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    let order = slope(&sizes, &errs);
    let iters: Vec<usize> = sing.iter().map(|r| r.newton_iters).collect();
    let all_conv = cone.iter().chain(&sing).all(|r| r.status == "converged");
    report(
        "convergence_properties",
        all_conv && decreasing && order >= 1.0 && iters.iter().all(|&k| k <= 8) && secs <= 300.0,
        format!(
            "cone linf {errs:?} order {order:.3}; singular iterations {iters:?}; statuses {:?}; time {secs:.1}s",
            cone.iter().chain(&sing).map(|r| r.status.as_str()).collect::<Vec<_>>()
        ),
    );
}

#[test]
fn fd_universal_consistency() {
    let _g = serial();
    let mut worst = 0.0f64;
    for i in 0..50 {
        for j in 0..50 {
            let k = 1.0 + 11.0 * i as f64 / 49.0;
            let m = SymMatrix2::from_kappa_theta(k, PI * j as f64 / 49.0);
            let det = exact_det(&m);
            worst = worst.max(((algebraic::fd(&m) - det) / det).abs());
        }
    }
    report("fd_universal_consistency", worst <= 1e-13, format!("50x50 map, max |rel err| {worst:.3e}"));
}

fn same_branch(a: &Active, b: &Active) -> bool {
    a == b
}

/// Derivative rows against central differences of the operator.
fn jacobian_check(rng: &mut ChaCha8Rng, make: &dyn Fn(&Grid) -> Scheme) -> (usize, f64, usize) {
    let t = 1e-5;
    let mut accepted = 0;
    let mut worst = 0.0f64;
    let mut tries = 0;
    while accepted < 100 && tries < 20_000 {
        tries += 1;
        let dom = if tries % 2 == 0 {
            ConvexDomain::unit_square()
        } else {
            ConvexDomain::new_disk([0.5, 0.5], 0.45).unwrap()
        };
        let grid = discretize(&dom, 14).unwrap();
        let scheme = make(&grid);
        let sigma = random_convex(rng);
        let base = Field::from_fn(&grid, sigma.clone());
        let u: Vec<f64> = base.values.iter().map(|v| v + 0.05 * rng.gen_range(-1.0..1.0)).collect();
        let disc = Discretization::new(&grid, &scheme, &*sigma).unwrap();
        for _ in 0..10 {
            let i = rng.gen_range(0..grid.len());
            let ev = disc.eval(&u, i);
            if ev.value <= 1e-6 {
                continue;
            }
            let x = grid.point(i);
            let mut cols: Vec<usize> = ev.derivative.iter().map(|&(j, _)| j).collect();
            for a in -3..=3 {
                for b in -3..=3 {
                    if let Some(j) = grid.index_of(x + lv(a, b)) {
                        cols.push(j);
                    }
                }
            }
            cols.sort_unstable();
            cols.dedup();
            let scale = ev.derivative.iter().fold(0.0f64, |m, &(_, v)| m.max(v.abs()));
            let mut smooth = true;
            let mut err = 0.0f64;
            for &j in &cols {
                let mut up = u.clone();
                up[j] += t;
                let mut dn = u.clone();
                dn[j] -= t;
                let (ep, em) = (disc.eval(&up, i), disc.eval(&dn, i));
                if !same_branch(&ep.active, &ev.active) || !same_branch(&em.active, &ev.active) {
                    smooth = false;
                    break;
                }
                let fd = (ep.value - em.value) / (2.0 * t);
                let an = ev.derivative.iter().find(|&&(k, _)| k == j).map_or(0.0, |&(_, v)| v);
                err = err.max((fd - an).abs() / scale);
            }
            if smooth {
                accepted += 1;
                worst = worst.max(err);
                if accepted == 100 {
                    break;
                }
            }
        }
    }
    (accepted, worst, tries)
}

#[test]
fn jacobian_validation() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let makers: Vec<(&str, Box<dyn Fn(&Grid) -> Scheme>)> = vec![
        ("fd", Box::new(|_: &Grid| Scheme::new(SchemeKind::Fd))),
        ("ws", Box::new(|_: &Grid| Scheme::new(SchemeKind::Ws(Stencil::ball(2.3).unwrap())))),
        ("lbr-extensive", Box::new(|g: &Grid| Scheme::new(SchemeKind::LbrExtensive(build_stencil_family(g, &StencilConfig::default()).unwrap())))),
        ("lbr", Box::new(|g: &Grid| Scheme::new(SchemeKind::LbrAdaptive(build_stencil_family(g, &StencilConfig::default()).unwrap())))),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, make) in &makers {
        let (n, worst, _) = jacobian_check(&mut rng, make.as_ref());
        ok &= n == 100 && worst <= 1e-6;
        parts.push(format!("{name}: {n} points, max rel err {worst:.2e}"));
    }
    report("jacobian_validation", ok, parts.join("; "));
}
