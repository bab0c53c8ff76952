//! Quick invariant suite run by the `selftest` subcommand.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{discretize, ConvexDomain, Field};
use crate::lattice::{children, decompose, gcd, lv, parent, polygon_area_oracle, selling_reduce, Stencil, SymMatrix2};
use crate::schemes::{algebraic, h_func, Discretization};
use crate::solver::{damped_newton_from, NewtonOptions};

use super::consistency::{consistency_map, linspace, theta_samples, MapScheme};
use super::{make_case, Problem, SchemeChoice};

#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, r: Result<String, String>) -> Check {
    match r {
        Ok(detail) => Check { name, passed: true, detail },
        Err(detail) => Check { name, passed: false, detail },
    }
}

fn random_spd(rng: &mut ChaCha8Rng, max_cond: f64) -> SymMatrix2 {
    let kappa = rng.gen_range(1.0..max_cond.sqrt());
    let theta = rng.gen_range(0.0..PI);
    SymMatrix2::from_kappa_theta(kappa, theta).scaled(rng.gen_range(0.1..10.0))
}

fn stern_brocot() -> Result<String, String> {
    let mut count = 0;
    for a in -50i64..=50 {
        for b in -50i64..=50 {
            if a == 0 || b == 0 || gcd(a, b) != 1 {
                continue;
            }
            let e = lv(a, b);
            let (f, g) = decompose(e).map_err(|err| format!("{e}: {err}"))?;
            if f + g != e || f.det(g) != 1 || f.dot(g) < 0 {
                return Err(format!("decompose({e}) = ({f}, {g})"));
            }
            if e.norm2() > 2 {
                let p = parent(e).map_err(|err| err.to_string())?.ok_or(format!("no parent for {e}"))?;
                if p != f && p != g {
                    return Err(format!("parent({e}) = {p} not a component"));
                }
                let (c1, c2) = children(p).map_err(|err| err.to_string())?;
                if c1 != e && c2 != e {
                    return Err(format!("{e} not a child of {p}"));
                }
            }
            count += 1;
        }
    }
    Ok(format!("{count} vectors"))
}

fn selling(rng: &mut ChaCha8Rng) -> Result<String, String> {
    for _ in 0..500 {
        let m = random_spd(rng, 1e4);
        let r = selling_reduce(&m, None).map_err(|e| e.to_string())?;
        if !r.superbase.is_obtuse(&m) {
            return Err(format!("not obtuse for {m:?}"));
        }
        let bound = 2.0 * m.condition_number();
        if r.superbase.vectors().iter().any(|e| e.norm2() as f64 > bound) {
            return Err(format!("norm bound violated for {m:?}"));
        }
        if r.energy_trace.windows(2).any(|w| w[1] >= w[0]) {
            return Err(format!("energy not decreasing for {m:?}"));
        }
    }
    Ok("500 matrices".into())
}

fn h_bounds(rng: &mut ChaCha8Rng) -> Result<String, String> {
    for _ in 0..20_000 {
        let (a, b, c) = (rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0));
        let h = h_func(a, b, c).map_err(|e| e.to_string())?;
        let upper = (a * b).min(b * c).min(c * a);
        let lower = 0.75 * a.min(b).min(c).powi(2);
        if h > upper * (1.0 + 1e-14) || h < lower * (1.0 - 1e-14) {
            return Err(format!("h({a}, {b}, {c}) = {h} outside [{lower}, {upper}]"));
        }
        let t = rng.gen_range(0.0..1.0);
        if h_func(a + t, b, c).unwrap() < h * (1.0 - 1e-14) {
            return Err(format!("h not monotone at ({a}, {b}, {c})"));
        }
    }
    Ok("20000 triples".into())
}

fn h_area(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let mut n = 0;
    while n < 500 {
        let m = random_spd(rng, 400.0);
        let sb = selling_reduce(&m, None).map_err(|e| e.to_string())?.superbase;
        if sb.vectors().iter().any(|e| e.norm() > 10.0) {
            continue;
        }
        let d = [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)];
        let area = polygon_area_oracle(d, &sb);
        let h = h_func(d[0], d[1], d[2]).unwrap();
        if (area - 4.0 * h).abs() > 1e-9 * (1.0 + h.abs()) {
            return Err(format!("area {area} vs 4h {} for {d:?}", 4.0 * h));
        }
        n += 1;
    }
    Ok("500 samples".into())
}

fn maps() -> Result<String, String> {
    let k = linspace(1.0, 12.0, 25);
    let t = theta_samples(25);
    let fd = consistency_map(&MapScheme::Fd, &k, &t).map_err(|e| e.to_string())?;
    if fd.max_abs() > 1e-13 {
        return Err(format!("FD map max {}", fd.max_abs()));
    }
    let v8 = Stencil::v8();
    let big = Stencil::ball(2.3).map_err(|e| e.to_string())?;
    let lbr8 = consistency_map(&MapScheme::Lbr(v8.clone()), &k, &t).map_err(|e| e.to_string())?;
    let lbr16 = consistency_map(&MapScheme::Lbr(big), &k, &t).map_err(|e| e.to_string())?;
    let ws = consistency_map(&MapScheme::Ws(v8), &k, &t).map_err(|e| e.to_string())?;
    for (name, m) in [("lbr", &lbr8), ("lbr16", &lbr16), ("ws", &ws)] {
        if m.min() < -1e-14 {
            return Err(format!("{name} map entry {} below -1e-14", m.min()));
        }
    }
    if lbr16.zero_count(1e-12) < lbr8.zero_count(1e-12) {
        return Err("zero set shrank with larger stencil".into());
    }
    Ok(format!("zero entries {} (V8) / {} (16 pts)", lbr8.zero_count(1e-12), lbr16.zero_count(1e-12)))
}

fn lbr_exact_on_quadratics(rng: &mut ChaCha8Rng) -> Result<String, String> {
    for _ in 0..200 {
        let kappa = rng.gen_range(1.0..10.0f64);
        let m = SymMatrix2::from_kappa_theta(kappa, rng.gen_range(0.0..PI));
        let v = Stencil::ball(2.0 * kappa).map_err(|e| e.to_string())?;
        let d = algebraic::lbr(&m, &v);
        if ((d - m.det()) / m.det()).abs() > 1e-12 {
            return Err(format!("relative error {} at {m:?}", (d - m.det()) / m.det()));
        }
    }
    Ok("200 matrices".into())
}

fn quadratic_one_shot() -> Result<String, String> {
    let case = make_case("quadratic").map_err(|e| e.to_string())?;
    let p = Problem::new(&case, 16).map_err(|e| e.to_string())?;
    let scheme = SchemeChoice::lbr_default().build(&p.grid).map_err(|e| e.to_string())?;
    let (_, rep) = damped_newton_from(&p.grid, &scheme, &p.rho, p.exact_field(), &NewtonOptions::default())
        .map_err(|e| e.to_string())?;
    if rep.iterations != 0 {
        return Err(format!("{} iterations from the exact start", rep.iterations));
    }
    Ok(format!("residual {:e}", rep.final_scaled_residual()))
}

fn convexity_equivalence(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let grid = discretize(&ConvexDomain::new_disk([0.5, 0.5], 0.45).map_err(|e| e.to_string())?, 12)
        .map_err(|e| e.to_string())?;
    let scheme = SchemeChoice::LbrExtensive { interior_points: 8, boundary_points: 24, layer: 2 }
        .build(&grid)
        .map_err(|e| e.to_string())?;
    let crate::schemes::SchemeKind::LbrExtensive(fam) = &scheme.kind else { unreachable!() };
    for _ in 0..50 {
        let c = rng.gen_range(-0.5..1.0);
        let noise = rng.gen_range(0.0..0.5);
        let field = Field::from_fn(&grid, std::sync::Arc::new(move |p: [f64; 2]| c * (p[0] * p[0] + p[1] * p[1])));
        let values: Vec<f64> = field.values.iter().map(|v| v + noise * rng.gen_range(-1.0..1.0)).collect();
        let f = Field { values, trace: field.trace.clone() };
        let disc = Discretization::new(&grid, &scheme, &*f.trace).map_err(|e| e.to_string())?;
        for i in 0..grid.len() {
            let x = grid.point(i);
            let d = disc.value(&f.values, i);
            let all_pos = fam
                .stencil(i)
                .iter()
                .all(|e| crate::grid::second_difference(&grid, &f, x, e) > 0.0);
            if (d > 0.0) != all_pos {
                return Err(format!("sign mismatch at {x}: D = {d}, all positive = {all_pos}"));
            }
        }
    }
    Ok("50 fields".into())
}

/// Runs every check with a fixed seed.
pub fn run() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    vec![
        check("stern_brocot", stern_brocot()),
        check("selling", selling(&mut rng)),
        check("h_bounds_monotone", h_bounds(&mut rng)),
        check("h_area_oracle", h_area(&mut rng)),
        check("consistency_maps", maps()),
        check("lbr_exact_on_quadratics", lbr_exact_on_quadratics(&mut rng)),
        check("convexity_equivalence", convexity_equivalence(&mut rng)),
        check("quadratic_one_shot", quadratic_one_shot()),
    ]
}
