use std::sync::Arc;

use mongeampere::grid::{build_stencil_family, discretize, ConvexDomain, StencilConfig};
use mongeampere::harness::output::sweep_csv;
use mongeampere::harness::{make_case, run_convergence, solve_case, Problem, RunConfig, SchemeChoice, CASE_NAMES};
use mongeampere::lattice::SymMatrix2;
use mongeampere::schemes::{Discretization, Scheme, SchemeKind};
use mongeampere::solver::{convex_init, damped_newton, damped_newton_from, NewtonOptions, StepRule};
use mongeampere::BoundaryTrace;

#[test]
fn newton_path_stays_convex_and_residual_mostly_decreases() {
    let opts = NewtonOptions::default();
    let (mut steps, mut monotone) = (0usize, 0usize);
    for name in CASE_NAMES {
        let case = make_case(name).unwrap();
        for n in [17, 33, 65] {
            let out = solve_case(&case, &SchemeChoice::lbr_default(), n, &opts).unwrap();
            let (_, rep) = out.result.unwrap_or_else(|e| panic!("{name} n={n}: {e}"));
            assert!(rep.converged, "{name} n={n}");
            assert!(rep.min_operator_history.iter().all(|&d| d > 0.0), "{name} n={n}: {:?}", rep.min_operator_history);
            steps += rep.iterations;
            monotone += rep.iterations - rep.non_monotone_steps.len();
        }
    }
    assert!(monotone as f64 >= 0.95 * steps as f64, "{monotone} of {steps} steps decreased the residual");
}

#[test]
fn quadratic_one_shot_for_consistent_schemes() {
    let case = make_case("quadratic").unwrap();
    let p = Problem::new(&case, 20).unwrap();
    let wide = StencilConfig { interior: mongeampere::grid::stencil_with_points(48).unwrap(), ..StencilConfig::default() };
    let schemes = [
        Scheme::new(SchemeKind::Fd),
        Scheme::new(SchemeKind::LbrAdaptive(build_stencil_family(&p.grid, &StencilConfig::default()).unwrap())),
        Scheme::new(SchemeKind::LbrExtensive(build_stencil_family(&p.grid, &wide).unwrap())),
    ];
    for s in &schemes {
        let (_, rep) = damped_newton_from(&p.grid, s, &p.rho, p.exact_field(), &NewtonOptions::default()).unwrap();
        assert!(rep.converged && rep.iterations == 0, "{}: {:?}", s.kind.name(), rep.scaled_residual_history);
    }
}

#[test]
fn convex_init_is_discretely_convex() {
    let domains = [
        ConvexDomain::unit_square(),
        ConvexDomain::new_disk([0.5, 0.5], 0.5).unwrap(),
        ConvexDomain::polygon_from_vertices(&[[0.0, 0.0], [1.0, 0.1], [0.6, 0.9]]).unwrap(),
    ];
    let traces: Vec<BoundaryTrace> = vec![
        Arc::new(|_| 0.0),
        Arc::new(|p: [f64; 2]| (p[0] * 0.1).sin() + 0.01 * p[1] * p[1]),
        Arc::new(|p: [f64; 2]| -(p[0] * p[1]).abs().sqrt()),
    ];
    for dom in &domains {
        for n in [9, 20] {
            let grid = discretize(dom, n).unwrap();
            let fam = build_stencil_family(&grid, &StencilConfig::default()).unwrap();
            let scheme = Scheme::new(SchemeKind::LbrExtensive(fam));
            for sigma in &traces {
                let u = convex_init(&grid, sigma).unwrap();
                let disc = Discretization::new(&grid, &scheme, &**sigma).unwrap();
                let vals = disc.values(&u.values);
                assert!(vals.iter().all(|&d| d > 0.0), "{dom:?} n={n}: min {}", vals.iter().cloned().fold(f64::INFINITY, f64::min));
            }
        }
    }
}

#[test]
fn global_minimum_rule_also_converges() {
    let case = make_case("smoothed_cone").unwrap();
    let opts = NewtonOptions { step_rule: StepRule::GlobalMinimum, ..NewtonOptions::default() };
    let out = solve_case(&case, &SchemeChoice::lbr_default(), 33, &opts).unwrap();
    assert!(out.result.unwrap().1.converged);
}

#[test]
fn other_schemes_solve_the_cone() {
    let case = make_case("smoothed_cone").unwrap();
    for choice in [
        SchemeChoice::Ws { points: 16 },
        SchemeChoice::LbrExtensive { interior_points: 8, boundary_points: 48, layer: 4 },
        SchemeChoice::Fd,
    ] {
        let out = solve_case(&case, &choice, 17, &NewtonOptions::default()).unwrap();
        let (_, rep) = out.result.unwrap_or_else(|e| panic!("{}: {e}", choice.label()));
        assert!(rep.converged, "{}", choice.label());
    }
}

#[test]
fn sweep_csv_is_deterministic() {
    let cfg = RunConfig::new("flat", SchemeChoice::lbr_default(), vec![9, 17]);
    let a = sweep_csv(&run_convergence(&cfg).unwrap(), false);
    let b = sweep_csv(&run_convergence(&cfg).unwrap(), false);
    assert_eq!(a, b);
}

#[test]
fn disk_domain_quadratic_is_recovered() {
    let n = 24;
    let grid = discretize(&ConvexDomain::new_disk([0.5, 0.5], 0.45).unwrap(), n).unwrap();
    let m = SymMatrix2::from_kappa_theta(2.0, 0.3);
    let h = grid.scale_h();
    let sigma: BoundaryTrace = Arc::new(move |p: [f64; 2]| 0.5 * m.quad_f64([p[0] * h, p[1] * h]));
    let rho = vec![h.powi(4) * m.det(); grid.len()];
    let scheme = SchemeChoice::lbr_default().build(&grid).unwrap();
    let (u, rep) = damped_newton(&grid, &scheme, &rho, &sigma, &NewtonOptions::default()).unwrap();
    assert!(rep.converged);
    let err = grid.points().iter().enumerate().map(|(i, x)| (u.values[i] - sigma(x.to_f64())).abs()).fold(0.0, f64::max);
    assert!(err < 1e-9, "{err}");
}
