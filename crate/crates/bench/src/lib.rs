//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use mongeampere::grid::{discretize, ConvexDomain, Field, Grid};

/// Unit square grid with a smooth convex field in lattice units.
pub fn convex_fixture(n: usize) -> (Grid, Field) {
    let grid = discretize(&ConvexDomain::unit_square(), n).expect("grid");
    let h = grid.scale_h();
    let field = Field::from_fn(
        &grid,
        Arc::new(move |p: [f64; 2]| {
            let (x, y) = (p[0] * h - 0.5, p[1] * h - 0.5);
            (0.01 + x * x + y * y).sqrt() + 0.3 * x * x
        }),
    );
    (grid, field)
}
