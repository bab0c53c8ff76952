use faer::col::Col;
use faer::prelude::Solve;
use faer::sparse::{SparseColMat, Triplet};

use crate::sparse::SparseMatrix;

/// Backward error bound accepted by `sparse_solve`.
pub const LINEAR_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinearSolveError {
    #[error("matrix is {0}x{1}, expected square")]
    NotSquare(usize, usize),
    #[error("right-hand side has length {got}, expected {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("row {0} is identically zero")]
    ZeroRow(usize),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("solution is not finite")]
    NonFinite,
    #[error("relative residual {0:e} exceeds tolerance")]
    Inaccurate(f64),
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Normwise backward error ‖Jv − r‖ / (‖J‖‖v‖ + ‖r‖) in the infinity norm.
pub fn relative_residual(j: &SparseMatrix, v: &[f64], r: &[f64]) -> f64 {
    let jv = j.mul_vec(v);
    let res: Vec<f64> = jv.iter().zip(r).map(|(a, b)| a - b).collect();
    let denom = j.norm_inf() * norm_inf(v) + norm_inf(r);
    if denom == 0.0 {
        0.0
    } else {
        norm_inf(&res) / denom
    }
}

/// Solves J v = r by sparse LU with one step of iterative refinement.
pub fn sparse_solve(j: &SparseMatrix, r: &[f64]) -> Result<Vec<f64>, LinearSolveError> {
    let n = j.nrows();
    if j.ncols() != n {
        return Err(LinearSolveError::NotSquare(n, j.ncols()));
    }
    if r.len() != n {
        return Err(LinearSolveError::SizeMismatch { expected: n, got: r.len() });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    for i in 0..n {
        if j.row(i).all(|(_, v)| v == 0.0) {
            return Err(LinearSolveError::ZeroRow(i));
        }
    }
    let triplets: Vec<Triplet<usize, usize, f64>> = j.triplets().map(|(i, c, v)| Triplet::new(i, c, v)).collect();
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| LinearSolveError::Factorization(format!("{e:?}")))?;
    let lu = mat.sp_lu().map_err(|e| LinearSolveError::Factorization(format!("{e:?}")))?;
    let rhs = Col::from_fn(n, |i| r[i]);
    let sol = lu.solve(&rhs);
    let mut v: Vec<f64> = (0..n).map(|i| sol[i]).collect();
    if !v.iter().all(|x| x.is_finite()) {
        return Err(LinearSolveError::NonFinite);
    }
    let jv = j.mul_vec(&v);
    let res = Col::from_fn(n, |i| r[i] - jv[i]);
    let corr = lu.solve(&res);
    let refined: Vec<f64> = (0..n).map(|i| v[i] + corr[i]).collect();
    if refined.iter().all(|x| x.is_finite()) && relative_residual(j, &refined, r) <= relative_residual(j, &v, r) {
        v = refined;
    }
    let rel = relative_residual(j, &v, r);
    if !(rel <= LINEAR_TOLERANCE) {
        return Err(LinearSolveError::Inaccurate(rel));
    }
    Ok(v)
}
