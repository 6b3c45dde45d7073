//! Regularized least-squares engines.

mod lm;
mod tikhonov;
mod tv;

pub use lm::{lm_minimize, JacobianMode, LmConfig, LmReport, LmTermination};
pub use tikhonov::{tikhonov_solve, TikhonovProblem};
pub use tv::{total_variation, tv_objective, tv_solve, TvProblem, TvSettings, TvSolution};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Cholesky solve of a symmetric positive-definite system with one step of
/// iterative refinement.
pub(crate) fn spd_solve(normal: DMatrix<f64>, rhs: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let chol = normal
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular(format!("{what}: normal matrix is not positive definite")))?;
    // a pivot that lost nearly all of its diagonal means numerical rank deficiency
    let l = chol.l_dirty();
    for i in 0..normal.nrows() {
        if l[(i, i)] * l[(i, i)] <= 1e-13 * normal[(i, i)].abs() {
            return Err(Error::Singular(format!("{what}: normal matrix is numerically singular at pivot {i}")));
        }
    }
    let mut x = chol.solve(rhs);
    let residual = rhs - &normal * &x;
    x += chol.solve(&residual);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(format!("{what}: solution is not finite")));
    }
    Ok(x)
}

fn check_shapes(matrix: &DMatrix<f64>, data: &DVector<f64>, what: &str) -> Result<()> {
    if matrix.nrows() != data.len() {
        return Err(Error::Invalid(format!(
            "{what}: operator has {} rows but data has {} entries",
            matrix.nrows(),
            data.len()
        )));
    }
    if matrix.ncols() == 0 {
        return Err(Error::Invalid(format!("{what}: operator has no columns")));
    }
    Ok(())
}
