use nalgebra::{DMatrix, DVector};

use super::{check_shapes, spd_solve};
use crate::error::{Error, Result};

/// `min_x ‖M x - g‖² + β ‖x‖²`.
#[derive(Debug, Clone, Copy)]
pub struct TikhonovProblem<'a> {
    pub matrix: &'a DMatrix<f64>,
    pub data: &'a DVector<f64>,
    pub beta: f64,
}

/// Solves `(MᵀM + βI) x = Mᵀg` by Cholesky.
pub fn tikhonov_solve(prob: &TikhonovProblem<'_>) -> Result<DVector<f64>> {
    check_shapes(prob.matrix, prob.data, "tikhonov")?;
    if !(prob.beta >= 0.0 && prob.beta.is_finite()) {
        return Err(Error::Domain(format!("beta must be finite and >= 0, got {}", prob.beta)));
    }
    let m = prob.matrix;
    let mut normal = m.tr_mul(m);
    for i in 0..normal.nrows() {
        normal[(i, i)] += prob.beta;
    }
    let rhs = m.tr_mul(prob.data);
    spd_solve(normal, &rhs, "tikhonov")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn objective(m: &DMatrix<f64>, g: &DVector<f64>, beta: f64, x: &DVector<f64>) -> f64 {
        (m * x - g).norm_squared() + beta * x.norm_squared()
    }

    #[test]
    fn identity_without_penalty() {
        let m = DMatrix::identity(4, 4);
        let g = DVector::from_vec(vec![1.0, -2.0, 3.5, 0.25]);
        let x = tikhonov_solve(&TikhonovProblem { matrix: &m, data: &g, beta: 0.0 }).unwrap();
        assert!((x - g).amax() < 1e-15);
    }

    #[test]
    fn hand_solved_two_by_two() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let g = DVector::from_vec(vec![1.0, 2.0]);
        let x = tikhonov_solve(&TikhonovProblem { matrix: &m, data: &g, beta: 1.0 }).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-12);
        assert!((x[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn heavy_penalty_vanishes() {
        let m = DMatrix::from_fn(6, 3, |i, j| ((i + 2 * j) as f64).sin());
        let g = DVector::from_fn(6, |i, _| i as f64 - 2.0);
        let beta = 1e12;
        let x = tikhonov_solve(&TikhonovProblem { matrix: &m, data: &g, beta }).unwrap();
        assert!(x.norm() <= m.tr_mul(&g).norm() / beta);
    }

    #[test]
    fn singular_without_penalty_is_reported() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let g = DVector::from_vec(vec![1.0, 2.0]);
        let err = tikhonov_solve(&TikhonovProblem { matrix: &m, data: &g, beta: 0.0 });
        assert!(matches!(err, Err(Error::Singular(_))));
    }

    #[test]
    fn shape_mismatch() {
        let m = DMatrix::identity(3, 2);
        let g = DVector::zeros(2);
        assert!(tikhonov_solve(&TikhonovProblem { matrix: &m, data: &g, beta: 1.0 }).is_err());
    }

    #[test]
    fn minimizer_is_locally_optimal() {
        let m = DMatrix::from_fn(12, 5, |i, j| 1.0 / (1.0 + i as f64 + j as f64));
        let g = DVector::from_fn(12, |i, _| (i as f64 * 0.7).cos());
        let beta = 1e-3;
        let x = tikhonov_solve(&TikhonovProblem { matrix: &m, data: &g, beta }).unwrap();
        let base = objective(&m, &g, beta, &x);
        for k in 0..5 {
            for s in [-1e-4, 1e-4] {
                let mut y = x.clone();
                y[k] += s;
                assert!(objective(&m, &g, beta, &y) >= base);
            }
        }
        let normal = m.tr_mul(&m) + DMatrix::identity(5, 5) * beta;
        let rhs = m.tr_mul(&g);
        assert!((normal * &x - &rhs).norm() <= 1e-10 * rhs.norm());
    }
}
