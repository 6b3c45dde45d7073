use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_shapes, spd_solve};
use crate::error::{Error, Result};

/// Parameters of the smoothed total-variation solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvSettings {
    pub beta: f64,
    /// Smoothing of `|d|` as `sqrt(d² + ε²)`.
    pub epsilon: f64,
    pub max_inner: usize,
    /// Relative iterate change that ends the reweighting loop.
    pub tol: f64,
}

impl TvSettings {
    pub fn with_beta(beta: f64) -> Self {
        Self { beta, ..Self::default() }
    }
}

impl Default for TvSettings {
    fn default() -> Self {
        Self {
            beta: 0.0,
            epsilon: 1e-8,
            max_inner: 100,
            tol: 1e-10,
        }
    }
}

/// `min_q ‖A q - g‖² + β Σ_j |q_{j+1} - q_j|`.
#[derive(Debug, Clone, Copy)]
pub struct TvProblem<'a> {
    pub matrix: &'a DMatrix<f64>,
    pub data: &'a DVector<f64>,
    pub settings: TvSettings,
}

#[derive(Debug, Clone)]
pub struct TvSolution {
    pub x: DVector<f64>,
    /// Smoothed objective at the starting point and after every reweighting.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// False if the smoothed objective ever increased beyond round-off.
    pub monotone: bool,
}

/// `Σ_j |q_{j+1} - q_j|` (forward differences, no wrap).
pub fn total_variation(q: &[f64]) -> f64 {
    q.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// Unsmoothed objective `‖A q - g‖² + β TV(q)`.
pub fn tv_objective(matrix: &DMatrix<f64>, data: &DVector<f64>, beta: f64, q: &DVector<f64>) -> f64 {
    (matrix * q - data).norm_squared() + beta * total_variation(q.as_slice())
}

fn smoothed_objective(misfit: f64, beta: f64, eps: f64, q: &DVector<f64>) -> f64 {
    let tv: f64 = q
        .as_slice()
        .windows(2)
        .map(|w| ((w[1] - w[0]).powi(2) + eps * eps).sqrt())
        .sum();
    misfit + beta * tv
}

/// Adds `c Dᵀ W D` to `h`, `D` the forward-difference matrix.
fn add_weighted_laplacian(h: &mut DMatrix<f64>, weights: &[f64], c: f64) {
    for (j, &w) in weights.iter().enumerate() {
        let cw = c * w;
        h[(j, j)] += cw;
        h[(j + 1, j + 1)] += cw;
        h[(j, j + 1)] -= cw;
        h[(j + 1, j)] -= cw;
    }
}

/// Lagged-diffusivity iteration (iteratively reweighted least squares).
///
/// Each step minimizes the quadratic majorizer of the smoothed objective
/// `‖Aq - g‖² + β Σ sqrt((Dq)_j² + ε²)`, i.e. solves
/// `(AᵀA + (β/2) Dᵀ W D) q = Aᵀg` with `W = diag(((Dq)_j² + ε²)^{-1/2})`, so
/// the smoothed objective never increases.
pub fn tv_solve(prob: &TvProblem<'_>) -> Result<TvSolution> {
    check_shapes(prob.matrix, prob.data, "tv")?;
    let s = prob.settings;
    if !(s.beta >= 0.0 && s.beta.is_finite()) {
        return Err(Error::Domain(format!("beta must be finite and >= 0, got {}", s.beta)));
    }
    if !(s.epsilon > 0.0) || !(s.tol > 0.0) {
        return Err(Error::Domain("epsilon and tol must be positive".into()));
    }
    let a = prob.matrix;
    let g = prob.data;
    let n = a.ncols();
    let ata = a.tr_mul(a);
    let rhs = a.tr_mul(g);
    let misfit = |q: &DVector<f64>| (a * q - g).norm_squared();
    // round-off floor for the monotonicity check: the objective at q = 0
    let floor = g.norm_squared() + s.beta * s.epsilon * n as f64;

    // start from uniform weights on the scale of q, so that scaling g, β
    // and ε together scales every iterate
    let q_scale = g.amax() / a.amax();
    let w0 = if q_scale > 0.0 && q_scale.is_finite() { 1.0 / q_scale } else { 1.0 };
    let mut h = ata.clone();
    if n > 1 {
        add_weighted_laplacian(&mut h, &vec![w0; n - 1], 0.5 * s.beta);
    }
    let mut q = spd_solve(h, &rhs, "tv")?;
    let mut objective = vec![smoothed_objective(misfit(&q), s.beta, s.epsilon, &q)];
    if s.beta == 0.0 || n == 1 {
        return Ok(TvSolution {
            x: q,
            objective,
            iterations: 0,
            converged: true,
            monotone: true,
        });
    }

    let mut monotone = true;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < s.max_inner {
        iterations += 1;
        let weights: Vec<f64> = q
            .as_slice()
            .windows(2)
            .map(|w| 1.0 / ((w[1] - w[0]).powi(2) + s.epsilon * s.epsilon).sqrt())
            .collect();
        let mut h = ata.clone();
        add_weighted_laplacian(&mut h, &weights, 0.5 * s.beta);
        let next = spd_solve(h, &rhs, "tv")?;
        let value = smoothed_objective(misfit(&next), s.beta, s.epsilon, &next);
        let last = *objective.last().expect("non-empty");
        if value > last + 1e-12 * last.abs().max(floor) {
            monotone = false;
            log::warn!("tv objective increased from {last:e} to {value:e} at iteration {iterations}");
        }
        debug_assert!(
            value <= last + 1e-9 * last.abs().max(floor),
            "tv objective increased from {last:e} to {value:e}"
        );
        objective.push(value);
        let change = (&next - &q).norm();
        let scale = q.norm().max(f64::MIN_POSITIVE);
        q = next;
        if change <= s.tol * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("tv reweighting stopped after {iterations} iterations without reaching tol = {:e}", s.tol);
    }
    Ok(TvSolution {
        x: q,
        objective,
        iterations,
        converged,
        monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(a: &DMatrix<f64>, g: &DVector<f64>, beta: f64) -> TvSolution {
        tv_solve(&TvProblem {
            matrix: a,
            data: g,
            settings: TvSettings::with_beta(beta),
        })
        .unwrap()
    }

    #[test]
    fn no_penalty_identity() {
        let a = DMatrix::identity(5, 5);
        let g = DVector::from_vec(vec![0.3, -1.0, 2.0, 2.0, 0.0]);
        let sol = solve(&a, &g, 0.0);
        assert!((sol.x - g).amax() < 1e-14);
    }

    #[test]
    fn constant_data_is_a_fixed_point() {
        let a = DMatrix::identity(6, 6);
        let g = DVector::from_element(6, 1.7);
        for beta in [1e-3, 0.1, 10.0] {
            let sol = solve(&a, &g, beta);
            let err = (sol.x.clone() - &g).amax();
            // the flat stretches carry weights ~1/ε, so round-off scales with β/ε
            assert!(err < 1e-14 * (1.0 + beta / 1e-8), "beta = {beta}: {err:e}");
            assert!(sol.monotone);
        }
    }

    /// Exhaustive search over monotone vectors near the two plateaus.
    fn brute_force_step(beta: f64) -> [f64; 4] {
        let res = 1e-3;
        let lo: Vec<f64> = (-50..=50).map(|i| i as f64 * res).collect();
        let hi: Vec<f64> = lo.iter().map(|v| 1.0 + v).collect();
        let mut best = (f64::INFINITY, [0.0; 4]);
        for &q1 in &lo {
            for &q2 in lo.iter().filter(|v| **v >= q1) {
                for &q3 in &hi {
                    for &q4 in hi.iter().filter(|v| **v >= q3) {
                        let f = q1 * q1 + q2 * q2 + (q3 - 1.0).powi(2) + (q4 - 1.0).powi(2)
                            + beta * ((q2 - q1) + (q3 - q2) + (q4 - q3));
                        if f < best.0 {
                            best = (f, [q1, q2, q3, q4]);
                        }
                    }
                }
            }
        }
        best.1
    }

    #[test]
    fn step_data_keeps_its_edge() {
        let beta = 0.01;
        let a = DMatrix::identity(4, 4);
        let g = DVector::from_vec(vec![0.0, 0.0, 1.0, 1.0]);
        let sol = solve(&a, &g, beta);
        let oracle = brute_force_step(beta);
        for (x, o) in sol.x.iter().zip(oracle) {
            assert!((x - o).abs() <= 1.5e-3, "{:?} vs {oracle:?}", sol.x);
        }
        assert!(sol.x[1] < sol.x[2]);
        assert!(total_variation(sol.x.as_slice()) <= 1.0);
        assert!(sol.monotone);
        assert!(sol.objective.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }

    #[test]
    fn denoises_blocky_signal() {
        let n = 60;
        let truth: Vec<f64> = (0..n).map(|i| if i < 20 { 1.0 } else if i < 40 { 2.0 } else { 1.5 }).collect();
        let noisy = DVector::from_fn(n, |i, _| truth[i] + 0.05 * ((i * 37 % 11) as f64 / 5.0 - 1.0));
        let a = DMatrix::identity(n, n);
        let sol = solve(&a, &noisy, 0.2);
        assert!(sol.monotone);
        let err: f64 = sol.x.iter().zip(&truth).map(|(x, t)| (x - t).powi(2)).sum::<f64>().sqrt();
        let raw: f64 = noisy.iter().zip(&truth).map(|(x, t)| (x - t).powi(2)).sum::<f64>().sqrt();
        assert!(err < 0.5 * raw, "{err} vs {raw}");
    }

    #[test]
    fn rejects_bad_settings() {
        let a = DMatrix::identity(2, 2);
        let g = DVector::zeros(2);
        let mut settings = TvSettings::with_beta(1.0);
        settings.epsilon = 0.0;
        assert!(tv_solve(&TvProblem { matrix: &a, data: &g, settings }).is_err());
        let settings = TvSettings::with_beta(-1.0);
        assert!(tv_solve(&TvProblem { matrix: &a, data: &g, settings }).is_err());
    }

    #[test]
    fn total_variation_of_staircase() {
        assert_eq!(total_variation(&[1.0, 1.0, 2.0, 2.0, 1.5]), 1.5);
        assert_eq!(total_variation(&[3.0]), 0.0);
    }
}
