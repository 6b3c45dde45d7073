use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the Jacobian is formed. Only forward differences are supported.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    /// Forward differences with step `max(1e-6, 1e-6 |x_i|)`.
    #[default]
    ForwardDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    pub mu0: f64,
    pub mu_up: f64,
    pub mu_down: f64,
    pub max_iter: usize,
    /// Stop once `‖Jᵀr‖_∞` drops below this.
    pub gtol: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            mu0: 1e-3,
            mu_up: 10.0,
            mu_down: 0.5,
            max_iter: 200,
            gtol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LmTermination {
    Gradient,
    /// The accepted step no longer moves `x` in floating point.
    SmallStep,
    /// Damping grew without finding a decrease.
    Stalled,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub x: DVector<f64>,
    pub residual_norm: f64,
    pub initial_residual_norm: f64,
    /// Number of Jacobian evaluations (outer iterations).
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: LmTermination,
}

impl LmReport {
    pub fn converged(&self) -> bool {
        self.termination != LmTermination::MaxIterations
    }
}

const MU_CEILING: f64 = 1e20;

/// Damped Gauss–Newton for `min ‖r(x)‖²`.
///
/// `residual` returns `None` for infeasible points; a step landing there is
/// rejected like a step that increases the residual. A non-finite residual
/// aborts the run.
pub fn lm_minimize<F>(mut residual: F, mode: JacobianMode, x0: &DVector<f64>, cfg: &LmConfig) -> Result<LmReport>
where
    F: FnMut(&DVector<f64>) -> Option<DVector<f64>>,
{
    let JacobianMode::ForwardDifference = mode;
    let mut evaluations = 1;
    let mut r = residual(x0).ok_or_else(|| Error::Invalid("initial point is infeasible".into()))?;
    check_finite(&r, x0)?;
    let mut x = x0.clone();
    let mut cost = r.norm_squared();
    let initial = cost.sqrt();
    let mut mu = cfg.mu0;
    let mut termination = LmTermination::MaxIterations;
    let mut iterations = 0;

    'outer: while iterations < cfg.max_iter {
        if cost == 0.0 {
            termination = LmTermination::Gradient;
            break;
        }
        iterations += 1;
        let jac = forward_jacobian(&mut residual, &x, &r, &mut evaluations)?;
        let grad = jac.tr_mul(&r);
        if grad.amax() < cfg.gtol {
            termination = LmTermination::Gradient;
            break;
        }
        let jtj = jac.tr_mul(&jac);
        loop {
            if mu > MU_CEILING {
                termination = LmTermination::Stalled;
                break 'outer;
            }
            let mut damped = jtj.clone();
            for i in 0..damped.nrows() {
                damped[(i, i)] += mu;
            }
            let Some(chol) = damped.cholesky() else {
                mu *= cfg.mu_up;
                continue;
            };
            let step = -chol.solve(&grad);
            let trial = &x + &step;
            if trial == x {
                termination = LmTermination::SmallStep;
                break 'outer;
            }
            evaluations += 1;
            match residual(&trial) {
                Some(rt) => {
                    check_finite(&rt, &trial)?;
                    let trial_cost = rt.norm_squared();
                    if trial_cost < cost {
                        x = trial;
                        r = rt;
                        cost = trial_cost;
                        mu *= cfg.mu_down;
                        break;
                    }
                    mu *= cfg.mu_up;
                }
                None => mu *= cfg.mu_up,
            }
        }
    }
    Ok(LmReport {
        x,
        residual_norm: cost.sqrt(),
        initial_residual_norm: initial,
        iterations,
        evaluations,
        termination,
    })
}

fn check_finite(r: &DVector<f64>, x: &DVector<f64>) -> Result<()> {
    if let Some(i) = r.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "residual component {i} is {} at x = {:?}",
            r[i],
            x.as_slice()
        )));
    }
    Ok(())
}

fn forward_jacobian<F>(residual: &mut F, x: &DVector<f64>, r: &DVector<f64>, evaluations: &mut usize) -> Result<DMatrix<f64>>
where
    F: FnMut(&DVector<f64>) -> Option<DVector<f64>>,
{
    let mut jac = DMatrix::zeros(r.len(), x.len());
    for i in 0..x.len() {
        let h = 1e-6f64.max(1e-6 * x[i].abs());
        let mut probe = x.clone();
        probe[i] += h;
        *evaluations += 1;
        // fall back to a backward difference when the forward probe is infeasible
        let (rp, signed_h) = match residual(&probe) {
            Some(rp) => (rp, h),
            None => {
                probe[i] = x[i] - h;
                *evaluations += 1;
                let rp = residual(&probe).ok_or_else(|| {
                    Error::Invalid(format!("both difference probes infeasible in coordinate {i}"))
                })?;
                (rp, -h)
            }
        };
        check_finite(&rp, &probe)?;
        jac.set_column(i, &((rp - r) / signed_h));
    }
    Ok(jac)
}
