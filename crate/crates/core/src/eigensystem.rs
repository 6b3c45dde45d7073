//! Dirichlet eigenpairs of `-Δ` on the unit disc.
//!
//! Eigenvalues are squares of Bessel zeros `j_{m,k}`. Each `m > 0` zero carries
//! a cosine and a sine eigenfunction; `m = 0` only the cosine one. Eigenfunctions
//! are `φ_n(r, θ) = ω_n J_m(√λ_n r) cos(mθ)` or `... sin(mθ)` with `ω_n > 0`
//! chosen so that `‖φ_n‖_{L²} = 1`.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bessel;
use crate::error::{Error, Result};

/// Angular factor of an eigenfunction: `cos(mθ)` or `sin(mθ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    Cos,
    Sin,
}

impl Phase {
    pub fn factor(self, m: u32, theta: f64) -> f64 {
        let arg = m as f64 * theta;
        match self {
            Phase::Cos => arg.cos(),
            Phase::Sin => arg.sin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Eigenpair {
    /// 1-based position in the sorted basis.
    pub index: usize,
    pub lambda: f64,
    /// Angular order `m`.
    pub order: u32,
    /// Radial root index `k` (1-based).
    pub root: usize,
    pub phase: Phase,
    pub omega: f64,
    zero: f64,
    /// Sign of `J_{m+1}(j_{m,k})`, which is `(-1)^{k+1}`.
    boundary_sign: f64,
}

impl Eigenpair {
    fn new(order: u32, root: usize, zero: f64, phase: Phase) -> Self {
        let next = bessel::j_unchecked(order + 1, zero);
        let omega = if order == 0 {
            1.0 / (PI.sqrt() * next.abs())
        } else {
            2f64.sqrt() / (PI.sqrt() * next.abs())
        };
        Self {
            index: 0,
            lambda: zero * zero,
            order,
            root,
            phase,
            omega,
            zero,
            boundary_sign: next.signum(),
        }
    }

    /// `√λ_n`, the Bessel zero `j_{m,k}`.
    pub fn sqrt_lambda(&self) -> f64 {
        self.zero
    }

    /// Radial profile `J_m(√λ r)` without the normalization.
    pub fn radial(&self, r: f64) -> f64 {
        bessel::j_unchecked(self.order, self.zero * r)
    }

    pub fn angular(&self, theta: f64) -> f64 {
        self.phase.factor(self.order, theta)
    }

    /// `φ_n(r, θ)` for `0 ≤ r ≤ 1`.
    pub fn eval(&self, r: f64, theta: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::Domain(format!("radius {r} outside [0, 1]")));
        }
        Ok(self.omega * self.radial(r) * self.angular(theta))
    }

    /// Boundary coupling `a_n(z)` at `z = (cos θ_z, sin θ_z)`.
    ///
    /// With `ω_n > 0` the outward normal derivative of `φ_n` on the circle is
    /// `-λ_n a_n(θ)`, so `a_n` carries the sign of `J_{m+1}(√λ_n)`. For
    /// `k = 1` that sign is `+1` and the usual closed form is recovered.
    pub fn coeff_a(&self, theta_z: f64) -> f64 {
        self.boundary_sign * self.coeff_a_envelope() * self.angular_for_boundary(theta_z)
    }

    fn angular_for_boundary(&self, theta_z: f64) -> f64 {
        if self.order == 0 {
            1.0
        } else {
            self.angular(theta_z)
        }
    }

    /// `max_θ |a_n(θ)|`.
    pub fn coeff_a_envelope(&self) -> f64 {
        let base = 1.0 / (PI * self.lambda).sqrt();
        if self.order == 0 {
            base
        } else {
            2f64.sqrt() * base
        }
    }
}

/// `φ_n(r, θ)`; see [`Eigenpair::eval`].
pub fn eigenfunction_eval(pair: &Eigenpair, r: f64, theta: f64) -> Result<f64> {
    pair.eval(r, theta)
}

/// `a_n(θ_z)`; see [`Eigenpair::coeff_a`].
pub fn coeff_a(pair: &Eigenpair, theta_z: f64) -> f64 {
    pair.coeff_a(theta_z)
}

/// Eigenpairs with `λ ≤ lambda_max`, sorted non-decreasingly with
/// multiplicity (ties: `m` ascending, cosine before sine).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenBasis {
    pairs: Vec<Eigenpair>,
    lambda_max: f64,
    min_distinct_gap: f64,
}

/// Distinct eigenvalues closer than this are reported as suspicious.
pub const DISTINCT_GAP_FLOOR: f64 = 1e-9;

pub fn enumerate_basis(lambda_max: f64) -> Result<EigenBasis> {
    EigenBasis::enumerate(lambda_max)
}

impl EigenBasis {
    pub fn enumerate(lambda_max: f64) -> Result<Self> {
        if !lambda_max.is_finite() || lambda_max <= 0.0 {
            return Err(Error::Domain(format!("lambda_max must be positive, got {lambda_max}")));
        }
        let cutoff = lambda_max.sqrt();
        let mut pairs = Vec::new();
        for m in 0u32.. {
            let zeros = bessel::bessel_zeros_below(m, cutoff)?;
            let zeros: Vec<f64> = zeros.into_iter().filter(|z| z * z <= lambda_max).collect();
            if zeros.is_empty() {
                // j_{m,1} increases with m, so no higher order can contribute.
                break;
            }
            for (k, z) in zeros.into_iter().enumerate() {
                pairs.push(Eigenpair::new(m, k + 1, z, Phase::Cos));
                if m > 0 {
                    pairs.push(Eigenpair::new(m, k + 1, z, Phase::Sin));
                }
            }
        }
        if pairs.is_empty() {
            return Err(Error::Invalid(format!(
                "lambda_max = {lambda_max} is below the first eigenvalue; basis would be empty"
            )));
        }
        pairs.sort_by(|a, b| {
            a.lambda
                .total_cmp(&b.lambda)
                .then(a.order.cmp(&b.order))
                .then(a.phase.cmp(&b.phase))
        });
        for (i, p) in pairs.iter_mut().enumerate() {
            p.index = i + 1;
        }
        let min_distinct_gap = pairs
            .windows(2)
            .filter(|w| w[0].order != w[1].order || w[0].root != w[1].root)
            .map(|w| w[1].lambda - w[0].lambda)
            .fold(f64::INFINITY, f64::min);
        if min_distinct_gap <= DISTINCT_GAP_FLOOR {
            log::warn!("distinct eigenvalues within {min_distinct_gap:e}; ordering may be unstable");
        }
        Ok(Self {
            pairs,
            lambda_max,
            min_distinct_gap,
        })
    }

    pub fn pairs(&self) -> &[Eigenpair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// Smallest gap between eigenvalues belonging to different `(m, k)`.
    pub fn min_distinct_gap(&self) -> f64 {
        self.min_distinct_gap
    }

    pub fn distinct_gaps_ok(&self) -> bool {
        self.min_distinct_gap > DISTINCT_GAP_FLOOR
    }

    pub fn max_order(&self) -> u32 {
        self.pairs.iter().map(|p| p.order).max().unwrap_or(0)
    }

    /// Number of eigenvalues `≤ lambda` (with multiplicity).
    pub fn count_up_to(&self, lambda: f64) -> usize {
        self.pairs.partition_point(|p| p.lambda <= lambda)
    }

    /// The first `n` pairs, i.e. the basis of `S_n`.
    pub fn prefix(&self, n: usize) -> Result<EigenBasis> {
        if n == 0 || n > self.len() {
            return Err(Error::Invalid(format!(
                "prefix length {n} outside 1..={}",
                self.len()
            )));
        }
        let pairs = self.pairs[..n].to_vec();
        let min_distinct_gap = pairs
            .windows(2)
            .filter(|w| w[0].order != w[1].order || w[0].root != w[1].root)
            .map(|w| w[1].lambda - w[0].lambda)
            .fold(f64::INFINITY, f64::min);
        Ok(EigenBasis {
            lambda_max: pairs[n - 1].lambda,
            pairs,
            min_distinct_gap,
        })
    }

    /// CSV table `n,lambda,m,k,phase,omega` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "n,lambda,m,k,phase,omega")?;
        for p in &self.pairs {
            let phase = match p.phase {
                Phase::Cos => "cos",
                Phase::Sin => "sin",
            };
            writeln!(
                out,
                "{},{:.16e},{},{},{},{:.16e}",
                p.index, p.lambda, p.order, p.root, phase, p.omega
            )?;
        }
        Ok(())
    }
}

/// `ξ_j(r, θ)`: the harmonic polynomials orthonormal on the unit circle,
/// `ξ_1 = (2π)^{-1/2}`, `ξ_{2l} = π^{-1/2} r^l sin lθ`, `ξ_{2l+1} = π^{-1/2} r^l cos lθ`.
pub fn harmonic_xi(j: usize, r: f64, theta: f64) -> Result<f64> {
    if j == 0 {
        return Err(Error::Domain("harmonic index j must be at least 1".into()));
    }
    if j == 1 {
        return Ok(1.0 / (2.0 * PI).sqrt());
    }
    let l = (j / 2) as i32;
    let trig = if j % 2 == 0 {
        (l as f64 * theta).sin()
    } else {
        (l as f64 * theta).cos()
    };
    Ok(r.powi(l) * trig / PI.sqrt())
}

/// `ξ_j(1, θ_z) ξ_j(r, θ)`.
pub fn harmonic_xi_product(j: usize, theta_z: f64, r: f64, theta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::Domain(format!("radius {r} outside [0, 1]")));
    }
    Ok(harmonic_xi(j, 1.0, theta_z)? * harmonic_xi(j, r, theta)?)
}

/// Cauchy–Schwarz bound on the flux-series tail `Σ_{n>cut} |a_n p_n|`:
/// `(Σ_{n>cut} a_n² λ_n^{-2γ})^{1/2} (Σ_{n>cut} λ_n^{2γ} p_n²)^{1/2}`.
///
/// `weighted_coeffs[n]` holds `λ_n^γ p_n`; entries past its end count as zero.
/// `a_n` is taken at its angle-independent envelope, so the bound holds at
/// every boundary point.
pub fn tail_bound(basis: &EigenBasis, weighted_coeffs: &[f64], gamma: f64, cut: usize) -> Result<f64> {
    if cut > basis.len() {
        return Err(Error::Invalid(format!(
            "cut index {cut} exceeds basis length {}",
            basis.len()
        )));
    }
    if weighted_coeffs.len() > basis.len() {
        return Err(Error::Invalid(format!(
            "{} coefficients supplied for a basis of {}",
            weighted_coeffs.len(),
            basis.len()
        )));
    }
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("gamma must be positive, got {gamma}")));
    }
    let mut a_sum = 0.0;
    let mut p_sum = 0.0;
    for (n, pair) in basis.pairs().iter().enumerate().skip(cut) {
        let a = pair.coeff_a_envelope() * pair.lambda.powf(-gamma);
        a_sum += a * a;
        let w = weighted_coeffs.get(n).copied().unwrap_or(0.0);
        p_sum += w * w;
    }
    Ok(a_sum.sqrt() * p_sum.sqrt())
}
