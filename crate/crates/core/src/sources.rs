//! The two unknowns: spatial sources `p(x)` and temporal step sources `q(t)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::bessel;
use crate::eigensystem::{EigenBasis, Phase};
use crate::error::{Error, Result};
use crate::quadrature::{periodic_trapezoid, GaussLegendre};

/// One Heaviside step `height · H(t - onset)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub onset: f64,
    pub height: f64,
}

/// `q(t) = Σ_k q_k H(t - c_k)` with `H(0) = 1`, strictly increasing onsets
/// separated by at least `eta`, and nonzero heights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct StepSource {
    steps: Vec<Step>,
    eta: f64,
}

impl StepSource {
    /// Validates the steps against a prescribed minimum spacing `eta`.
    pub fn new(steps: Vec<Step>, eta: f64) -> Result<Self> {
        if !(eta > 0.0) {
            return Err(Error::Invalid(format!("minimum step spacing must be positive, got {eta}")));
        }
        for (i, s) in steps.iter().enumerate() {
            if !s.onset.is_finite() || s.onset < 0.0 {
                return Err(Error::Invalid(format!("step {i}: onset {} must be finite and >= 0", s.onset)));
            }
            if !s.height.is_finite() || s.height == 0.0 {
                return Err(Error::Invalid(format!("step {i}: height must be finite and nonzero")));
            }
        }
        for (i, w) in steps.windows(2).enumerate() {
            let gap = w[1].onset - w[0].onset;
            if gap <= 0.0 {
                return Err(Error::Invalid(format!("onsets not strictly increasing at step {}", i + 1)));
            }
            if gap < eta {
                return Err(Error::Invalid(format!(
                    "onsets {} and {} closer than eta = {eta}",
                    w[0].onset, w[1].onset
                )));
            }
        }
        Ok(Self { steps, eta })
    }

    /// Uses the smallest onset gap as `eta` (1 when there are fewer than two steps).
    pub fn from_steps(steps: Vec<Step>) -> Result<Self> {
        let eta = steps
            .windows(2)
            .map(|w| w[1].onset - w[0].onset)
            .fold(f64::INFINITY, f64::min);
        let eta = if eta.is_finite() { eta } else { 1.0 };
        if eta <= 0.0 {
            return Err(Error::Invalid("onsets not strictly increasing".into()));
        }
        Self::new(steps, eta)
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::from_steps(
            pairs
                .iter()
                .map(|&(onset, height)| Step { onset, height })
                .collect(),
        )
    }

    /// Builds the step train from the piecewise-constant form: `levels[k] = (c_k, β_k)`
    /// with `q = β_k` on `[c_k, c_{k+1})`.
    pub fn from_levels(levels: &[(f64, f64)]) -> Result<Self> {
        let mut prev = 0.0;
        let pairs: Vec<(f64, f64)> = levels
            .iter()
            .map(|&(c, beta)| {
                let h = beta - prev;
                prev = beta;
                (c, h)
            })
            .collect();
        Self::from_pairs(&pairs)
    }

    /// No steps at all: `q ≡ 0`.
    pub fn zero() -> Self {
        Self {
            steps: Vec::new(),
            eta: 1.0,
        }
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `q(t)`; negative times are rejected.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("time must be >= 0, got {t}")));
        }
        Ok(self.value_at(t))
    }

    pub(crate) fn value_at(&self, t: f64) -> f64 {
        self.steps
            .iter()
            .take_while(|s| s.onset <= t)
            .map(|s| s.height)
            .sum()
    }


    /// Piecewise-constant form `(c_k, β_k)`, `β_k = Σ_{i ≤ k} q_i`.
    pub fn levels(&self) -> Vec<(f64, f64)> {
        let mut beta = 0.0;
        self.steps
            .iter()
            .map(|s| {
                beta += s.height;
                (s.onset, beta)
            })
            .collect()
    }

    /// `sup_t |q(t)|`.
    pub fn sup_abs(&self) -> f64 {
        self.levels().iter().map(|l| l.1.abs()).fold(0.0, f64::max)
    }
}

/// `q` on `[0, 1]`: `χ_[0,1/3) + 2χ_[1/3,2/3) + 1.5χ_[2/3,1]`.
pub fn staircase_q() -> StepSource {
    StepSource::from_levels(&[(0.0, 1.0), (1.0 / 3.0, 2.0), (2.0 / 3.0, 1.5)])
        .expect("valid staircase")
}

impl TryFrom<Vec<[f64; 2]>> for StepSource {
    type Error = Error;

    fn try_from(pairs: Vec<[f64; 2]>) -> Result<Self> {
        let pairs: Vec<(f64, f64)> = pairs.into_iter().map(|[c, q]| (c, q)).collect();
        Self::from_pairs(&pairs)
    }
}

impl From<StepSource> for Vec<[f64; 2]> {
    fn from(q: StepSource) -> Self {
        q.steps.iter().map(|s| [s.onset, s.height]).collect()
    }
}

/// `p = Σ_n p_n φ_n` over a prefix of an [`EigenBasis`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSource {
    pub coeffs: Vec<f64>,
}

impl SpectralSource {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn zeros(n: usize) -> Self {
        Self { coeffs: vec![0.0; n] }
    }

    /// The single eigenfunction `φ_{index}` (0-based) in a space of dimension `n`.
    pub fn unit(n: usize, index: usize) -> Self {
        let mut coeffs = vec![0.0; n];
        coeffs[index] = 1.0;
        Self { coeffs }
    }

    /// Projection of `p ≡ 1` onto the basis: only `m = 0` modes survive, with
    /// `p_n = ω_n 2π J_1(√λ_n)/√λ_n`.
    pub fn constant_one(basis: &EigenBasis) -> Self {
        let coeffs = basis
            .pairs()
            .iter()
            .map(|p| {
                if p.order == 0 {
                    let z = p.sqrt_lambda();
                    p.omega * 2.0 * PI * bessel::j_unchecked(1, z) / z
                } else {
                    0.0
                }
            })
            .collect();
        Self { coeffs }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `‖p‖_{L²(Ω)}`, the Euclidean norm of the coefficients.
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }

    /// Pads with zeros (or truncates) to length `n`.
    pub fn resized(&self, n: usize) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(n, 0.0);
        Self { coeffs }
    }

    /// `p(r, θ)`.
    pub fn eval(&self, basis: &EigenBasis, r: f64, theta: f64) -> Result<f64> {
        if self.len() > basis.len() {
            return Err(Error::Invalid(format!(
                "{} coefficients for a basis of {}",
                self.len(),
                basis.len()
            )));
        }
        let mut total = 0.0;
        for (c, pair) in self.coeffs.iter().zip(basis.pairs()) {
            if *c != 0.0 {
                total += c * pair.eval(r, theta)?;
            }
        }
        Ok(total)
    }
}

/// `‖p‖_{L²(Ω)}`.
pub fn source_norm(p: &SpectralSource) -> f64 {
    p.norm()
}

/// Indicator of the star-shaped set `{r ≤ r(θ)}` with
/// `r(θ) = α_0 + Σ_k (α_c^k cos kθ + α_s^k sin kθ)`.
///
/// The parameter vector layout is `[α_0, α_c^1, α_s^1, α_c^2, α_s^2, ...]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct StarSource {
    params: Vec<f64>,
}

impl StarSource {
    /// Number of grid points on which `0 < r(θ) < 1` is checked.
    pub const CHECK_POINTS: usize = 720;

    pub fn new(alpha0: f64, cos: &[f64], sin: &[f64]) -> Result<Self> {
        let harmonics = cos.len().max(sin.len());
        let mut params = vec![alpha0];
        for k in 0..harmonics {
            params.push(cos.get(k).copied().unwrap_or(0.0));
            params.push(sin.get(k).copied().unwrap_or(0.0));
        }
        Self::from_params(&params)
    }

    pub fn circle(radius: f64) -> Result<Self> {
        Self::new(radius, &[], &[])
    }

    /// From the flat parameter layout; the length must be odd.
    pub fn from_params(params: &[f64]) -> Result<Self> {
        if params.len() % 2 == 0 {
            return Err(Error::Invalid(format!(
                "radius parameter vector must have odd length, got {}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Invalid("radius parameters must be finite".into()));
        }
        let shape = Self {
            params: params.to_vec(),
        };
        shape.validate()?;
        Ok(shape)
    }

    fn validate(&self) -> Result<()> {
        for i in 0..Self::CHECK_POINTS {
            let theta = 2.0 * PI * i as f64 / Self::CHECK_POINTS as f64;
            let r = self.radius(theta);
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::Invalid(format!(
                    "radius function leaves (0, 1): r({theta:.4}) = {r}"
                )));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn harmonics(&self) -> usize {
        self.params.len() / 2
    }

    pub fn alpha0(&self) -> f64 {
        self.params[0]
    }

    pub fn cos_coeff(&self, k: usize) -> f64 {
        self.params.get(2 * k - 1).copied().unwrap_or(0.0)
    }

    pub fn sin_coeff(&self, k: usize) -> f64 {
        self.params.get(2 * k).copied().unwrap_or(0.0)
    }

    /// Same shape expressed with `k` harmonics (zero-padded or truncated).
    pub fn with_harmonics(&self, k: usize) -> Result<Self> {
        let mut params = self.params.clone();
        params.resize(2 * k + 1, 0.0);
        Self::from_params(&params)
    }

    pub fn radius(&self, theta: f64) -> f64 {
        let mut r = self.params[0];
        for k in 1..=self.harmonics() {
            let kt = k as f64 * theta;
            r += self.params[2 * k - 1] * kt.cos() + self.params[2 * k] * kt.sin();
        }
        r
    }

    pub fn contains(&self, r: f64, theta: f64) -> bool {
        r <= self.radius(theta)
    }
}

impl TryFrom<Vec<f64>> for StarSource {
    type Error = Error;

    fn try_from(params: Vec<f64>) -> Result<Self> {
        Self::from_params(&params)
    }
}

impl From<StarSource> for Vec<f64> {
    fn from(s: StarSource) -> Self {
        s.params
    }
}

/// Angular nodes used by [`project_star`].
pub const STAR_ANGULAR_NODES: usize = 256;
/// Radial Gauss–Legendre nodes on `[0, r(θ)]` used by [`project_star`].
pub const STAR_RADIAL_NODES: usize = 32;

/// Spectral coefficients `p_n = ⟨χ_D, φ_n⟩` of a star-shaped indicator.
pub fn project_star(shape: &StarSource, basis: &EigenBasis) -> SpectralSource {
    StarProjector::new(basis).project(shape)
}

/// Reusable quadrature state for projecting many shapes onto one basis.
#[derive(Debug, Clone)]
pub struct StarProjector {
    /// One entry per distinct `(m, k)`: order, zero, omega, cos slot, sin slot.
    modes: Vec<RadialMode>,
    len: usize,
    gl: GaussLegendre,
    angular: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
struct RadialMode {
    order: u32,
    zero: f64,
    omega: f64,
    cos_slot: Option<usize>,
    sin_slot: Option<usize>,
}

impl StarProjector {
    pub fn new(basis: &EigenBasis) -> Self {
        let mut modes: Vec<RadialMode> = Vec::new();
        for (i, p) in basis.pairs().iter().enumerate() {
            let existing = modes
                .iter_mut()
                .find(|m| m.order == p.order && m.zero == p.sqrt_lambda());
            let mode = match existing {
                Some(m) => m,
                None => {
                    modes.push(RadialMode {
                        order: p.order,
                        zero: p.sqrt_lambda(),
                        omega: p.omega,
                        cos_slot: None,
                        sin_slot: None,
                    });
                    modes.last_mut().expect("just pushed")
                }
            };
            match p.phase {
                Phase::Cos => mode.cos_slot = Some(i),
                Phase::Sin => mode.sin_slot = Some(i),
            }
        }
        Self {
            modes,
            len: basis.len(),
            gl: GaussLegendre::new(STAR_RADIAL_NODES),
            angular: periodic_trapezoid(STAR_ANGULAR_NODES),
        }
    }

    pub fn project(&self, shape: &StarSource) -> SpectralSource {
        let mut coeffs = vec![0.0; self.len];
        let mut radial = vec![0.0; self.modes.len()];
        for &(theta, wt) in &self.angular {
            let rmax = shape.radius(theta);
            radial.iter_mut().for_each(|v| *v = 0.0);
            for (rho, w) in self.gl.on_interval(0.0, rmax) {
                for (acc, mode) in radial.iter_mut().zip(&self.modes) {
                    *acc += w * rho * bessel::j_unchecked(mode.order, mode.zero * rho);
                }
            }
            for (mode, inner) in self.modes.iter().zip(&radial) {
                let mt = mode.order as f64 * theta;
                if let Some(i) = mode.cos_slot {
                    coeffs[i] += wt * mt.cos() * inner;
                }
                if let Some(i) = mode.sin_slot {
                    coeffs[i] += wt * mt.sin() * inner;
                }
            }
        }
        for mode in &self.modes {
            for slot in [mode.cos_slot, mode.sin_slot].into_iter().flatten() {
                coeffs[slot] *= mode.omega;
            }
        }
        SpectralSource { coeffs }
    }
}
