//! Boundary-flux forward map `F(p, q)`.
//!
//! The flux at `(cos θ, sin θ)` is
//! `-Σ_n a_n(θ) λ_n p_n ∫_0^t e^{-λ_n (t-τ)} q(τ) dτ`. For step sources the
//! time convolution is closed-form; for the linear operators `q` is taken
//! piecewise constant on the cells `(t_{j-1}, t_j]` and integrated exactly.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::eigensystem::EigenBasis;
use crate::error::{Error, Result};
use crate::sources::{SpectralSource, StepSource};

/// Uniform sample times `t_i = i·dt`, `i = 1..=T/dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct TimeGrid {
    horizon: f64,
    dt: f64,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    #[serde(rename = "T")]
    horizon: f64,
    dt: f64,
}

impl TryFrom<GridRepr> for TimeGrid {
    type Error = Error;
    fn try_from(r: GridRepr) -> Result<Self> {
        TimeGrid::new(r.horizon, r.dt)
    }
}

impl From<TimeGrid> for GridRepr {
    fn from(g: TimeGrid) -> Self {
        GridRepr {
            horizon: g.horizon,
            dt: g.dt,
        }
    }
}

impl TimeGrid {
    pub fn new(horizon: f64, dt: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) || !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Invalid(format!("need T > 0 and dt > 0, got T = {horizon}, dt = {dt}")));
        }
        let ratio = horizon / dt;
        let len = ratio.round();
        if (ratio - len).abs() > 1e-9 || len < 1.0 {
            return Err(Error::Invalid(format!("T/dt = {ratio} is not a positive integer")));
        }
        Ok(Self {
            horizon,
            dt,
            len: len as usize,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of samples (and of cells).
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `t_i` for `i = 0..=len` (`t_0 = 0`).
    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    /// Sample times `t_1, ..., t_len`.
    pub fn times(&self) -> Vec<f64> {
        (1..=self.len).map(|i| self.time(i)).collect()
    }

    /// Values of a step source on the cells `(t_{j-1}, t_j]`, taken at midpoints.
    pub fn cell_values(&self, q: &StepSource) -> Vec<f64> {
        (0..self.len)
            .map(|j| q.value_at((j as f64 + 0.5) * self.dt))
            .collect()
    }
}

/// Noise distribution for synthetic data: `g^δ = g (1 + δ ξ)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// `ξ ~ U[-1, 1]`.
    #[default]
    Uniform,
    /// `ξ ~ N(0, 1/4)` clipped to `[-1, 1]`.
    ClippedGaussian,
}

/// Flux time series `values[ℓ][i] ≈ ∂u/∂n(θ_ℓ, t_{i+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxDataset {
    pub angles: Vec<f64>,
    pub grid: TimeGrid,
    pub values: Vec<Vec<f64>>,
    pub noise_level: f64,
    pub seed: u64,
    #[serde(default)]
    pub noise_model: NoiseModel,
}

impl FluxDataset {
    pub fn new(angles: Vec<f64>, grid: TimeGrid, values: Vec<Vec<f64>>, noise_level: f64, seed: u64) -> Result<Self> {
        let ds = Self {
            angles,
            grid,
            values,
            noise_level,
            seed,
            noise_model: NoiseModel::Uniform,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.angles.is_empty() {
            return Err(Error::Invalid("dataset has no observation angles".into()));
        }
        if self.values.len() != self.angles.len() {
            return Err(Error::Invalid(format!(
                "{} series for {} angles",
                self.values.len(),
                self.angles.len()
            )));
        }
        for (l, series) in self.values.iter().enumerate() {
            if series.len() != self.grid.len() {
                return Err(Error::Invalid(format!(
                    "series {l} has {} samples, grid has {}",
                    series.len(),
                    self.grid.len()
                )));
            }
            if series.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("series {l} contains non-finite values")));
            }
        }
        Ok(())
    }

    /// Samples stacked angle-major, matching the operator row layout.
    pub fn stacked(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }

    /// The dataset with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.values
            .iter_mut()
            .flatten()
            .for_each(|v| *v *= factor);
        out
    }
}

fn check_alignment(p: &SpectralSource, basis: &EigenBasis) -> Result<()> {
    if p.len() > basis.len() {
        return Err(Error::Invalid(format!(
            "source has {} coefficients, basis only {}",
            p.len(),
            basis.len()
        )));
    }
    Ok(())
}

/// `∫_0^t λ e^{-λ(t-τ)} q(τ) dτ` for a step source.
fn step_response(lambda: f64, q: &StepSource, t: f64) -> f64 {
    q.steps()
        .iter()
        .take_while(|s| s.onset < t)
        .map(|s| s.height * -(-lambda * (t - s.onset)).exp_m1())
        .sum()
}

/// Closed-form flux `∂u/∂n(θ, t)` for a step source.
pub fn flux_exact(p: &SpectralSource, q: &StepSource, theta: f64, t: f64, basis: &EigenBasis) -> Result<f64> {
    check_alignment(p, basis)?;
    let mut total = 0.0;
    for (pn, pair) in p.coeffs.iter().zip(basis.pairs()) {
        if *pn != 0.0 {
            total += pair.coeff_a(theta) * pn * step_response(pair.lambda, q, t);
        }
    }
    Ok(-total)
}

/// Clean flux samples, angle-major.
pub fn flux_samples(
    p: &SpectralSource,
    q: &StepSource,
    angles: &[f64],
    grid: &TimeGrid,
    basis: &EigenBasis,
) -> Result<Vec<Vec<f64>>> {
    angles
        .iter()
        .map(|&theta| {
            grid.times()
                .into_iter()
                .map(|t| flux_exact(p, q, theta, t, basis))
                .collect()
        })
        .collect()
}

/// `F[q]` acting on the first `n_modes` coefficients of `p`, for a step source `q`.
pub fn assemble_p_operator(
    q: &StepSource,
    angles: &[f64],
    grid: &TimeGrid,
    basis: &EigenBasis,
    n_modes: usize,
) -> Result<DMatrix<f64>> {
    check_modes(basis, n_modes)?;
    let nt = grid.len();
    let mut m = DMatrix::zeros(angles.len() * nt, n_modes);
    for (n, pair) in basis.pairs()[..n_modes].iter().enumerate() {
        let response: Vec<f64> = (1..=nt)
            .map(|i| step_response(pair.lambda, q, grid.time(i)))
            .collect();
        for (l, &theta) in angles.iter().enumerate() {
            let a = pair.coeff_a(theta);
            for (i, r) in response.iter().enumerate() {
                m[(l * nt + i, n)] = -a * r;
            }
        }
    }
    Ok(m)
}

/// `F[q]` for `q` piecewise constant on the grid cells.
pub fn assemble_p_operator_cells(
    q_cells: &[f64],
    angles: &[f64],
    grid: &TimeGrid,
    basis: &EigenBasis,
    n_modes: usize,
) -> Result<DMatrix<f64>> {
    check_modes(basis, n_modes)?;
    let nt = grid.len();
    if q_cells.len() != nt {
        return Err(Error::Invalid(format!(
            "{} cell values for a grid of {nt}",
            q_cells.len()
        )));
    }
    let mut m = DMatrix::zeros(angles.len() * nt, n_modes);
    let mut response = vec![0.0; nt];
    for (n, pair) in basis.pairs()[..n_modes].iter().enumerate() {
        let weights = lag_weights(pair.lambda, grid);
        for i in 0..nt {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += q_cells[j] * weights[i - j];
            }
            response[i] = acc;
        }
        for (l, &theta) in angles.iter().enumerate() {
            let a = pair.coeff_a(theta);
            for (i, r) in response.iter().enumerate() {
                m[(l * nt + i, n)] = -a * r;
            }
        }
    }
    Ok(m)
}

/// `λ ∫_{t_{j-1}}^{t_j} e^{-λ(t_i-τ)} dτ` as a function of the lag `i - j`.
fn lag_weights(lambda: f64, grid: &TimeGrid) -> Vec<f64> {
    let cell = -(-lambda * grid.dt()).exp_m1();
    (0..grid.len())
        .map(|lag| (-lambda * grid.time(lag)).exp() * cell)
        .collect()
}

fn check_modes(basis: &EigenBasis, n_modes: usize) -> Result<()> {
    if n_modes == 0 || n_modes > basis.len() {
        return Err(Error::Invalid(format!(
            "mode count {n_modes} outside 1..={}",
            basis.len()
        )));
    }
    Ok(())
}

/// `F[p]` acting on cell values of `q`. Lower block-triangular in time.
pub fn assemble_q_operator(
    p: &SpectralSource,
    angles: &[f64],
    grid: &TimeGrid,
    basis: &EigenBasis,
) -> Result<DMatrix<f64>> {
    check_alignment(p, basis)?;
    let nt = grid.len();
    let mut a = DMatrix::zeros(angles.len() * nt, nt);
    let weights: Vec<Vec<f64>> = basis
        .pairs()
        .iter()
        .zip(&p.coeffs)
        .map(|(pair, _)| lag_weights(pair.lambda, grid))
        .collect();
    for (l, &theta) in angles.iter().enumerate() {
        let mut kernel = vec![0.0; nt];
        for ((pair, pn), w) in basis.pairs().iter().zip(&p.coeffs).zip(&weights) {
            if *pn == 0.0 {
                continue;
            }
            let c = -pair.coeff_a(theta) * pn;
            for (k, wk) in kernel.iter_mut().zip(w) {
                *k += c * wk;
            }
        }
        for i in 0..nt {
            for j in 0..=i {
                a[(l * nt + i, j)] = kernel[i - j];
            }
        }
    }
    Ok(a)
}

/// Noisy data `g^δ = g (1 + δ ξ)` from a seeded ChaCha8 stream, angle-major.
#[allow(clippy::too_many_arguments)]
pub fn synthesize(
    p: &SpectralSource,
    q: &StepSource,
    angles: &[f64],
    grid: &TimeGrid,
    basis: &EigenBasis,
    delta: f64,
    seed: u64,
    noise_model: NoiseModel,
) -> Result<FluxDataset> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::Domain(format!("noise level must lie in [0, 1), got {delta}")));
    }
    let mut values = flux_samples(p, q, angles, grid, basis)?;
    if delta > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gauss: Normal<f64> = Normal::new(0.0, 0.5).expect("valid normal");
        for v in values.iter_mut().flatten() {
            let xi: f64 = match noise_model {
                NoiseModel::Uniform => rng.random_range(-1.0..=1.0),
                NoiseModel::ClippedGaussian => gauss.sample(&mut rng).clamp(-1.0, 1.0),
            };
            *v *= 1.0 + delta * xi;
        }
    }
    let mut ds = FluxDataset::new(angles.to_vec(), *grid, values, delta, seed)?;
    ds.noise_model = noise_model;
    Ok(ds)
}

/// Largest eigenvalue whose one-step decay `e^{-λ dt}` stays above `δ/10`.
/// Infinite for noiseless data.
pub fn decay_cutoff(dt: f64, delta: f64) -> f64 {
    if delta <= 0.0 {
        f64::INFINITY
    } else {
        (10.0 / delta).ln() / dt
    }
}
