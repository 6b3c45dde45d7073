//! Reconstruction drivers: alternating `p`/`q` regularized least squares and
//! Levenberg–Marquardt recovery of star-shaped supports.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::eigensystem::EigenBasis;
use crate::error::{Error, Result};
use crate::forward::{assemble_p_operator, assemble_p_operator_cells, assemble_q_operator, FluxDataset, TimeGrid};
use crate::solvers::{
    lm_minimize, tikhonov_solve, total_variation, tv_solve, JacobianMode, LmConfig, LmReport, TikhonovProblem,
    TvProblem, TvSettings,
};
use crate::sources::{SpectralSource, StarProjector, StarSource, StepSource};

/// Which `p` iterate feeds the `q` step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// `q_{j+1}` from `F[p_j]`.
    #[default]
    PaperLiteral,
    /// `q_{j+1}` from `F[p_{j+1}]`.
    GaussSeidel,
}

/// Discretization of the data misfit `‖F(p,q) - g‖²`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Misfit {
    /// Plain sum of squares over all samples.
    #[default]
    Sum,
    /// Rectangle rule in time: the sum weighted by `dt`, approximating
    /// `Σ_ℓ ‖g_ℓ‖²_{L²[0,T]}`.
    Integral,
}

impl Misfit {
    fn row_weight(self, grid: &TimeGrid) -> f64 {
        match self {
            Misfit::Sum => 1.0,
            Misfit::Integral => grid.dt().sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlternatingConfig {
    /// Number of eigenmodes in the search space for `p`.
    pub n_modes: usize,
    pub beta_p: f64,
    pub beta_q: f64,
    pub outer_iterations: usize,
    #[serde(default)]
    pub update_rule: UpdateRule,
    #[serde(default)]
    pub misfit: Misfit,
    #[serde(default = "default_tv")]
    pub tv: TvSettings,
}

fn default_tv() -> TvSettings {
    TvSettings::default()
}

impl AlternatingConfig {
    pub fn new(n_modes: usize) -> Self {
        Self {
            n_modes,
            beta_p: 1e-2,
            beta_q: 8e-4,
            outer_iterations: 10,
            update_rule: UpdateRule::PaperLiteral,
            misfit: Misfit::default(),
            tv: TvSettings::default(),
        }
    }

    pub fn validate(&self, basis: &EigenBasis) -> Result<()> {
        if self.n_modes == 0 || self.n_modes > basis.len() {
            return Err(Error::Invalid(format!(
                "n_modes = {} outside 1..={}",
                self.n_modes,
                basis.len()
            )));
        }
        if self.outer_iterations == 0 {
            return Err(Error::Invalid("outer_iterations must be >= 1".into()));
        }
        for (name, v) in [("beta_p", self.beta_p), ("beta_q", self.beta_q)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    fn tv_settings(&self) -> TvSettings {
        TvSettings {
            beta: self.beta_q,
            ..self.tv
        }
    }
}

/// One outer step, before and after the rescaling `p ← p/s`, `q ← s q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Iterate {
    pub raw_p: Vec<f64>,
    pub raw_q: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// `s = ‖raw_p‖`, signed by the sign convention.
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    /// `‖F(p, q) - g‖²` in the configured discretization.
    pub misfit: f64,
    /// Misfit plus both penalties.
    pub objective: f64,
    pub tv_iterations: usize,
    pub tv_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    /// Unit-norm spatial factor on the first `n_modes` eigenfunctions.
    pub p: SpectralSource,
    /// Cell values of `q` on the data grid.
    pub q: Vec<f64>,
    pub grid: TimeGrid,
    /// Entry 0 describes `(p_0, q_0)`.
    pub trace: Vec<TraceEntry>,
    pub iterates: Vec<Iterate>,
    /// Every TV solve reported a non-increasing objective.
    pub tv_monotone: bool,
}

impl ReconstructionResult {
    /// `(e_p, e_q)` for every stored iterate.
    pub fn error_trace(&self, truth_p: &SpectralSource, truth_q: &StepSource) -> Vec<(f64, f64)> {
        self.iterates
            .iter()
            .map(|it| error_report(&SpectralSource::new(it.p.clone()), &it.q, &self.grid, truth_p, truth_q))
            .collect()
    }
}

/// Flips signs so the largest-magnitude coefficient of `p` is positive.
fn sign_convention(p: &[f64]) -> f64 {
    let lead = p
        .iter()
        .copied()
        .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
    if lead < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Alternating reconstruction of `(p, q)` from boundary flux data.
///
/// `p_0` is the projection of `1` onto the search space and `q_0` the TV
/// solution for that `p_0`. Every outer step solves a Tikhonov problem for
/// `p` and a TV problem for `q`, then rescales to `‖p‖ = 1`.
pub fn alternate(data: &FluxDataset, cfg: &AlternatingConfig, basis: &EigenBasis) -> Result<ReconstructionResult> {
    data.validate()?;
    cfg.validate(basis)?;
    let sub = basis.prefix(cfg.n_modes)?;
    let grid = data.grid;
    let w = cfg.misfit.row_weight(&grid);
    let g = DVector::from_vec(data.stacked()) * w;
    let tv = cfg.tv_settings();

    let q_step = |p: &[f64]| -> Result<(DVector<f64>, usize, bool, bool)> {
        let a = assemble_q_operator(&SpectralSource::new(p.to_vec()), &data.angles, &grid, &sub)? * w;
        let sol = tv_solve(&TvProblem {
            matrix: &a,
            data: &g,
            settings: tv,
        })?;
        Ok((sol.x, sol.iterations, sol.converged, sol.monotone))
    };
    let p_step = |q: &DVector<f64>| -> Result<DVector<f64>> {
        let m = assemble_p_operator_cells(q.as_slice(), &data.angles, &grid, &sub, cfg.n_modes)? * w;
        tikhonov_solve(&TikhonovProblem {
            matrix: &m,
            data: &g,
            beta: cfg.beta_p,
        })
    };
    let evaluate = |p: &[f64], q: &DVector<f64>| -> Result<(f64, f64)> {
        let m = assemble_p_operator_cells(q.as_slice(), &data.angles, &grid, &sub, cfg.n_modes)? * w;
        let misfit = (m * DVector::from_column_slice(p) - &g).norm_squared();
        let pn: f64 = p.iter().map(|v| v * v).sum();
        Ok((misfit, misfit + cfg.beta_p * pn + cfg.beta_q * total_variation(q.as_slice())))
    };

    let mut p = SpectralSource::constant_one(&sub).coeffs;
    let (mut q, tv_iterations, tv_converged, mut tv_monotone) = q_step(&p)?;
    if p.iter().all(|v| *v == 0.0) {
        return Err(Error::Degenerate("initial spatial guess has no component in the search space".into()));
    }
    let (misfit, objective) = evaluate(&p, &q)?;
    let mut trace = vec![TraceEntry {
        iteration: 0,
        misfit,
        objective,
        tv_iterations,
        tv_converged,
    }];
    let mut iterates = vec![Iterate {
        raw_p: p.clone(),
        raw_q: q.as_slice().to_vec(),
        p: p.clone(),
        q: q.as_slice().to_vec(),
        scale: 1.0,
    }];

    for j in 0..cfg.outer_iterations {
        let p_next = p_step(&q)?;
        let q_source = match cfg.update_rule {
            UpdateRule::PaperLiteral => p.clone(),
            UpdateRule::GaussSeidel => p_next.as_slice().to_vec(),
        };
        let (q_next, tv_iterations, tv_converged, monotone) = q_step(&q_source)?;
        tv_monotone &= monotone;

        let norm = p_next.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Degenerate(format!(
                "spatial iterate {} has norm {norm}; the data carry no recoverable signal at beta_p = {}",
                j + 1,
                cfg.beta_p
            )));
        }
        let s = norm * sign_convention(p_next.as_slice());
        let raw_p = p_next.as_slice().to_vec();
        let raw_q = q_next.as_slice().to_vec();
        p = raw_p.iter().map(|v| v / s).collect();
        q = q_next * s;
        let (misfit, objective) = evaluate(&p, &q)?;
        log::debug!("outer step {}: misfit {misfit:e}, objective {objective:e}", j + 1);
        trace.push(TraceEntry {
            iteration: j + 1,
            misfit,
            objective,
            tv_iterations,
            tv_converged,
        });
        iterates.push(Iterate {
            raw_p,
            raw_q,
            p: p.clone(),
            q: q.as_slice().to_vec(),
            scale: s,
        });
    }

    Ok(ReconstructionResult {
        p: SpectralSource::new(p),
        q: q.as_slice().to_vec(),
        grid,
        trace,
        iterates,
        tv_monotone,
    })
}

/// `(e_p, e_q)`: L² errors after folding the sign ambiguity.
///
/// The truth is rescaled to `‖p‖ = 1` (and `q` by the inverse factor). `q_rec`
/// holds cell values on `(t_{j-1}, t_j]`; the truth is sampled on the same
/// cells (at their midpoints, as the operators do), node `t_j` carries cell
/// `j` and `t_0` the first cell. Trapezoid rule over the nodes.
pub fn error_report(
    p_rec: &SpectralSource,
    q_rec: &[f64],
    grid: &TimeGrid,
    truth_p: &SpectralSource,
    truth_q: &StepSource,
) -> (f64, f64) {
    let norm = truth_p.norm();
    let n = p_rec.len().max(truth_p.len());
    let coeff = |c: &[f64], i: usize| c.get(i).copied().unwrap_or(0.0);
    let dist = |s: f64| -> f64 {
        (0..n)
            .map(|i| (s * coeff(&p_rec.coeffs, i) - coeff(&truth_p.coeffs, i) / norm).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let (e_plus, e_minus) = (dist(1.0), dist(-1.0));
    let s = if e_minus < e_plus { -1.0 } else { 1.0 };

    let nt = grid.len();
    let truth_cells = grid.cell_values(truth_q);
    let node = |i: usize| -> (f64, f64) {
        let cell = i.max(1) - 1;
        (s * q_rec[cell], norm * truth_cells[cell])
    };
    let mut acc = 0.0;
    for i in 0..=nt {
        let (r, t) = node(i);
        let w = if i == 0 || i == nt { 0.5 } else { 1.0 };
        acc += w * (r - t).powi(2);
    }
    (e_plus.min(e_minus), (acc * grid.dt()).sqrt())
}

/// How `q` is handled while fitting a shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QMode {
    /// `q` is given; only the shape is fitted.
    Known(StepSource),
    /// `q` is re-solved by TV after every shape update.
    Alternate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeFitConfig {
    pub lm: LmConfig,
    pub max_rounds: usize,
    /// Parameter change (max norm) that ends the alternation.
    pub tol: f64,
    pub beta_q: f64,
    #[serde(default)]
    pub misfit: Misfit,
    #[serde(default = "default_tv")]
    pub tv: TvSettings,
}

impl Default for ShapeFitConfig {
    fn default() -> Self {
        Self {
            lm: LmConfig::default(),
            max_rounds: 20,
            tol: 1e-6,
            beta_q: 8e-4,
            misfit: Misfit::default(),
            tv: TvSettings::default(),
        }
    }
}

/// Harmonic count of the default shape model (9 parameters).
pub const DEFAULT_SHAPE_HARMONICS: usize = 4;
/// Radius of the default initial circle.
pub const DEFAULT_INITIAL_RADIUS: f64 = 0.4;

#[derive(Debug, Clone)]
pub struct ShapeFitResult {
    pub shape: StarSource,
    /// Cell values of `q`.
    pub q: Vec<f64>,
    /// `‖F(χ_shape, q) - g‖` in the configured discretization.
    pub residual_norm: f64,
    pub rounds: usize,
    pub converged: bool,
    pub lm: Vec<LmReport>,
}

/// Fits the radius function of a star-shaped support.
///
/// Each round runs LM on the shape parameters with `q` frozen, then (in
/// [`QMode::Alternate`]) re-solves `q` by TV for the new shape.
pub fn shape_fit(
    data: &FluxDataset,
    init: &StarSource,
    q_mode: &QMode,
    basis: &EigenBasis,
    cfg: &ShapeFitConfig,
) -> Result<ShapeFitResult> {
    data.validate()?;
    let grid = data.grid;
    let w = cfg.misfit.row_weight(&grid);
    let g = DVector::from_vec(data.stacked()) * w;
    let projector = StarProjector::new(basis);
    let n = basis.len();
    let tv = TvSettings {
        beta: cfg.beta_q,
        ..cfg.tv
    };

    let solve_q = |shape: &StarSource| -> Result<Vec<f64>> {
        let p = projector.project(shape);
        let a = assemble_q_operator(&p, &data.angles, &grid, basis)? * w;
        let sol = tv_solve(&TvProblem {
            matrix: &a,
            data: &g,
            settings: tv,
        })?;
        Ok(sol.x.as_slice().to_vec())
    };
    let operator = |q: &[f64]| -> Result<DMatrix<f64>> {
        Ok(match q_mode {
            QMode::Known(step) => assemble_p_operator(step, &data.angles, &grid, basis, n)?,
            QMode::Alternate => assemble_p_operator_cells(q, &data.angles, &grid, basis, n)?,
        } * w)
    };

    let mut shape = init.clone();
    let mut q = match q_mode {
        QMode::Known(step) => grid.cell_values(step),
        QMode::Alternate => solve_q(&shape)?,
    };
    let mut reports = Vec::new();
    let mut converged = false;
    let mut residual_norm = f64::NAN;
    let mut rounds = 0;
    while rounds < cfg.max_rounds {
        rounds += 1;
        let m = operator(&q)?;
        let residual = |x: &DVector<f64>| -> Option<DVector<f64>> {
            let candidate = StarSource::from_params(x.as_slice()).ok()?;
            let p = DVector::from_vec(projector.project(&candidate).coeffs);
            Some(&m * p - &g)
        };
        let x0 = DVector::from_column_slice(shape.params());
        let rep = lm_minimize(residual, JacobianMode::ForwardDifference, &x0, &cfg.lm)?;
        let change = (&rep.x - &x0).amax();
        shape = StarSource::from_params(rep.x.as_slice())?;
        residual_norm = rep.residual_norm;
        log::debug!(
            "shape round {rounds}: residual {:.3e} -> {:.3e}, change {change:.3e}",
            rep.initial_residual_norm,
            rep.residual_norm
        );
        reports.push(rep);
        match q_mode {
            QMode::Known(_) => {
                converged = true;
                break;
            }
            QMode::Alternate => {
                q = solve_q(&shape)?;
                if change < cfg.tol {
                    converged = true;
                    break;
                }
            }
        }
    }
    if let QMode::Alternate = q_mode {
        let p = DVector::from_vec(projector.project(&shape).coeffs);
        residual_norm = (operator(&q)? * p - &g).norm();
    }
    Ok(ShapeFitResult {
        shape,
        q,
        residual_norm,
        rounds,
        converged,
        lm: reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigensystem::enumerate_basis;
    use crate::forward::{synthesize, NoiseModel};
    use crate::sources::staircase_q;
    use std::f64::consts::PI;

    fn grid() -> TimeGrid {
        TimeGrid::new(1.0, 0.01).unwrap()
    }

    #[test]
    fn error_report_trivial_cases() {
        let g = grid();
        let p = SpectralSource::new(vec![0.6, 0.8]);
        let q = staircase_q();
        let cells = g.cell_values(&q);
        let (ep, eq) = error_report(&p, &cells, &g, &p, &q);
        assert_eq!((ep, eq), (0.0, 0.0));

        let neg_p = p.scaled(-1.0);
        let neg_q: Vec<f64> = cells.iter().map(|v| -v).collect();
        let (ep, eq) = error_report(&neg_p, &neg_q, &g, &p, &q);
        assert!(ep < 1e-15 && eq < 1e-15);

        let shifted: Vec<f64> = cells.iter().map(|v| v + 0.1).collect();
        let (_, eq) = error_report(&p, &shifted, &g, &p, &q);
        assert!((eq - 0.1).abs() < 1e-12, "{eq}");
    }

    #[test]
    fn aligned_cells_have_no_time_error() {
        let g = grid();
        let p = SpectralSource::new(vec![1.0]);
        let q = StepSource::from_levels(&[(0.0, 1.0), (0.3, 2.0), (0.7, 1.5)]).unwrap();
        let (_, eq) = error_report(&p, &g.cell_values(&q), &g, &p, &q);
        assert_eq!(eq, 0.0);
    }

    #[test]
    fn error_report_normalizes_truth() {
        let g = grid();
        let truth = SpectralSource::new(vec![3.0, 4.0]);
        let q = StepSource::from_levels(&[(0.0, 1.0)]).unwrap();
        let cells = vec![5.0; g.len()];
        let (ep, eq) = error_report(&SpectralSource::new(vec![0.6, 0.8, 0.0]), &cells, &g, &truth, &q);
        assert!(ep < 1e-15 && eq < 1e-12);
    }

    #[test]
    fn zero_data_aborts() {
        let basis = enumerate_basis(50.0).unwrap();
        let g = grid();
        let data = FluxDataset::new(vec![0.0, 1.0], g, vec![vec![0.0; g.len()]; 2], 0.0, 0).unwrap();
        let err = alternate(&data, &AlternatingConfig::new(basis.len()), &basis);
        assert!(matches!(err, Err(Error::Degenerate(_))), "{err:?}");
    }

    #[test]
    fn single_mode_noiseless() {
        let basis = enumerate_basis(10.0).unwrap();
        let g = grid();
        let p = SpectralSource::unit(1, 0);
        let q = StepSource::from_levels(&[(0.0, 1.0)]).unwrap();
        let angles = [0.0, 13.0 * PI / 32.0];
        let data = synthesize(&p, &q, &angles, &g, &basis, 0.0, 0, NoiseModel::Uniform).unwrap();
        let cfg = AlternatingConfig {
            beta_p: 1e-8,
            beta_q: 1e-8,
            ..AlternatingConfig::new(1)
        };
        let rec = alternate(&data, &cfg, &basis).unwrap();
        assert!((rec.p.coeffs[0] - 1.0).abs() < 1e-12);
        let (ep, eq) = error_report(&rec.p, &rec.q, &g, &p, &q);
        assert!(ep < 1e-2 && eq < 1e-2, "{ep} {eq}");
        // recovered product against the closed-form flux -a_1 (1 - e^{-λ t})
        let pair = &basis.pairs()[0];
        let sub = basis.prefix(1).unwrap();
        let m = assemble_p_operator_cells(&rec.q, &angles, &g, &sub, 1).unwrap();
        for (l, &theta) in angles.iter().enumerate() {
            for i in 0..g.len() {
                let t = g.time(i + 1);
                let exact = -pair.coeff_a(theta) * -(-pair.lambda * t).exp_m1();
                let got = m[(l * g.len() + i, 0)] * rec.p.coeffs[0];
                assert!((got - exact).abs() < 1e-3, "t = {t}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn iterates_are_normalized_and_product_preserving() {
        let basis = enumerate_basis(60.0).unwrap();
        let g = grid();
        let p = SpectralSource::new(vec![5.0, 2.0, 1.0]).scaled(1.0 / 30f64.sqrt());
        let angles = [0.0, 13.0 * PI / 32.0];
        let data = synthesize(&p, &staircase_q(), &angles, &g, &basis, 0.01, 3, NoiseModel::Uniform).unwrap();
        let cfg = AlternatingConfig {
            outer_iterations: 4,
            ..AlternatingConfig::new(basis.len())
        };
        let rec = alternate(&data, &cfg, &basis).unwrap();
        assert_eq!(rec.iterates.len(), 5);
        assert_eq!(rec.trace.len(), 5);
        for it in &rec.iterates[1..] {
            let norm: f64 = it.p.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
            for (rp, pn) in it.raw_p.iter().zip(&it.p) {
                for (rq, qn) in it.raw_q.iter().zip(&it.q) {
                    assert!((rp * rq - pn * qn).abs() <= 1e-14 * (1.0 + (rp * rq).abs()));
                }
            }
            let lead = it.p.iter().fold(0.0f64, |a, v| if v.abs() > a.abs() { *v } else { a });
            assert!(lead > 0.0);
        }
        assert!(rec.tv_monotone);
    }

    #[test]
    fn shape_fit_accepts_truth() {
        let basis = enumerate_basis(80.0).unwrap();
        let g = TimeGrid::new(1.0, 0.05).unwrap();
        let truth = StarSource::new(0.5, &[0.0, 0.2], &[]).unwrap();
        let p = crate::sources::project_star(&truth, &basis);
        let q = staircase_q();
        let angles = [0.0, 13.0 * PI / 32.0];
        let data = synthesize(&p, &q, &angles, &g, &basis, 0.0, 0, NoiseModel::Uniform).unwrap();
        let fit = shape_fit(&data, &truth, &QMode::Known(q), &basis, &ShapeFitConfig::default()).unwrap();
        assert!(fit.residual_norm < 1e-12, "{}", fit.residual_norm);
        for (a, b) in fit.shape.params().iter().zip(truth.params()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
