//! Run configuration: JSON on disk, preset defaults underneath, command-line
//! flags on top.

use std::path::{Path, PathBuf};

use heatsrc::eigensystem::{enumerate_basis, EigenBasis};
use heatsrc::forward::{decay_cutoff, NoiseModel, TimeGrid};
use heatsrc::inversion::{
    AlternatingConfig, Misfit, QMode, ShapeFitConfig, UpdateRule, DEFAULT_INITIAL_RADIUS, DEFAULT_SHAPE_HARMONICS,
};
use heatsrc::presets;
use heatsrc::solvers::{LmConfig, TvSettings};
use heatsrc::sources::{SpectralSource, StarSource, StepSource};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

/// Environment variable naming the default output root.
pub const OUTPUT_ENV: &str = "HEATSRC_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    E1,
    E2,
    E3,
    Custom,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::E1 => "e1",
            Preset::E2 => "e2",
            Preset::E3 => "e3",
            Preset::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum QModeSetting {
    /// Use the true `q` from the config.
    Known,
    /// Re-solve `q` by TV after each shape update.
    #[default]
    Alternate,
}

/// Ground truth used to synthesize data and score reconstructions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truth {
    /// Spectral coefficients of `p`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    /// Radius parameters `[α_0, α_c^1, α_s^1, ...]` of a star-shaped support.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Vec<f64>>,
    /// Steps `[onset, height]` of `q`.
    pub q: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeSettings {
    pub harmonics: usize,
    pub initial_radius: f64,
    pub q_mode: QModeSetting,
    pub max_rounds: usize,
    pub tol: f64,
}

impl Default for ShapeSettings {
    fn default() -> Self {
        Self {
            harmonics: DEFAULT_SHAPE_HARMONICS,
            initial_radius: DEFAULT_INITIAL_RADIUS,
            q_mode: QModeSetting::Alternate,
            max_rounds: 20,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Preset,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    pub angles: Vec<f64>,
    /// Relative noise levels; one dataset per entry.
    #[serde(deserialize_with = "one_or_many")]
    pub delta: Vec<f64>,
    pub seed: u64,
    pub noise_model: NoiseModel,
    pub beta_p: f64,
    pub beta_q: f64,
    /// Search-space size. Takes precedence over `lambda_max`.
    pub n_modes: Option<usize>,
    /// Basis cutoff; when both this and `n_modes` are unset the decay
    /// heuristic `λ ≤ ln(10/δ)/dt` is used.
    pub lambda_max: Option<f64>,
    /// Cutoff of the basis used to synthesize data from the truth.
    pub truth_lambda_max: f64,
    #[serde(alias = "J")]
    pub outer_iterations: usize,
    pub update_rule: UpdateRule,
    pub misfit: Misfit,
    pub tv: TvSettings,
    pub lm: LmConfig,
    pub shape: ShapeSettings,
    pub truth: Option<Truth>,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let e1 = Self {
            preset,
            horizon: presets::HORIZON,
            dt: presets::DT,
            angles: presets::TWO_ANGLES.to_vec(),
            delta: presets::NOISE_LEVELS.to_vec(),
            seed: 0,
            noise_model: NoiseModel::Uniform,
            beta_p: presets::BETA_P,
            beta_q: presets::BETA_Q,
            n_modes: None,
            lambda_max: Some(presets::E1_LAMBDA_MAX),
            truth_lambda_max: 400.0,
            outer_iterations: presets::OUTER_ITERATIONS,
            update_rule: UpdateRule::PaperLiteral,
            misfit: Misfit::Sum,
            tv: TvSettings::default(),
            lm: LmConfig::default(),
            shape: ShapeSettings::default(),
            truth: Some(Truth {
                p: Some(presets::e1_p().coeffs),
                shape: None,
                q: presets::e1_q().into(),
            }),
            output: None,
        };
        let shape_truth = |shape: StarSource| Truth {
            p: None,
            shape: Some(shape.params().to_vec()),
            q: presets::e1_q().into(),
        };
        let known_q = ShapeSettings {
            q_mode: QModeSetting::Known,
            ..ShapeSettings::default()
        };
        match preset {
            Preset::E1 => e1,
            Preset::E2 => Self {
                angles: presets::FOUR_ANGLES.to_vec(),
                dt: 5e-3,
                delta: vec![0.01],
                lambda_max: Some(presets::SHAPE_LAMBDA_MAX),
                truth: Some(shape_truth(presets::e2_shape())),
                shape: known_q,
                ..e1
            },
            Preset::E3 => Self {
                delta: vec![0.01],
                lambda_max: Some(presets::SHAPE_LAMBDA_MAX),
                truth: Some(shape_truth(presets::e3_shape())),
                shape: known_q,
                ..e1
            },
            Preset::Custom => Self {
                delta: vec![0.01],
                truth: None,
                ..e1
            },
        }
    }

    /// Reads a config file (or the `config` member of a run manifest) over
    /// the defaults of its preset. `preset` overrides the file's choice.
    pub fn load(path: &Path, preset: Option<Preset>) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut value: Value = serde_json::from_str(&text).map_err(|e| {
            CliError::Config(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column()))
        })?;
        if let Some(inner) = value.get("config").filter(|_| value.get("manifest_version").is_some()) {
            value = inner.clone();
        }
        Self::from_value(value, preset).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn from_value(value: Value, preset: Option<Preset>) -> CliResult<Self> {
        let Value::Object(fields) = value else {
            return Err(CliError::Config("top level must be a JSON object".into()));
        };
        let chosen = match (preset, fields.get("preset")) {
            (Some(p), _) => p,
            (None, Some(v)) => serde_json::from_value(v.clone())
                .map_err(|e| CliError::Config(format!("field `preset`: {e}")))?,
            (None, None) => Preset::Custom,
        };
        let mut merged = serde_json::to_value(Self::preset(chosen)).expect("config serializes");
        let base = merged.as_object_mut().expect("config is an object");
        if fields.contains_key("J") {
            base.remove("outer_iterations");
        }
        // a truth is replaced as a whole, never mixed with the preset's
        if fields.contains_key("truth") {
            base.remove("truth");
        }
        merge(&mut merged, Value::Object(fields));
        merged["preset"] = serde_json::to_value(chosen).expect("preset serializes");
        let cfg: Self = serde_path_to_error::deserialize(merged).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("field `{path}`: {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let fail = |field: &str, msg: String| Err(CliError::Config(format!("field `{field}`: {msg}")));
        if let Err(e) = self.grid() {
            return fail("dt", e.to_string());
        }
        if self.angles.is_empty() || self.angles.iter().any(|a| !a.is_finite()) {
            return fail("angles", "need at least one finite angle".into());
        }
        if self.delta.is_empty() {
            return fail("delta", "need at least one noise level".into());
        }
        if let Some(d) = self.delta.iter().find(|d| !(**d >= 0.0 && **d < 1.0)) {
            return fail("delta", format!("noise level {d} outside [0, 1)"));
        }
        for (name, v) in [("beta_p", self.beta_p), ("beta_q", self.beta_q)] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(name, format!("must be finite and >= 0, got {v}"));
            }
        }
        if self.n_modes == Some(0) {
            return fail("n_modes", "must be >= 1".into());
        }
        if let Some(l) = self.lambda_max {
            if !(l > 0.0 && l.is_finite()) {
                return fail("lambda_max", format!("must be positive, got {l}"));
            }
        }
        if !(self.truth_lambda_max > 0.0 && self.truth_lambda_max.is_finite()) {
            return fail("truth_lambda_max", format!("must be positive, got {}", self.truth_lambda_max));
        }
        if self.outer_iterations == 0 {
            return fail("outer_iterations", "must be >= 1".into());
        }
        if !(self.tv.epsilon > 0.0) || !(self.tv.tol > 0.0) {
            return fail("tv", "epsilon and tol must be positive".into());
        }
        if self.lm.max_iter == 0 || !(self.lm.mu0 > 0.0) || !(self.lm.mu_up > 1.0) || !(self.lm.mu_down > 0.0) {
            return fail("lm", "need max_iter >= 1, mu0 > 0, mu_up > 1, mu_down > 0".into());
        }
        if let Err(e) = self.initial_shape() {
            return fail("shape", e.to_string());
        }
        if self.shape.max_rounds == 0 || !(self.shape.tol > 0.0) {
            return fail("shape", "need max_rounds >= 1 and tol > 0".into());
        }
        if let Some(truth) = &self.truth {
            if let Err(e) = StepSource::try_from(truth.q.clone()) {
                return fail("truth.q", e.to_string());
            }
            match (&truth.p, &truth.shape) {
                (Some(_), Some(_)) | (None, None) => {
                    return fail("truth", "give exactly one of `p` and `shape`".into());
                }
                (Some(p), None) if p.is_empty() || p.iter().any(|v| !v.is_finite()) => {
                    return fail("truth.p", "need finite coefficients".into());
                }
                (None, Some(s)) => {
                    if let Err(e) = StarSource::from_params(s) {
                        return fail("truth.shape", e.to_string());
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> heatsrc::Result<TimeGrid> {
        TimeGrid::new(self.horizon, self.dt)
    }

    /// Search basis for the reconstruction.
    pub fn basis(&self, dt: f64) -> CliResult<EigenBasis> {
        let lambda = match (self.n_modes, self.lambda_max) {
            (Some(n), _) => {
                let mut lambda = 50.0;
                loop {
                    let b = enumerate_basis(lambda).map_err(CliError::compute)?;
                    if b.len() >= n {
                        return b.prefix(n).map_err(CliError::compute);
                    }
                    lambda *= 1.5;
                }
            }
            (None, Some(l)) => l,
            (None, None) => {
                let delta = self.delta.iter().copied().fold(f64::INFINITY, f64::min);
                let l = decay_cutoff(dt, delta);
                if !l.is_finite() {
                    return Err(CliError::Config(
                        "noise level 0 leaves the decay cutoff unbounded; set `n_modes` or `lambda_max`".into(),
                    ));
                }
                l
            }
        };
        enumerate_basis(lambda).map_err(CliError::compute)
    }

    /// Basis used to synthesize data: at least as fine as `search`.
    pub fn truth_basis(&self, search: &EigenBasis) -> CliResult<EigenBasis> {
        let truth_len = self.truth.as_ref().and_then(|t| t.p.as_ref()).map_or(0, Vec::len);
        let mut lambda = self.truth_lambda_max.max(search.lambda_max());
        loop {
            let b = enumerate_basis(lambda).map_err(CliError::compute)?;
            if b.len() >= truth_len {
                return Ok(b);
            }
            lambda *= 1.5;
        }
    }

    pub fn alternating(&self, basis: &EigenBasis) -> AlternatingConfig {
        AlternatingConfig {
            n_modes: basis.len(),
            beta_p: self.beta_p,
            beta_q: self.beta_q,
            outer_iterations: self.outer_iterations,
            update_rule: self.update_rule,
            misfit: self.misfit,
            tv: self.tv,
        }
    }

    pub fn shape_fit(&self) -> ShapeFitConfig {
        ShapeFitConfig {
            lm: self.lm,
            max_rounds: self.shape.max_rounds,
            tol: self.shape.tol,
            beta_q: self.beta_q,
            misfit: self.misfit,
            tv: self.tv,
        }
    }

    pub fn initial_shape(&self) -> heatsrc::Result<StarSource> {
        StarSource::circle(self.shape.initial_radius)?.with_harmonics(self.shape.harmonics)
    }

    pub fn q_mode(&self) -> CliResult<QMode> {
        match self.shape.q_mode {
            QModeSetting::Alternate => Ok(QMode::Alternate),
            QModeSetting::Known => Ok(QMode::Known(self.truth_q()?.ok_or_else(|| {
                CliError::Config("shape.q_mode = known needs `truth.q`".into())
            })?)),
        }
    }

    pub fn truth_q(&self) -> CliResult<Option<StepSource>> {
        self.truth
            .as_ref()
            .map(|t| StepSource::try_from(t.q.clone()).map_err(|e| CliError::Config(format!("field `truth.q`: {e}"))))
            .transpose()
    }

    pub fn truth_shape(&self) -> Option<StarSource> {
        let params = self.truth.as_ref()?.shape.as_ref()?;
        StarSource::from_params(params).ok()
    }

    pub fn truth_p(&self) -> Option<SpectralSource> {
        self.truth.as_ref()?.p.clone().map(SpectralSource::new)
    }

    /// Whether runs of this config fit a star shape rather than spectral
    /// coefficients.
    pub fn fits_shape(&self) -> bool {
        self.truth.as_ref().is_some_and(|t| t.shape.is_some())
    }

    /// Output directory: explicit setting, else `$HEATSRC_OUT/<preset>`,
    /// else `heatsrc-out/<preset>`.
    pub fn output_dir(&self) -> PathBuf {
        if let Some(dir) = &self.output {
            return dir.clone();
        }
        let root = std::env::var_os(OUTPUT_ENV).map_or_else(|| PathBuf::from("heatsrc-out"), PathBuf::from);
        root.join(self.preset.name())
    }
}

fn one_or_many<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(f64),
        Many(Vec<f64>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

/// Overwrites `base` with `patch`, recursing into objects.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Command-line overrides; `None` leaves the config value alone.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Noise seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Noise level(s), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub delta: Option<Vec<f64>>,
    /// Time step.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Time horizon T.
    #[arg(long = "horizon")]
    pub horizon: Option<f64>,
    /// Observation angles in radians, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub angles: Option<Vec<f64>>,
    #[arg(long)]
    pub beta_p: Option<f64>,
    #[arg(long)]
    pub beta_q: Option<f64>,
    /// Number of eigenmodes in the search space.
    #[arg(long)]
    pub n_modes: Option<usize>,
    /// Basis cutoff on the eigenvalues.
    #[arg(long)]
    pub lambda_max: Option<f64>,
    /// Outer iterations of the alternating scheme.
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long, value_parser = parse_update_rule)]
    pub update_rule: Option<UpdateRule>,
    #[arg(long)]
    pub q_mode: Option<QModeSetting>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_update_rule(s: &str) -> Result<UpdateRule, String> {
    serde_json::from_value(Value::String(s.to_string()))
        .map_err(|_| format!("unknown update rule `{s}` (paper_literal, gauss_seidel)"))
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> CliResult<()> {
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.delta {
            cfg.delta = v.clone();
        }
        if let Some(v) = self.dt {
            cfg.dt = v;
        }
        if let Some(v) = self.horizon {
            cfg.horizon = v;
        }
        if let Some(v) = &self.angles {
            cfg.angles = v.clone();
        }
        if let Some(v) = self.beta_p {
            cfg.beta_p = v;
        }
        if let Some(v) = self.beta_q {
            cfg.beta_q = v;
        }
        if let Some(v) = self.n_modes {
            cfg.n_modes = Some(v);
        }
        if let Some(v) = self.lambda_max {
            cfg.lambda_max = Some(v);
            if self.n_modes.is_none() {
                cfg.n_modes = None;
            }
        }
        if let Some(v) = self.iterations {
            cfg.outer_iterations = v;
        }
        if let Some(v) = self.update_rule {
            cfg.update_rule = v;
        }
        if let Some(v) = self.q_mode {
            cfg.shape.q_mode = v;
        }
        if let Some(v) = &self.out {
            cfg.output = Some(v.clone());
        }
        cfg.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn presets_validate_and_round_trip() {
        for p in [Preset::E1, Preset::E2, Preset::E3, Preset::Custom] {
            let cfg = ExperimentConfig::preset(p);
            cfg.validate().unwrap();
            let back = ExperimentConfig::from_value(serde_json::to_value(&cfg).unwrap(), None).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn file_fields_override_the_preset() {
        let cfg = ExperimentConfig::from_value(json!({"preset": "e1", "seed": 7, "shape": {"harmonics": 2}}), None).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.shape.harmonics, 2);
        assert_eq!(cfg.shape.max_rounds, 20);
        assert_eq!(cfg.beta_q, 8e-4);
    }

    #[test]
    fn diagnostics_name_the_field() {
        let err = ExperimentConfig::from_value(json!({"preset": "e1", "beta_p": "big"}), None).unwrap_err();
        assert!(err.to_string().contains("beta_p"), "{err}");
        let err = ExperimentConfig::from_value(json!({"preset": "e1", "shape": {"radius": 1}}), None).unwrap_err();
        assert!(err.to_string().contains("radius"), "{err}");
        let err = ExperimentConfig::from_value(json!({"preset": "e1", "delta": [0.01, 2.0]}), None).unwrap_err();
        assert!(err.to_string().contains("`delta`"), "{err}");
        assert_eq!(err.status(), 2);
        let err = ExperimentConfig::from_value(json!({"preset": "e1", "dt": 0.03}), None).unwrap_err();
        assert!(err.to_string().contains("`dt`"), "{err}");
    }

    #[test]
    fn truth_replaces_the_preset_truth() {
        let cfg = ExperimentConfig::from_value(
            json!({"preset": "e1", "truth": {"shape": [0.5], "q": [[0.0, 1.0]]}}),
            None,
        )
        .unwrap();
        assert!(cfg.fits_shape());
        assert_eq!(cfg.truth.unwrap().p, None);
    }

    #[test]
    fn single_delta_is_a_list_of_one() {
        let cfg = ExperimentConfig::from_value(json!({"preset": "e1", "delta": 0.05}), None).unwrap();
        assert_eq!(cfg.delta, vec![0.05]);
    }

    #[test]
    fn j_is_accepted_for_outer_iterations() {
        let cfg = ExperimentConfig::from_value(json!({"preset": "e1", "J": 4}), None).unwrap();
        assert_eq!(cfg.outer_iterations, 4);
    }

    #[test]
    fn basis_selection() {
        let mut cfg = ExperimentConfig::preset(Preset::E1);
        assert_eq!(cfg.basis(cfg.dt).unwrap().len(), 12);
        cfg.n_modes = Some(5);
        assert_eq!(cfg.basis(cfg.dt).unwrap().len(), 5);
        cfg.n_modes = None;
        cfg.lambda_max = None;
        cfg.delta = vec![0.0];
        assert_eq!(cfg.basis(cfg.dt).unwrap_err().status(), 2);
    }

    #[test]
    fn overrides_apply_and_revalidate() {
        let mut cfg = ExperimentConfig::preset(Preset::E1);
        let o = Overrides {
            seed: Some(3),
            delta: Some(vec![0.02]),
            ..Default::default()
        };
        o.apply(&mut cfg).unwrap();
        assert_eq!((cfg.seed, cfg.delta.clone()), (3, vec![0.02]));
        let bad = Overrides {
            dt: Some(0.3),
            ..Default::default()
        };
        assert!(bad.apply(&mut cfg).is_err());
    }
}
