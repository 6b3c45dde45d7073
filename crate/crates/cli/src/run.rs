//! The subcommands. Every run writes into one output directory guarded by a
//! lock file and finishes with `manifest.json`, from which it can be
//! repeated.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use heatsrc::angles::{gap_report, resonant_pairs, DenominatorRule, Fraction, GapReport};
use heatsrc::eigensystem::EigenBasis;
use heatsrc::forward::{synthesize, FluxDataset};
use heatsrc::inversion::{alternate, error_report, shape_fit, ReconstructionResult, ShapeFitResult};
use heatsrc::io::{
    read_dataset, reconstruction_json, write_dataset, write_p_polar_csv, write_q_csv, POLAR_ANGULAR, POLAR_RADIAL,
};
use heatsrc::sources::{project_star, SpectralSource, StarSource};
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";
pub const LOCK: &str = ".heatsrc.lock";
pub const MANIFEST_VERSION: u32 = 1;

/// Output directory held for the duration of a run.
pub struct OutputDir {
    path: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn acquire(path: &Path) -> CliResult<Self> {
        fs::create_dir_all(path)?;
        match OpenOptions::new().write(true).create_new(true).open(path.join(LOCK)) {
            Ok(mut f) => writeln!(f, "{}", std::process::id())?,
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(CliError::Config(format!(
                    "{} is locked by another run (remove {LOCK} if that run is gone)",
                    path.display()
                )));
            }
            Err(e) => return Err(e.into()),
        }
        Ok(Self {
            path: path.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Registers `name` and returns its full path.
    fn file(&mut self, name: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        self.path.join(name)
    }

    fn create(&mut self, name: &str) -> CliResult<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.file(name))?))
    }

    fn write_json(&mut self, name: &str, value: &Value) -> CliResult<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Io(e.to_string()))?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    fn finish(mut self, command: &str, cfg: &ExperimentConfig, extra: Value) -> CliResult<PathBuf> {
        let mut artifacts = self.files.clone();
        artifacts.sort();
        let manifest = json!({
            "manifest_version": MANIFEST_VERSION,
            "command": command,
            "library_version": heatsrc::VERSION,
            "cli_version": env!("CARGO_PKG_VERSION"),
            "seed": cfg.seed,
            "config": cfg,
            "run": extra,
            "artifacts": artifacts,
        });
        self.write_json(MANIFEST, &manifest)?;
        Ok(self.path.clone())
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(self.path.join(LOCK));
    }
}

/// File-name tag of a noise level, e.g. `delta_0.01`.
pub fn tag(delta: f64) -> String {
    format!("delta_{delta}")
}

/// Warnings for observation angles whose differences resonate with the
/// angular orders present in `basis`.
pub fn resonance_warnings(angles: &[f64], basis: &EigenBasis) -> Vec<String> {
    let k_max = basis.max_order().max(1);
    resonant_pairs(angles, k_max)
        .into_iter()
        .map(|(i, j, r)| {
            let msg = format!(
                "angles {} and {} resonate: {}·(θ_{} − θ_{}) = {}π; modes of order {} are invisible at both",
                i + 1,
                j + 1,
                r.k,
                i + 1,
                j + 1,
                r.j,
                r.k
            );
            log::warn!("{msg}");
            msg
        })
        .collect()
}

/// Flux data for every configured noise level.
pub fn synthesize_all(cfg: &ExperimentConfig, search: &EigenBasis) -> CliResult<Vec<FluxDataset>> {
    let q = cfg
        .truth_q()?
        .ok_or_else(|| CliError::Config("synthesizing data needs `truth`".into()))?;
    let truth_basis = cfg.truth_basis(search)?;
    let p = match (cfg.truth_p(), cfg.truth_shape()) {
        (Some(p), _) => p.resized(truth_basis.len()),
        (None, Some(shape)) => project_star(&shape, &truth_basis),
        (None, None) => return Err(CliError::Config("`truth` needs `p` or `shape`".into())),
    };
    let grid = cfg.grid().map_err(CliError::compute)?;
    cfg.delta
        .iter()
        .map(|&delta| {
            synthesize(&p, &q, &cfg.angles, &grid, &truth_basis, delta, cfg.seed, cfg.noise_model)
                .map_err(CliError::compute)
        })
        .collect()
}

/// One reconstruction, as recorded in the manifest and the error table.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub delta: f64,
    /// `(name, value)` rows of the error table.
    pub errors: Vec<(&'static str, f64)>,
    pub converged: bool,
    pub note: Value,
}

fn write_spectral(
    out: &mut OutputDir,
    cfg: &ExperimentConfig,
    ds: &FluxDataset,
    basis: &EigenBasis,
    rec: &ReconstructionResult,
) -> CliResult<RunSummary> {
    let t = tag(ds.noise_level);
    let mut doc = reconstruction_json(rec, basis);
    let mut errors = Vec::new();
    if let (Some(p), Some(q)) = (cfg.truth_p(), cfg.truth_q()?) {
        let (ep, eq) = error_report(&rec.p, &rec.q, &rec.grid, &p, &q);
        errors = vec![("e_p", ep), ("e_q", eq)];
        doc["errors"] = json!({ "e_p": ep, "e_q": eq });
        doc["error_trace"] = json!(rec.error_trace(&p, &q));
    }
    out.write_json(&format!("reconstruction_{t}.json"), &doc)?;
    write_q_csv(&rec.grid, &rec.q, out.create(&format!("q_{t}.csv"))?).map_err(CliError::compute)?;
    write_p_polar_csv(&rec.p, basis, POLAR_RADIAL, POLAR_ANGULAR, out.create(&format!("p_polar_{t}.csv"))?)
        .map_err(CliError::compute)?;
    let tv_capped = rec.trace.iter().filter(|e| !e.tv_converged).count();
    if tv_capped > 0 {
        log::info!(
            "{t}: {tv_capped} of {} TV solves stopped at max_inner = {}",
            rec.trace.len(),
            cfg.tv.max_inner
        );
    }
    Ok(RunSummary {
        delta: ds.noise_level,
        errors,
        converged: rec.tv_monotone,
        note: json!({ "tv_solves_at_max_inner": tv_capped, "tv_monotone": rec.tv_monotone }),
    })
}

fn radius_error(fit: &StarSource, truth: &StarSource) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..StarSource::CHECK_POINTS {
        let theta = 2.0 * PI * i as f64 / StarSource::CHECK_POINTS as f64;
        num += (fit.radius(theta) - truth.radius(theta)).powi(2);
        den += truth.radius(theta).powi(2);
    }
    (num / den).sqrt()
}

fn write_shape(out: &mut OutputDir, cfg: &ExperimentConfig, ds: &FluxDataset, fit: &ShapeFitResult) -> CliResult<RunSummary> {
    let t = tag(ds.noise_level);
    let truth = cfg.truth_shape();
    let harmonics = fit.shape.harmonics().max(truth.as_ref().map_or(0, StarSource::harmonics));

    let mut w = out.create(&format!("radius_{t}.csv"))?;
    writeln!(w, "coefficient,fitted,truth")?;
    let row = |w: &mut BufWriter<File>, name: String, f: f64, t: Option<f64>| -> std::io::Result<()> {
        match t {
            Some(t) => writeln!(w, "{name},{f},{t}"),
            None => writeln!(w, "{name},{f},"),
        }
    };
    row(&mut w, "alpha0".into(), fit.shape.alpha0(), truth.as_ref().map(StarSource::alpha0))?;
    for k in 1..=harmonics {
        row(&mut w, format!("cos{k}"), fit.shape.cos_coeff(k), truth.as_ref().map(|s| s.cos_coeff(k)))?;
        row(&mut w, format!("sin{k}"), fit.shape.sin_coeff(k), truth.as_ref().map(|s| s.sin_coeff(k)))?;
    }
    w.flush()?;

    let mut w = out.create(&format!("boundary_{t}.csv"))?;
    writeln!(w, "theta,r_fit,r_true")?;
    for i in 0..=360 {
        let theta = 2.0 * PI * i as f64 / 360.0;
        let r_true = truth.as_ref().map_or(String::new(), |s| s.radius(theta).to_string());
        writeln!(w, "{theta},{},{r_true}", fit.shape.radius(theta))?;
    }
    w.flush()?;
    write_q_csv(&ds.grid, &fit.q, out.create(&format!("q_{t}.csv"))?).map_err(CliError::compute)?;

    let lm_converged = fit.lm.iter().all(|r| r.converged());
    let mut errors = Vec::new();
    let mut doc = json!({
        "shape": fit.shape.params(),
        "q": { "t": ds.grid.times(), "value": fit.q },
        "residual_norm": fit.residual_norm,
        "rounds": fit.rounds,
        "converged": fit.converged,
        "lm": fit.lm.iter().map(|r| json!({
            "iterations": r.iterations,
            "evaluations": r.evaluations,
            "initial_residual_norm": r.initial_residual_norm,
            "residual_norm": r.residual_norm,
            "termination": r.termination,
        })).collect::<Vec<_>>(),
    });
    if let Some(truth) = &truth {
        let e_r = radius_error(&fit.shape, truth);
        errors.push(("radius_rel_l2", e_r));
        doc["errors"] = json!({ "radius_rel_l2": e_r });
        if let Some(q) = cfg.truth_q()? {
            let (_, e_q) = error_report(
                &SpectralSource::new(vec![1.0]),
                &fit.q,
                &ds.grid,
                &SpectralSource::new(vec![1.0]),
                &q,
            );
            errors.push(("e_q", e_q));
            doc["errors"]["e_q"] = json!(e_q);
        }
    }
    out.write_json(&format!("shape_fit_{t}.json"), &doc)?;
    Ok(RunSummary {
        delta: ds.noise_level,
        errors,
        converged: fit.converged && lm_converged,
        note: json!({ "rounds": fit.rounds, "residual_norm": fit.residual_norm, "lm_converged": lm_converged }),
    })
}

fn invert_one(out: &mut OutputDir, cfg: &ExperimentConfig, ds: &FluxDataset, shape: bool) -> CliResult<RunSummary> {
    let basis = cfg.basis(ds.grid.dt())?;
    if shape {
        let init = cfg.initial_shape().map_err(CliError::compute)?;
        let fit = shape_fit(ds, &init, &cfg.q_mode()?, &basis, &cfg.shape_fit()).map_err(CliError::compute)?;
        write_shape(out, cfg, ds, &fit)
    } else {
        let rec = alternate(ds, &cfg.alternating(&basis), &basis).map_err(CliError::compute)?;
        write_spectral(out, cfg, ds, &basis, &rec)
    }
}

/// `rows × deltas` table; rows are the error names, columns the noise levels.
fn write_error_table(out: &mut OutputDir, runs: &[RunSummary]) -> CliResult<()> {
    let Some(first) = runs.first() else { return Ok(()) };
    if first.errors.is_empty() {
        return Ok(());
    }
    let mut w = out.create("error_table.csv")?;
    write!(w, "error")?;
    for r in runs {
        write!(w, ",{}", r.delta)?;
    }
    writeln!(w)?;
    for (i, (name, _)) in first.errors.iter().enumerate() {
        write!(w, "{name}")?;
        for r in runs {
            write!(w, ",{:e}", r.errors[i].1)?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn write_plot_script(out: &mut OutputDir, runs: &[RunSummary], shape: bool, with_truth: bool) -> CliResult<()> {
    let mut w = out.create("plot.gp")?;
    writeln!(w, "# gnuplot -persist plot.gp")?;
    writeln!(w, "set datafile separator ','")?;
    writeln!(w, "set key autotitle columnhead")?;
    for r in runs {
        let t = tag(r.delta);
        writeln!(w, "\nset title 'q, {t}'\nset xlabel 't'")?;
        writeln!(w, "plot 'q_{t}.csv' using 1:2 with steps title 'q reconstructed'")?;
        if shape {
            writeln!(w, "\nset title 'support boundary, {t}'\nset size ratio -1\nunset xlabel")?;
            write!(w, "plot 'boundary_{t}.csv' using ($2*cos($1)):($2*sin($1)) with lines title 'fit'")?;
            if with_truth {
                write!(w, ", '' using ($3*cos($1)):($3*sin($1)) with lines dashtype 2 title 'truth'")?;
            }
            writeln!(w, ", [0:2*pi] '+' using (cos($1)):(sin($1)) with lines lc 'black' notitle")?;
            writeln!(w, "set size noratio")?;
        } else {
            writeln!(w, "\nset title 'p, {t}'\nset view map\nset size ratio -1\nunset xlabel")?;
            writeln!(w, "splot 'p_polar_{t}.csv' using ($1*cos($2)):($1*sin($2)):3 with points pt 5 ps 0.5 palette notitle")?;
            writeln!(w, "set size noratio")?;
        }
    }
    w.flush()?;
    Ok(())
}

fn summaries_json(runs: &[RunSummary]) -> Value {
    Value::Array(
        runs.iter()
            .map(|r| {
                let errors: BTreeMap<&str, f64> = r.errors.iter().copied().collect();
                json!({ "delta": r.delta, "errors": errors, "converged": r.converged, "details": r.note })
            })
            .collect(),
    )
}

fn non_converged(runs: &[RunSummary]) -> CliResult<()> {
    let bad: Vec<String> = runs.iter().filter(|r| !r.converged).map(|r| tag(r.delta)).collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(CliError::Solver(format!("no convergence for {}; artifacts were written", bad.join(", "))))
    }
}

/// What a finished run produced.
#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub runs: Vec<RunSummary>,
}

/// Synthesizes data and reconstructs for every noise level.
pub fn run_experiment(cfg: &ExperimentConfig) -> CliResult<RunOutcome> {
    let mut out = OutputDir::acquire(&cfg.output_dir())?;
    let search = cfg.basis(cfg.dt)?;
    let warnings = resonance_warnings(&cfg.angles, &search);
    let shape = cfg.fits_shape();
    let mut runs = Vec::new();
    for ds in synthesize_all(cfg, &search)? {
        let name = format!("dataset_{}.csv", tag(ds.noise_level));
        write_dataset(&ds, &out.file(&name)).map_err(CliError::compute)?;
        out.file(&format!("dataset_{}.json", tag(ds.noise_level)));
        runs.push(invert_one(&mut out, cfg, &ds, shape)?);
    }
    write_error_table(&mut out, &runs)?;
    write_plot_script(&mut out, &runs, shape, cfg.truth.is_some())?;
    let dir = out.finish(
        "experiment",
        cfg,
        json!({ "n_modes": search.len(), "warnings": warnings, "results": summaries_json(&runs) }),
    )?;
    non_converged(&runs)?;
    Ok(RunOutcome { dir, runs })
}

/// Writes one dataset (CSV plus sidecar) per noise level.
pub fn cmd_synth(cfg: &ExperimentConfig) -> CliResult<PathBuf> {
    let mut out = OutputDir::acquire(&cfg.output_dir())?;
    let search = cfg.basis(cfg.dt)?;
    let warnings = resonance_warnings(&cfg.angles, &search);
    let mut names = Vec::new();
    for ds in synthesize_all(cfg, &search)? {
        let name = format!("dataset_{}.csv", tag(ds.noise_level));
        write_dataset(&ds, &out.file(&name)).map_err(CliError::compute)?;
        out.file(&format!("dataset_{}.json", tag(ds.noise_level)));
        names.push(name);
    }
    out.finish("synth", cfg, json!({ "warnings": warnings, "datasets": names }))
}

/// Reconstructs from an existing dataset. The grid and angles come from the
/// dataset; everything else from `cfg`.
pub fn cmd_invert(cfg: &ExperimentConfig, data: &Path, shape: bool) -> CliResult<RunOutcome> {
    let ds = read_dataset(data).map_err(CliError::data)?;
    let mut out = OutputDir::acquire(&cfg.output_dir())?;
    let basis = cfg.basis(ds.grid.dt())?;
    let warnings = resonance_warnings(&ds.angles, &basis);
    let run = invert_one(&mut out, cfg, &ds, shape)?;
    let runs = vec![run];
    write_error_table(&mut out, &runs)?;
    write_plot_script(&mut out, &runs, shape, cfg.truth.is_some())?;
    let command = if shape { "shape-fit" } else { "invert" };
    let dir = out.finish(
        command,
        cfg,
        json!({
            "data": data,
            "n_modes": basis.len(),
            "warnings": warnings,
            "results": summaries_json(&runs),
        }),
    )?;
    non_converged(&runs)?;
    Ok(RunOutcome { dir, runs })
}

/// Gap table as CSV, to `out` or standard output.
pub fn cmd_gaps(b_max: u64, rule: DenominatorRule, query: Fraction, out: Option<&Path>) -> CliResult<GapReport> {
    let rep = gap_report(b_max, rule, query).map_err(|e| CliError::Config(e.to_string()))?;
    match out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            rep.write_csv(&mut w).map_err(CliError::compute)?;
            w.flush()?;
        }
        None => rep.write_csv(std::io::stdout().lock()).map_err(CliError::compute)?,
    }
    Ok(rep)
}

/// Parses `a/b`.
pub fn parse_fraction(s: &str) -> Result<Fraction, String> {
    let (a, b) = s.split_once('/').ok_or_else(|| format!("expected a/b, got `{s}`"))?;
    let num: u64 = a.trim().parse().map_err(|e| format!("numerator of `{s}`: {e}"))?;
    let den: u64 = b.trim().parse().map_err(|e| format!("denominator of `{s}`: {e}"))?;
    if den == 0 {
        return Err(format!("zero denominator in `{s}`"));
    }
    Ok(Fraction::new(num, den))
}

/// Repeats the run recorded in a manifest (file or its directory) into
/// `out`.
pub fn cmd_rerun(manifest: &Path, out: &Path) -> CliResult<()> {
    let path = if manifest.is_dir() { manifest.join(MANIFEST) } else { manifest.to_path_buf() };
    let text = fs::read_to_string(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let doc: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column())))?;
    let mut cfg = ExperimentConfig::load(&path, None)?;
    cfg.output = Some(out.to_path_buf());
    match doc["command"].as_str() {
        Some("experiment") => run_experiment(&cfg).map(|_| ()),
        Some("synth") => cmd_synth(&cfg).map(|_| ()),
        Some(cmd @ ("invert" | "shape-fit")) => {
            let data = doc["run"]["data"]
                .as_str()
                .ok_or_else(|| CliError::Config(format!("{}: manifest has no `run.data`", path.display())))?;
            cmd_invert(&cfg, Path::new(data), cmd == "shape-fit").map(|_| ())
        }
        other => Err(CliError::Config(format!("{}: unknown command {other:?}", path.display()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fractions_parse() {
        assert_eq!(parse_fraction("1/4").unwrap(), Fraction::new(1, 4));
        assert_eq!(parse_fraction("2/8").unwrap(), Fraction::new(1, 4));
        assert!(parse_fraction("1/0").is_err());
        assert!(parse_fraction("0.25").is_err());
    }

    #[test]
    fn tags_are_shortest_form() {
        assert_eq!(tag(0.01), "delta_0.01");
        assert_eq!(tag(0.0), "delta_0");
    }

    #[test]
    fn lock_excludes_a_second_run() {
        let dir = tempfile::tempdir().unwrap();
        let first = OutputDir::acquire(dir.path()).unwrap();
        let err = OutputDir::acquire(dir.path()).err().unwrap();
        assert_eq!(err.status(), 2);
        drop(first);
        assert!(OutputDir::acquire(dir.path()).is_ok());
    }
}
