//! File formats.
//!
//! A flux dataset is a CSV with header `t,g_1,...,g_L` (one row per sample
//! time) plus a JSON sidecar with the same stem holding the angles, grid and
//! noise metadata. Floats are written in shortest round-trip form, so a
//! write/read cycle is lossless.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::eigensystem::{EigenBasis, Phase};
use crate::error::{Error, Result};
use crate::forward::{FluxDataset, NoiseModel, TimeGrid};
use crate::inversion::ReconstructionResult;
use crate::sources::SpectralSource;

/// Sidecar contents of a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub angles: Vec<f64>,
    pub grid: TimeGrid,
    #[serde(default)]
    pub noise_level: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise_model: NoiseModel,
}

impl DatasetMeta {
    pub fn of(ds: &FluxDataset) -> Self {
        Self {
            angles: ds.angles.clone(),
            grid: ds.grid,
            noise_level: ds.noise_level,
            seed: ds.seed,
            noise_model: ds.noise_model,
        }
    }
}

/// `data.csv` → `data.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn write_dataset_csv<W: Write>(ds: &FluxDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=ds.angles.len()).map(|l| format!("g_{l}")));
    w.write_record(&header).map_err(csv_error)?;
    for i in 0..ds.grid.len() {
        let mut row = vec![ds.grid.time(i + 1).to_string()];
        row.extend(ds.values.iter().map(|series| series[i].to_string()));
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `path` and its sidecar.
pub fn write_dataset(ds: &FluxDataset, path: &Path) -> Result<()> {
    write_dataset_csv(ds, BufWriter::new(File::create(path)?))?;
    write_json(&DatasetMeta::of(ds), &sidecar_path(path))
}

/// Parses a dataset CSV against known metadata.
pub fn read_dataset_csv<R: Read>(input: R, meta: &DatasetMeta, name: &str) -> Result<FluxDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(input);
    let header = rdr.headers().map_err(csv_error)?.clone();
    let expected: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=meta.angles.len()).map(|l| format!("g_{l}")))
        .collect();
    for (c, want) in expected.iter().enumerate() {
        match header.get(c).map(str::trim) {
            Some(got) if got == want => {}
            Some(got) => {
                return Err(format_error(
                    format!("{name}: header, column {}", c + 1),
                    format!("expected `{want}`, found `{got}`"),
                ))
            }
            None => {
                return Err(format_error(
                    format!("{name}: header, column {}", c + 1),
                    format!("missing column `{want}`"),
                ))
            }
        }
    }
    if header.len() > expected.len() {
        return Err(format_error(
            format!("{name}: header, column {}", expected.len() + 1),
            format!("unexpected column `{}`", &header[expected.len()]),
        ));
    }

    let nt = meta.grid.len();
    let mut values = vec![Vec::with_capacity(nt); meta.angles.len()];
    let mut rows = 0;
    for (r, record) in rdr.records().enumerate() {
        let line = r + 2;
        let record = record.map_err(csv_error)?;
        if rows == nt {
            return Err(format_error(
                format!("{name}: row {line}"),
                format!("more rows than the {nt} grid samples"),
            ));
        }
        if record.len() != expected.len() {
            let col = record.len().min(expected.len());
            return Err(format_error(
                format!("{name}: row {line}, column `{}`", expected[col]),
                format!("expected {} fields, found {}", expected.len(), record.len()),
            ));
        }
        let parse = |c: usize| -> Result<f64> {
            let field = record[c].trim();
            field.parse::<f64>().map_err(|_| {
                format_error(
                    format!("{name}: row {line}, column `{}`", expected[c]),
                    format!("`{field}` is not a number"),
                )
            })
        };
        let t = parse(0)?;
        let want = meta.grid.time(rows + 1);
        if (t - want).abs() > 1e-9 * want.max(1.0) {
            return Err(format_error(
                format!("{name}: row {line}, column `t`"),
                format!("time {t} does not match grid time {want}"),
            ));
        }
        for (l, series) in values.iter_mut().enumerate() {
            series.push(parse(l + 1)?);
        }
        rows += 1;
    }
    if rows != nt {
        return Err(format_error(
            format!("{name}: row {}", rows + 2),
            format!("expected {nt} data rows, found {rows}"),
        ));
    }
    let mut ds = FluxDataset::new(meta.angles.clone(), meta.grid, values, meta.noise_level, meta.seed)?;
    ds.noise_model = meta.noise_model;
    Ok(ds)
}

/// Reads a dataset and its sidecar.
pub fn read_dataset(path: &Path) -> Result<FluxDataset> {
    let meta: DatasetMeta = read_json(&sidecar_path(path))?;
    read_dataset_with_meta(path, &meta)
}

pub fn read_dataset_with_meta(path: &Path, meta: &DatasetMeta) -> Result<FluxDataset> {
    read_dataset_csv(File::open(path)?, meta, &path.display().to_string())
}

fn csv_error(e: csv::Error) -> Error {
    let location = e
        .position()
        .map(|p| format!("line {}", p.line()))
        .unwrap_or_else(|| "csv".into());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => format_error(location, format!("{other:?}")),
    }
}

fn format_error(location: String, message: String) -> Error {
    Error::Format { location, message }
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| {
        format_error(
            format!("{}: line {}, column {}", path.display(), e.line(), e.column()),
            e.to_string(),
        )
    })
}

/// Spectral coefficients together with the basis cutoff they refer to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralFile {
    pub lambda_max: f64,
    pub coeffs: Vec<f64>,
}

impl SpectralFile {
    pub fn new(p: &SpectralSource, basis: &EigenBasis) -> Self {
        Self {
            lambda_max: basis.lambda_max(),
            coeffs: p.coeffs.clone(),
        }
    }

    pub fn source(&self) -> SpectralSource {
        SpectralSource::new(self.coeffs.clone())
    }
}

/// `t,q` with `q` the value on the cell ending at `t`.
pub fn write_q_csv<W: Write>(grid: &TimeGrid, q: &[f64], mut out: W) -> Result<()> {
    writeln!(out, "t,q")?;
    for (i, v) in q.iter().enumerate() {
        writeln!(out, "{},{}", grid.time(i + 1), v)?;
    }
    Ok(())
}

/// Radial samples of `p`: the polar grid used for plots.
pub const POLAR_RADIAL: usize = 64;
/// Angular samples of `p`: the polar grid used for plots.
pub const POLAR_ANGULAR: usize = 128;

/// `r,theta,p` on `r_i = i/(nr-1)`, `θ_j = 2πj/nt`.
pub fn write_p_polar_csv<W: Write>(p: &SpectralSource, basis: &EigenBasis, nr: usize, nt: usize, mut out: W) -> Result<()> {
    if nr < 2 || nt < 1 {
        return Err(Error::Invalid(format!("polar grid {nr}x{nt} too small")));
    }
    writeln!(out, "r,theta,p")?;
    for i in 0..nr {
        let r = i as f64 / (nr - 1) as f64;
        for j in 0..nt {
            let theta = 2.0 * PI * j as f64 / nt as f64;
            writeln!(out, "{r},{theta},{}", p.eval(basis, r, theta)?)?;
        }
    }
    Ok(())
}

/// Structured summary of a reconstruction: labelled coefficients, `q`
/// samples and the iteration trace.
pub fn reconstruction_json(result: &ReconstructionResult, basis: &EigenBasis) -> serde_json::Value {
    let coeffs: Vec<_> = result
        .p
        .coeffs
        .iter()
        .zip(basis.pairs())
        .map(|(c, pair)| {
            json!({
                "n": pair.index,
                "lambda": pair.lambda,
                "m": pair.order,
                "k": pair.root,
                "phase": match pair.phase { Phase::Cos => "cos", Phase::Sin => "sin" },
                "value": c,
            })
        })
        .collect();
    let times: Vec<f64> = result.grid.times();
    json!({
        "p": coeffs,
        "q": { "t": times, "value": result.q },
        "grid": result.grid,
        "trace": result.trace,
        "tv_monotone": result.tv_monotone,
    })
}
