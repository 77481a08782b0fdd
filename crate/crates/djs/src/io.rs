//! File formats.
//!
//! * measures: CSV rows `location,weight` or JSON `{"atoms": [[loc, w], ...]}`;
//! * densities: CSV rows `lambda,density`;
//! * eigenvalues: CSV with a single `eigenvalue` column;
//! * piecewise-linear activations: JSON `{"knots": [[x, y], ...]}`;
//! * everything else: JSON via serde.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! file reads back bit-exactly.

use std::fs;
use std::path::Path;

use djs_core::{Activation, DensityGrid, SpectralMeasure};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        context: "serializing".into(),
        source,
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(to_json(value)? + "\n"))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|source| Error::Json {
        context: path.display().to_string(),
        source,
    })
}

fn csv_text(header: &str, rows: impl Iterator<Item = Vec<f64>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut put = |cells: Vec<String>| w.write_record(cells).expect("writing to memory");
    put(header.split(',').map(str::to_string).collect());
    rows.for_each(|row| put(row.iter().map(f64::to_string).collect()));
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("ascii output")
}

/// Rows of a numeric CSV with the given header.
fn parse_csv(path: &Path, text: &str, header: &str) -> Result<Vec<Vec<f64>>> {
    let parse_err = |line: u64, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line: line as usize,
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let expected: Vec<&str> = header.split(',').collect();
    match reader.headers() {
        Ok(h) if h.iter().eq(expected.iter().copied()) => {}
        Ok(_) => return Err(parse_err(1, format!("expected header '{header}'"))),
        Err(e) => return Err(parse_err(1, e.to_string())),
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != expected.len() {
            return Err(parse_err(
                line,
                format!("expected {} columns, found {}", expected.len(), record.len()),
            ));
        }
        let row = record
            .iter()
            .map(|c| c.parse::<f64>().map_err(|e| parse_err(line, format!("'{c}': {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub const MEASURE_HEADER: &str = "location,weight";
pub const DENSITY_HEADER: &str = "lambda,density";
pub const EIGENVALUE_HEADER: &str = "eigenvalue";

pub fn measure_csv(m: &SpectralMeasure) -> String {
    csv_text(MEASURE_HEADER, m.atoms().iter().map(|&(x, w)| vec![x, w]))
}

pub fn write_measure_csv(path: &Path, m: &SpectralMeasure) -> Result<()> {
    write_text(path, &measure_csv(m))
}

/// Reads a measure CSV. Weights are used as written: an already normalized
/// measure reads back unchanged.
pub fn read_measure_csv(path: &Path) -> Result<SpectralMeasure> {
    let rows = parse_csv(path, &read_text(path)?, MEASURE_HEADER)?;
    Ok(SpectralMeasure::from_atoms(rows.into_iter().map(|r| (r[0], r[1])))?)
}

pub fn write_measure_json(path: &Path, m: &SpectralMeasure) -> Result<()> {
    write_json(path, m)
}

pub fn read_measure_json(path: &Path) -> Result<SpectralMeasure> {
    read_json(path)
}

pub fn density_csv(grid: &DensityGrid) -> String {
    csv_text(
        DENSITY_HEADER,
        grid.lambdas.iter().zip(&grid.densities).map(|(&x, &d)| vec![x, d]),
    )
}

pub fn write_density_csv(path: &Path, grid: &DensityGrid) -> Result<()> {
    write_text(path, &density_csv(grid))
}

/// Reads a density CSV; the origin atom is not part of the format.
pub fn read_density_csv(path: &Path) -> Result<DensityGrid> {
    let rows = parse_csv(path, &read_text(path)?, DENSITY_HEADER)?;
    let (lambdas, densities) = rows.into_iter().map(|r| (r[0], r[1])).unzip();
    Ok(DensityGrid::new(lambdas, densities, 0.0)?)
}

pub fn write_eigenvalues_csv(path: &Path, evals: &[f64]) -> Result<()> {
    write_text(path, &csv_text(EIGENVALUE_HEADER, evals.iter().map(|&v| vec![v])))
}

pub fn read_eigenvalues_csv(path: &Path) -> Result<Vec<f64>> {
    Ok(parse_csv(path, &read_text(path)?, EIGENVALUE_HEADER)?
        .into_iter()
        .map(|r| r[0])
        .collect())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KnotsFile {
    knots: Vec<(f64, f64)>,
}

/// A piecewise-linear activation from `{"knots": [[x, y], ...]}`.
pub fn read_activation(path: &Path) -> Result<Activation> {
    let file: KnotsFile = read_json(path)?;
    Ok(Activation::piecewise_linear(file.knots)?)
}
