//! Data files: one row per time step, one column per dimension, `NaN` for
//! missing entries. Structured outputs are JSON.

use std::fs;
use std::path::Path;

use femm_varx::driver::FitResult;
use femm_varx::synth::SyntheticData;
use femm_varx::{FemmConfig, LocalModel, ModelSet, Series};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Reads a `T x dim` table into a `dim x T` series.
pub fn read_series(path: &Path) -> Result<Series, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::io(path, e))?;
        let row = rec
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::parse(format!("{}: row {}: {e}", path.display(), i + 1)))?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(CliError::parse(format!("{}: row {} has {} columns, expected {}", path.display(), i + 1, row.len(), first.len())));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::parse(format!("{}: empty table", path.display())));
    }
    let values = DMatrix::from_fn(rows[0].len(), rows.len(), |d, t| rows[t][d]);
    if values.iter().any(|v| v.is_infinite()) {
        return Err(CliError::parse(format!("{}: infinite entries", path.display())));
    }
    Ok(Series::from_nan(values))
}

/// Writes a `dim x T` buffer as a `T x dim` table.
pub fn write_matrix(path: &Path, values: &DMatrix<f64>) -> Result<(), CliError> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| CliError::io(path, e))?;
    for col in values.column_iter() {
        writer
            .write_record(col.iter().map(|v| if v.is_nan() { "NaN".to_string() } else { v.to_string() }))
            .map_err(|e| CliError::io(path, e))?;
    }
    writer.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_series(path: &Path, series: &Series) -> Result<(), CliError> {
    write_matrix(path, &series.values_with_nan())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::parse(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// A local model in row-major form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub offset: Vec<f64>,
    pub interactions: Vec<Vec<Vec<f64>>>,
    pub controls: Vec<Vec<Vec<f64>>>,
}

impl From<&LocalModel> for ModelRecord {
    fn from(m: &LocalModel) -> Self {
        Self {
            offset: m.offset.iter().copied().collect(),
            interactions: m.interactions.iter().map(rows).collect(),
            controls: m.controls.iter().map(rows).collect(),
        }
    }
}

fn models(set: &ModelSet) -> Vec<ModelRecord> {
    set.models().iter().map(ModelRecord::from).collect()
}

/// Ground truth of a generated data set.
#[derive(Debug, Serialize)]
pub struct TruthBundle<'a> {
    pub generator: &'a femm_varx::synth::GeneratorSpec,
    pub models: Vec<ModelRecord>,
    /// One-based regime of every step.
    pub regimes: Vec<usize>,
    /// Initial window, one row per step.
    pub x_init: Vec<Vec<f64>>,
}

impl<'a> TruthBundle<'a> {
    pub fn new(generator: &'a femm_varx::synth::GeneratorSpec, data: &SyntheticData) -> Self {
        Self {
            generator,
            models: models(&data.truth.models),
            regimes: data.gamma.hard_labels().iter().map(|l| l + 1).collect(),
            x_init: data.truth.x_init.column_iter().map(|c| c.iter().copied().collect()).collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct FitBundle<'a> {
    pub config: &'a FemmConfig,
    pub objective: f64,
    pub objective_trace: &'a [f64],
    pub sweeps: usize,
    pub restart_index: usize,
    pub converged: bool,
    pub warnings: &'a [String],
    pub models: Vec<ModelRecord>,
}

impl<'a> FitBundle<'a> {
    pub fn new(config: &'a FemmConfig, fit: &'a FitResult) -> Self {
        Self {
            config,
            objective: fit.objective(),
            objective_trace: &fit.objective_trace,
            sweeps: fit.sweeps,
            restart_index: fit.restart_index,
            converged: fit.converged,
            warnings: &fit.warnings,
            models: models(&fit.models),
        }
    }
}
