//! CSV row types and the reader/writer used for every export.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub use nibm_core::ensemble::{DensityRow, PathRow, SamplerStats};
pub use nibm_core::spectral::{SheetRow, SignRow};

/// Writes a header row followed by one row per record.
pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: DeserializeOwned>(path: &Path) -> Result<Vec<R>, CliError> {
    let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    csv::Reader::from_path(path).map_err(io)?.deserialize().map(|r| r.map_err(io)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityPoint {
    pub component: usize,
    pub x: f64,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportRow {
    pub component: usize,
    pub k: usize,
    pub l: usize,
    pub alpha: f64,
    pub beta: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElRow {
    pub component: usize,
    pub constant: Option<f64>,
    pub on_support: f64,
    pub scaled_on_support: f64,
    pub derivative: f64,
    pub off_support_min: f64,
    pub gap_midpoint_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentRow {
    pub component: usize,
    pub side: String,
    pub exponent: f64,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub check: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourRow {
    pub sheet: usize,
    pub cut: usize,
    pub re: f64,
    pub im: f64,
    pub expected_im: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LensRow {
    pub step: usize,
    pub alpha: f64,
    pub beta_next: f64,
    pub alpha_in_positive: bool,
    pub beta_in_negative: bool,
    pub unbounded_positive: usize,
    pub unbounded_negative: usize,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L1Row {
    pub n: usize,
    pub l1: f64,
    pub condition: f64,
}
