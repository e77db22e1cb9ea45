//! Plain-text outputs: CSV rows with header lines and JSON documents.

use crate::Result;
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;

pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// CSV with only a header line, for empty row sets (serde writes headers
/// lazily).
pub fn write_csv_with_header<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    if rows.is_empty() {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(header)?;
        w.flush()?;
        return Ok(());
    }
    write_csv(path, rows)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct BerryRow {
    pub k_y: f64,
    pub j: usize,
    pub theta: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BandRow {
    pub k_x: f64,
    pub k_y: f64,
    pub j: usize,
    pub e: f64,
}

/// Exact or asymptotic spectral point; `m`, `j` empty when unlabeled.
#[derive(Clone, Debug, Serialize)]
pub struct SpectrumRow {
    pub k_y: f64,
    pub e: f64,
    pub defect: Option<f64>,
    pub m: Option<i64>,
    pub j: Option<usize>,
    pub side: Option<&'static str>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiscreteRow {
    pub k_y: f64,
    pub eigenvalue: f64,
    pub spurious_flag: bool,
    pub side: &'static str,
}

#[derive(Clone, Debug, Serialize)]
pub struct PlainEdgeRow {
    pub k_y: f64,
    pub eigenvalue: f64,
    pub in_gap_flag: bool,
    pub branch_id: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrackRow {
    pub branch_id: usize,
    pub k_y: f64,
    pub e: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CurrentRow {
    pub gap: usize,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "J")]
    pub j: f64,
    pub c_estimate: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub model: Option<crate::model::ModelConfig>,
    pub model_label: String,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub outputs: Vec<String>,
    pub timings_s: BTreeMap<String, f64>,
}
