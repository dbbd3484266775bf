//! JSON shift reports. Floats are rounded to 12 significant digits before
//! serialization so reports are byte-stable across runs.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    /// OT value over the combined feature + label cost.
    pub otdd_squared: f64,
    pub otdd: f64,
    pub class_mass_matrix: Vec<Vec<f64>>,
    pub label_distances: Vec<Vec<f64>>,
    pub mismatches: Vec<MismatchEntry>,
    pub pairs: PairsSection,
    pub config: ConfigEcho,
    pub datasets: DatasetsSection,
    pub diagonal_fractions: Vec<f64>,
    pub vocabulary_mismatch: bool,
    pub transport: TransportSummary,
    /// Nonzero coupling cells, only with `--dump-coupling`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<Vec<CouplingEntry>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchEntry {
    pub source_class: usize,
    pub target_class: usize,
    pub source_label: String,
    pub target_label: String,
    pub mass: f64,
    pub mass_fraction: f64,
    pub diagonal_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairsSection {
    /// Ranked over the whole coupling.
    pub global: PairList,
    /// One entry per mismatch, in mismatch order.
    pub mismatches: Vec<MismatchPairsEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchPairsEntry {
    pub source_class: usize,
    pub target_class: usize,
    /// Dedicated OT between the two classes on the feature cost.
    pub fresh: PairList,
    /// The global coupling's block for the two classes.
    pub sub_block: PairList,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairList {
    pub closest: Vec<PairEntry>,
    pub farthest: Vec<PairEntry>,
    pub mass_floor: f64,
    pub candidates: usize,
    pub empty: bool,
}

/// Indices into the analysed datasets, plus the record number and byte
/// offset of each sample in its input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub source_index: usize,
    pub target_index: usize,
    pub source_record: usize,
    pub target_record: usize,
    pub source_offset: u64,
    pub target_offset: u64,
    pub ground_cost: f64,
    pub coupling_mass: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub solver: String,
    /// Absolute Sinkhorn epsilon actually used.
    pub epsilon: Option<f64>,
    /// Set when epsilon was given relative to the mean cost.
    pub epsilon_scale: Option<f64>,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub exact_cell_cap: usize,
    pub regularizer: String,
    pub mismatch_fraction: f64,
    pub pairs: usize,
    pub mass_floor: Option<f64>,
    pub subsample: Option<usize>,
    pub seed: u64,
    pub feature_metric: String,
    pub label_model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetsSection {
    pub source: DatasetSummary,
    pub target: DatasetSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub path: String,
    pub labels_path: Option<String>,
    pub format: String,
    pub records_in_file: usize,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub class_sizes: Vec<usize>,
    /// Label as written in the file -> compact class index.
    pub label_mapping: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportSummary {
    pub method: String,
    pub epsilon: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub row_marginal_error: f64,
    pub col_marginal_error: f64,
    pub support_size: usize,
    pub cost_metric: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingEntry {
    pub source_index: usize,
    pub target_index: usize,
    pub mass: f64,
    pub cost: f64,
}

/// Output of the `pairs` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairsReport {
    pub class_a: usize,
    pub class_b: usize,
    pub transport_cost: f64,
    pub converged: bool,
    pub pairs: PairList,
    pub config: ConfigEcho,
    pub datasets: DatasetsSection,
}

/// Rounds to 12 significant digits.
pub fn round_significant(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

fn round_floats(value: &mut Value) {
    match value {
        Value::Number(n) if n.is_f64() => {
            let x = round_significant(n.as_f64().expect("f64 number"));
            *value = serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null);
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Pretty JSON with floats at 12 significant digits and a trailing newline.
pub fn to_json<T: Serialize>(report: &T) -> CliResult<Vec<u8>> {
    let mut value = serde_json::to_value(report).map_err(|e| CliError::Invalid(format!("report serialization: {e}")))?;
    round_floats(&mut value);
    let mut out = serde_json::to_vec_pretty(&value).map_err(|e| CliError::Invalid(format!("report serialization: {e}")))?;
    out.push(b'\n');
    Ok(out)
}

/// The report as it will read back: floats rounded to 12 significant digits.
pub fn normalized<T: Serialize + for<'de> Deserialize<'de>>(report: &T) -> CliResult<T> {
    let mut value = serde_json::to_value(report).map_err(|e| CliError::Invalid(format!("report serialization: {e}")))?;
    round_floats(&mut value);
    serde_json::from_value(value).map_err(|e| CliError::Invalid(format!("report serialization: {e}")))
}

/// Writes through a temporary file in the destination directory, then
/// renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn write_report<T: Serialize>(report: &T, path: &Path) -> CliResult<()> {
    write_atomic(path, &to_json(report)?)
}

pub fn read_report<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::format(path, format!("not a valid report: {e}")))
}
