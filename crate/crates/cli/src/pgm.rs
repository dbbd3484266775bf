//! Plain-text PGM heatmaps of class mass matrices.

use std::fmt::Write;
use std::path::Path;

use otshift_core::DenseMatrix;

use crate::error::{CliError, CliResult};
use crate::report::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum HeatmapScale {
    Linear,
    Log,
}

/// Gray level of `value` against `max`; 0 everywhere when `max` is 0.
pub fn pixel(value: f64, max: f64, scale: HeatmapScale) -> u8 {
    if max <= 0.0 || value <= 0.0 {
        return 0;
    }
    let t = (value / max).min(1.0);
    let level = match scale {
        HeatmapScale::Linear => 255.0 * t,
        HeatmapScale::Log => 255.0 * t.ln_1p() / std::f64::consts::LN_2,
    };
    level.round().clamp(0.0, 255.0) as u8
}

/// `P2` image with one pixel per cell: width = target classes, row `u` from
/// the top = source class `u`.
pub fn render_pgm(values: &DenseMatrix, scale: HeatmapScale) -> CliResult<String> {
    if values.rows() == 0 || values.cols() == 0 {
        return Err(CliError::Invalid("heatmap needs a nonempty matrix".into()));
    }
    let max = values.as_slice().iter().copied().fold(0.0f64, f64::max);
    let mut out = format!("P2\n{} {}\n255\n", values.cols(), values.rows());
    for row in values.iter_rows() {
        let line: Vec<String> = row.iter().map(|&v| pixel(v, max, scale).to_string()).collect();
        writeln!(out, "{}", line.join(" ")).expect("writing to a String");
    }
    Ok(out)
}

pub fn write_heatmap_pgm(values: &DenseMatrix, path: &Path, scale: HeatmapScale) -> CliResult<()> {
    write_atomic(path, render_pgm(values, scale)?.as_bytes())
}
