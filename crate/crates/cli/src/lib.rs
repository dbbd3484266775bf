//! File formats, reports and the command-line interface around
//! [`otshift_core`].

pub mod cli;
pub mod csv_format;
pub mod error;
pub mod idx;
pub mod input;
pub mod pgm;
pub mod report;

pub use cli::{build_report, run};
pub use csv_format::{parse_csv, read_csv, render_csv, write_csv, CsvData};
pub use error::{CliError, CliResult};
pub use idx::{decode_idx, encode_idx, parse_idx, read_idx, IdxData};
pub use pgm::{render_pgm, write_heatmap_pgm, HeatmapScale};
pub use report::{read_report, write_report, PairsReport, ShiftReport};
