//! Loading datasets for the CLI and remembering where each sample came from.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use otshift_core::{subsample_indices, LabeledDataset};

use crate::csv_format::read_csv;
use crate::error::{CliError, CliResult};
use crate::idx::{companion_labels_path, read_idx};
use crate::report::DatasetSummary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum InputFormat {
    Idx,
    Csv,
}

impl InputFormat {
    fn name(self) -> &'static str {
        match self {
            InputFormat::Idx => "idx",
            InputFormat::Csv => "csv",
        }
    }
}

/// A dataset plus, per row, its record number and byte offset in the file.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub dataset: LabeledDataset,
    pub records: Vec<usize>,
    pub offsets: Vec<u64>,
    pub path: PathBuf,
    pub labels_path: Option<PathBuf>,
    pub format: InputFormat,
    pub records_in_file: usize,
    pub label_mapping: BTreeMap<String, usize>,
}

pub fn load(format: InputFormat, path: &Path, labels_path: Option<&Path>) -> CliResult<LoadedDataset> {
    match format {
        InputFormat::Csv => {
            let data = read_csv(path)?;
            let n = data.dataset.len();
            Ok(LoadedDataset {
                records: (0..n).collect(),
                offsets: data.offsets,
                path: path.to_path_buf(),
                labels_path: None,
                format,
                records_in_file: n,
                label_mapping: data.label_mapping.iter().map(|(k, &v)| (k.to_string(), v)).collect(),
                dataset: data.dataset,
            })
        }
        InputFormat::Idx => {
            let labels_path = match labels_path {
                Some(p) => p.to_path_buf(),
                None => companion_labels_path(path).ok_or_else(|| {
                    CliError::Invalid(format!("{}: no labels file given and none implied by the name", path.display()))
                })?,
            };
            let data = read_idx(path, &labels_path)?;
            let dataset = data.to_dataset()?;
            let n = dataset.len();
            let label_mapping = (0..dataset.num_classes()).map(|k| (k.to_string(), k)).collect();
            Ok(LoadedDataset {
                offsets: (0..n).map(|i| data.image_offset(i)).collect(),
                records: (0..n).collect(),
                path: path.to_path_buf(),
                labels_path: Some(labels_path),
                format,
                records_in_file: n,
                label_mapping,
                dataset,
            })
        }
    }
}

impl LoadedDataset {
    /// Keeps at most `per_class` rows per class, chosen by `seed`.
    pub fn subsample(self, per_class: usize, seed: u64) -> CliResult<Self> {
        let keep = subsample_indices(&self.dataset, per_class, seed)?;
        let features = self.dataset.features().select_rows(&keep);
        let labels = keep.iter().map(|&i| self.dataset.labels()[i]).collect();
        let mut dataset = otshift_core::make_dataset(features, labels, None)?;
        if let Some(names) = self.dataset.class_names() {
            dataset = dataset.with_class_names(names.clone());
        }
        Ok(Self {
            records: keep.iter().map(|&i| self.records[i]).collect(),
            offsets: keep.iter().map(|&i| self.offsets[i]).collect(),
            dataset,
            ..self
        })
    }

    /// Display label of compact class `k` as written in the input.
    pub fn class_label(&self, k: usize) -> String {
        self.dataset
            .class_names()
            .and_then(|names| names.get(&k).cloned())
            .unwrap_or_else(|| k.to_string())
    }

    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            path: self.path.display().to_string(),
            labels_path: self.labels_path.as_ref().map(|p| p.display().to_string()),
            format: self.format.name().to_string(),
            records_in_file: self.records_in_file,
            n: self.dataset.len(),
            d: self.dataset.dim(),
            k: self.dataset.num_classes(),
            class_sizes: self.dataset.class_sizes(),
            label_mapping: self.label_mapping.clone(),
        }
    }
}
