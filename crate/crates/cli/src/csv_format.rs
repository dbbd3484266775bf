//! CSV datasets: header `feature_0,…,feature_{d-1},label`, one sample per
//! row, nonnegative integer labels compacted to `0..K` in numeric order.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use otshift_core::{make_dataset, DenseMatrix, LabeledDataset};

use crate::error::{CliError, CliResult};
use crate::report::write_atomic;

/// A parsed CSV dataset and how it maps back to the file.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvData {
    pub dataset: LabeledDataset,
    /// Original label value -> compact label.
    pub label_mapping: BTreeMap<u64, usize>,
    /// Byte offset of each data row in the file.
    pub offsets: Vec<u64>,
}

fn check_header(header: &csv::StringRecord, path: &Path) -> CliResult<usize> {
    let fields: Vec<&str> = header.iter().map(str::trim).collect();
    let valid = fields.len() >= 2
        && fields.last() == Some(&"label")
        && fields[..fields.len() - 1].iter().enumerate().all(|(k, f)| *f == format!("feature_{k}"));
    if !valid {
        return Err(CliError::format(path, "line 1: missing header; expected feature_0,…,feature_{d-1},label"));
    }
    Ok(fields.len() - 1)
}

pub fn parse_csv_bytes(bytes: &[u8], path: &Path) -> CliResult<CsvData> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(bytes);
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| CliError::format(path, e.to_string()))?,
        None => return Err(CliError::format(path, "line 1: missing header")),
    };
    let d = check_header(&header, path)?;

    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    let mut offsets = Vec::new();
    for record in records {
        let record = record.map_err(|e| CliError::format(path, e.to_string()))?;
        let pos = record.position().expect("reader tracks positions");
        let line = pos.line();
        if record.len() != d + 1 {
            return Err(CliError::format(path, format!("line {line}: ragged row with {} fields, header has {}", record.len(), d + 1)));
        }
        for (k, field) in record.iter().take(d).enumerate() {
            let x: f64 = field
                .trim()
                .parse()
                .map_err(|_| CliError::format(path, format!("line {line}: feature_{k} is not a number: {field:?}")))?;
            if !x.is_finite() {
                return Err(CliError::format(path, format!("line {line}: feature_{k} is not finite: {field:?}")));
            }
            values.push(x);
        }
        let label_field = record.get(d).unwrap_or_default().trim();
        let label: u64 = label_field
            .parse()
            .map_err(|_| CliError::format(path, format!("line {line}: label is not a nonnegative integer: {label_field:?}")))?;
        raw_labels.push(label);
        offsets.push(pos.byte());
    }
    if raw_labels.is_empty() {
        return Err(CliError::format(path, "no data rows"));
    }
    let label_mapping: BTreeMap<u64, usize> = {
        let mut distinct: Vec<u64> = raw_labels.clone();
        distinct.sort_unstable();
        distinct.dedup();
        distinct.into_iter().enumerate().map(|(k, l)| (l, k)).collect()
    };
    let labels = raw_labels.iter().map(|l| label_mapping[l]).collect();
    let features = DenseMatrix::from_row_major(raw_labels.len(), d, values)?;
    let names = label_mapping.iter().map(|(&orig, &k)| (k, orig.to_string())).collect();
    let dataset = make_dataset(features, labels, None)?.with_class_names(names);
    Ok(CsvData { dataset, label_mapping, offsets })
}

pub fn read_csv(path: &Path) -> CliResult<CsvData> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    parse_csv_bytes(&bytes, path)
}

pub fn parse_csv(path: &Path) -> CliResult<LabeledDataset> {
    Ok(read_csv(path)?.dataset)
}

/// Shortest round-trip decimal for each feature; compact labels.
pub fn render_csv(dataset: &LabeledDataset) -> Vec<u8> {
    render_csv_labeled(dataset.features(), dataset.labels())
}

/// Header plus one row per feature row, ending in its label.
pub fn render_csv_labeled<L: std::fmt::Display>(features: &DenseMatrix, labels: &[L]) -> Vec<u8> {
    let mut out = Vec::new();
    let header: Vec<String> = (0..features.cols()).map(|k| format!("feature_{k}")).chain(["label".to_string()]).collect();
    writeln!(out, "{}", header.join(",")).expect("writing to a Vec");
    for (row, label) in features.iter_rows().zip(labels) {
        for x in row {
            write!(out, "{x},").expect("writing to a Vec");
        }
        writeln!(out, "{label}").expect("writing to a Vec");
    }
    out
}

pub fn write_csv(dataset: &LabeledDataset, path: &Path) -> CliResult<()> {
    write_atomic(path, &render_csv(dataset))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> CliResult<CsvData> {
        parse_csv_bytes(text.as_bytes(), Path::new("t.csv"))
    }

    #[test]
    fn parses_two_rows() {
        let data = parse("feature_0,feature_1,label\n0.0,0.0,0\n1.0,1.0,1\n").unwrap();
        assert_eq!((data.dataset.len(), data.dataset.dim(), data.dataset.num_classes()), (2, 2, 2));
        assert_eq!(data.offsets, vec![26, 36]);
    }

    #[test]
    fn ragged_row_names_line() {
        let err = parse("feature_0,feature_1,label\n0,0,0\n1,2,3,1\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        assert!(err.to_string().contains("ragged"));
    }

    #[test]
    fn compacts_labels_in_numeric_order() {
        let data = parse("feature_0,label\n0.5,7\n0.1,3\n0.2,7\n").unwrap();
        assert_eq!(data.dataset.labels(), &[1, 0, 1]);
        assert_eq!(data.label_mapping, BTreeMap::from([(3, 0), (7, 1)]));
    }

    #[test]
    fn rejects_bad_content() {
        assert!(parse("a,b\n1,2\n").unwrap_err().to_string().contains("missing header"));
        assert!(parse("").unwrap_err().to_string().contains("missing header"));
        assert!(parse("feature_0,label\nNaN,1\n").unwrap_err().to_string().contains("not finite"));
        assert!(parse("feature_0,label\n0.5,1.5\n").unwrap_err().to_string().contains("label"));
        assert!(parse("feature_0,label\n0.5,-1\n").unwrap_err().to_string().contains("label"));
        assert!(parse("feature_0,label\nx,1\n").unwrap_err().to_string().contains("not a number"));
    }

    #[test]
    fn render_round_trips() {
        let data = parse("feature_0,feature_1,label\n0.1,0.3333333333333333,0\n1,2e-20,1\n").unwrap();
        let text = render_csv(&data.dataset);
        let again = parse(std::str::from_utf8(&text).unwrap()).unwrap();
        assert_eq!(again.dataset.features(), data.dataset.features());
    }
}
