//! IDX containers as used by MNIST: big-endian headers, unsigned-byte
//! payloads.

use std::path::Path;

use otshift_core::{make_dataset, DenseMatrix, LabeledDataset};

use crate::error::{CliError, CliResult};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const IMAGES_HEADER: usize = 16;
pub const LABELS_HEADER: usize = 8;

/// Images and labels decoded from a pair of IDX files.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxData {
    pub rows: usize,
    pub cols: usize,
    /// One byte per pixel, image-major.
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

impl IdxData {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Byte offset of image `i` in the images file.
    pub fn image_offset(&self, i: usize) -> u64 {
        (IMAGES_HEADER + i * self.rows * self.cols) as u64
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes.get(at..at + 4).map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

pub fn decode_idx(images: &[u8], labels: &[u8], images_name: &Path, labels_name: &Path) -> CliResult<IdxData> {
    let short = |p: &Path, what: &str| CliError::format(p, format!("truncated header: {what}"));
    let magic = be_u32(images, 0).ok_or_else(|| short(images_name, "missing magic"))?;
    if magic != IMAGES_MAGIC {
        return Err(CliError::format(
            images_name,
            format!("wrong magic for images file: expected 0x{IMAGES_MAGIC:08x}, found 0x{magic:08x}"),
        ));
    }
    let count = be_u32(images, 4).ok_or_else(|| short(images_name, "missing image count"))? as usize;
    let rows = be_u32(images, 8).ok_or_else(|| short(images_name, "missing row count"))? as usize;
    let cols = be_u32(images, 12).ok_or_else(|| short(images_name, "missing column count"))? as usize;

    let magic = be_u32(labels, 0).ok_or_else(|| short(labels_name, "missing magic"))?;
    if magic != LABELS_MAGIC {
        return Err(CliError::format(
            labels_name,
            format!("wrong magic for labels file: expected 0x{LABELS_MAGIC:08x}, found 0x{magic:08x}"),
        ));
    }
    let label_count = be_u32(labels, 4).ok_or_else(|| short(labels_name, "missing label count"))? as usize;
    if label_count != count {
        return Err(CliError::Invalid(format!(
            "image/label count mismatch: {} has {count} images, {} has {label_count} labels",
            images_name.display(),
            labels_name.display()
        )));
    }

    let expected = count
        .checked_mul(rows)
        .and_then(|x| x.checked_mul(cols))
        .ok_or_else(|| CliError::format(images_name, "image dimensions overflow"))?;
    let payload = &images[IMAGES_HEADER..];
    if payload.len() != expected {
        return Err(CliError::format(
            images_name,
            format!("payload has {} bytes, expected {expected} ({count}·{rows}·{cols})", payload.len()),
        ));
    }
    let label_payload = &labels[LABELS_HEADER..];
    if label_payload.len() != count {
        return Err(CliError::format(labels_name, format!("payload has {} bytes, expected {count}", label_payload.len())));
    }
    Ok(IdxData { rows, cols, pixels: payload.to_vec(), labels: label_payload.to_vec() })
}

impl IdxData {
    /// Flattened images scaled by 1/255 with uniform weights. Labels must be
    /// compact (`0..K` all present).
    pub fn to_dataset(&self) -> CliResult<LabeledDataset> {
        if self.rows * self.cols == 0 || self.is_empty() {
            return Err(CliError::Invalid("IDX file holds no pixels".into()));
        }
        let features = DenseMatrix::from_row_major(
            self.len(),
            self.rows * self.cols,
            self.pixels.iter().map(|&b| f64::from(b) / 255.0).collect(),
        )?;
        let labels = self.labels.iter().map(|&l| usize::from(l)).collect();
        Ok(make_dataset(features, labels, None)?)
    }
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn read_idx(images_path: &Path, labels_path: &Path) -> CliResult<IdxData> {
    decode_idx(&read(images_path)?, &read(labels_path)?, images_path, labels_path)
}

pub fn parse_idx(images_path: &Path, labels_path: &Path) -> CliResult<LabeledDataset> {
    read_idx(images_path, labels_path)?.to_dataset()
}

/// Encodes a dataset as IDX bytes, quantizing features with
/// `round(255·x)`. Features must lie in `[0, 1]`, labels below 256.
pub fn encode_idx(dataset: &LabeledDataset, rows: usize, cols: usize) -> CliResult<(Vec<u8>, Vec<u8>)> {
    if rows * cols != dataset.dim() {
        return Err(CliError::Invalid(format!("{rows}·{cols} does not match dimension {}", dataset.dim())));
    }
    let n = dataset.len();
    let mut images = Vec::with_capacity(IMAGES_HEADER + n * rows * cols);
    for field in [IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        images.extend_from_slice(&field.to_be_bytes());
    }
    for &x in dataset.features().as_slice() {
        if !(0.0..=1.0).contains(&x) {
            return Err(CliError::Invalid(format!("feature {x} outside [0, 1]")));
        }
        images.push((x * 255.0).round() as u8);
    }
    let mut labels = Vec::with_capacity(LABELS_HEADER + n);
    for field in [LABELS_MAGIC, n as u32] {
        labels.extend_from_slice(&field.to_be_bytes());
    }
    for &l in dataset.labels() {
        labels.push(u8::try_from(l).map_err(|_| CliError::Invalid(format!("label {l} does not fit in a byte")))?);
    }
    Ok((images, labels))
}

/// MNIST naming convention: `…-images-idx3-ubyte` pairs with
/// `…-labels-idx1-ubyte`.
pub fn companion_labels_path(images_path: &Path) -> Option<std::path::PathBuf> {
    let name = images_path.file_name()?.to_str()?;
    let swapped = name.replacen("images-idx3", "labels-idx1", 1).replacen("images.idx3", "labels.idx1", 1);
    (swapped != name).then(|| images_path.with_file_name(swapped))
}
