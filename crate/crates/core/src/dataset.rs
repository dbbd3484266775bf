//! Labeled datasets, ground costs and couplings.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Tolerance on `Σ weights = 1`.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Samples with integer class labels and probability weights.
///
/// Labels are compact: every class in `0..num_classes` has at least one
/// sample. Two datasets never share a label space implicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: DenseMatrix,
    labels: Vec<usize>,
    weights: Vec<f64>,
    num_classes: usize,
    class_names: Option<BTreeMap<usize, String>>,
}

/// Validates features, labels and weights; `None` weights become uniform.
pub fn make_dataset(features: DenseMatrix, labels: Vec<usize>, weights: Option<Vec<f64>>) -> Result<LabeledDataset> {
    let n = features.rows();
    if n == 0 || features.cols() == 0 {
        return Err(Error::EmptyDataset);
    }
    if labels.len() != n {
        return Err(Error::DimensionMismatch { context: "labels", expected: n, found: labels.len() });
    }
    for (i, row) in features.iter_rows().enumerate() {
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature { row: i, col: j });
        }
    }
    let weights = match weights {
        Some(w) => {
            check_simplex(&w, n, "weights")?;
            w
        }
        None => vec![1.0 / n as f64; n],
    };
    let num_classes = labels.iter().max().map_or(0, |&k| k + 1);
    let mut counts = vec![0usize; num_classes];
    for &l in &labels {
        counts[l] += 1;
    }
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(Error::NonCompactLabels { missing });
    }
    Ok(LabeledDataset { features, labels, weights, num_classes, class_names: None })
}

/// Checks that `w` has length `n`, nonnegative finite entries and unit sum.
pub(crate) fn check_simplex(w: &[f64], n: usize, context: &'static str) -> Result<()> {
    if w.len() != n {
        return Err(Error::DimensionMismatch { context, expected: n, found: w.len() });
    }
    if let Some((index, &value)) = w.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidWeight { index, value });
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::WeightsNotNormalized { sum });
    }
    Ok(())
}

impl LabeledDataset {
    /// Attaches display names for labels.
    pub fn with_class_names(mut self, names: BTreeMap<usize, String>) -> Self {
        self.class_names = Some(names);
        self
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn class_names(&self) -> Option<&BTreeMap<usize, String>> {
        self.class_names.as_ref()
    }

    /// Number of samples.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    /// Always false for a validated dataset.
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Feature dimension.
    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Indices of the samples carrying `class`, ascending.
    pub fn class_indices(&self, class: usize) -> Vec<usize> {
        self.labels.iter().enumerate().filter(|(_, &l)| l == class).map(|(i, _)| i).collect()
    }

    /// Samples of one class relabeled to 0, with uniform weights, and their
    /// indices in `self`.
    pub fn restrict_to_class(&self, class: usize) -> Result<(LabeledDataset, Vec<usize>)> {
        if class >= self.num_classes {
            return Err(Error::UnknownClass { class, classes: self.num_classes });
        }
        let indices = self.class_indices(class);
        let features = self.features.select_rows(&indices);
        let sub = make_dataset(features, vec![0; indices.len()], None)?;
        Ok((sub, indices))
    }

    /// Same samples and labels with replaced features. Labels stay valid, so
    /// only the shape and finiteness are checked.
    pub(crate) fn with_features(&self, features: DenseMatrix) -> Result<Self> {
        if features.rows() != self.len() || features.cols() != self.dim() {
            return Err(Error::DimensionMismatch { context: "features", expected: self.len(), found: features.rows() });
        }
        let mut out = self.clone();
        out.features = features;
        Ok(out)
    }
}

/// Indices kept by [`subsample`]: per class, `min(per_class, size)` samples
/// drawn without replacement, returned in ascending order.
pub fn subsample_indices(dataset: &LabeledDataset, per_class: usize, seed: u64) -> Result<Vec<usize>> {
    if per_class == 0 {
        return Err(Error::invalid("per_class", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    for class in 0..dataset.num_classes() {
        let mut members = dataset.class_indices(class);
        if members.len() > per_class {
            let (chosen, _) = members.partial_shuffle(&mut rng, per_class);
            keep.extend_from_slice(chosen);
        } else {
            keep.append(&mut members);
        }
    }
    keep.sort_unstable();
    Ok(keep)
}

/// Deterministic per-class subsample with re-uniformized weights.
pub fn subsample(dataset: &LabeledDataset, per_class: usize, seed: u64) -> Result<LabeledDataset> {
    let keep = subsample_indices(dataset, per_class, seed)?;
    let features = dataset.features.select_rows(&keep);
    let labels = keep.iter().map(|&i| dataset.labels[i]).collect();
    let mut out = make_dataset(features, labels, None)?;
    out.class_names = dataset.class_names.clone();
    Ok(out)
}

/// Which ground cost produced a [`CostMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricTag {
    SquaredEuclideanFeatures,
    OtddCombined,
}

/// Nonnegative `n × m` ground cost.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    values: DenseMatrix,
    metric_tag: MetricTag,
}

impl CostMatrix {
    pub fn new(values: DenseMatrix, metric_tag: MetricTag) -> Result<Self> {
        if values.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cost matrix"));
        }
        if let Some(&v) = values.as_slice().iter().find(|v| **v < 0.0) {
            return Err(Error::invalid("cost", alloc::format!("negative entry {v}")));
        }
        Ok(Self { values, metric_tag })
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    pub fn metric_tag(&self) -> MetricTag {
        self.metric_tag
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn cols(&self) -> usize {
        self.values.cols()
    }

    pub fn mean(&self) -> f64 {
        self.values.mean()
    }
}

/// Transport plan with its measured marginal violations.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    values: DenseMatrix,
    row_marginal_error: f64,
    col_marginal_error: f64,
}

impl Coupling {
    /// Wraps a plan and records `max |row sums - a|` and `max |col sums - b|`.
    pub fn new(values: DenseMatrix, a: &[f64], b: &[f64]) -> Result<Self> {
        if values.rows() != a.len() {
            return Err(Error::DimensionMismatch { context: "coupling rows", expected: a.len(), found: values.rows() });
        }
        if values.cols() != b.len() {
            return Err(Error::DimensionMismatch { context: "coupling cols", expected: b.len(), found: values.cols() });
        }
        if values.as_slice().iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::NonFinite("coupling"));
        }
        let row_marginal_error = max_deviation(&values.row_sums(), a);
        let col_marginal_error = max_deviation(&values.col_sums(), b);
        Ok(Self { values, row_marginal_error, col_marginal_error })
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn cols(&self) -> usize {
        self.values.cols()
    }

    pub fn row_marginal_error(&self) -> f64 {
        self.row_marginal_error
    }

    pub fn col_marginal_error(&self) -> f64 {
        self.col_marginal_error
    }

    pub fn total_mass(&self) -> f64 {
        self.values.sum()
    }

    /// Number of strictly positive entries.
    pub fn support_size(&self) -> usize {
        self.values.as_slice().iter().filter(|&&v| v > 0.0).count()
    }

    /// `Σ cost_ij · π_ij`.
    pub fn transport_cost(&self, cost: &CostMatrix) -> f64 {
        self.values.as_slice().iter().zip(cost.values().as_slice()).map(|(p, c)| p * c).sum()
    }
}

fn max_deviation(sums: &[f64], target: &[f64]) -> f64 {
    sums.iter().zip(target).map(|(s, t)| (s - t).abs()).fold(0.0, f64::max)
}
