//! Reading a coupling as class-level shift, and synthetic shift generators.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::{make_dataset, CostMatrix, Coupling, LabeledDataset, MetricTag};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::ot::{build_feature_cost, solve, OtSolution, SolverConfig};

/// Coupling mass aggregated by (source class, target class).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMassMatrix {
    pub values: DenseMatrix,
    /// Total source mass per class.
    pub row_class_mass: Vec<f64>,
}

impl ClassMassMatrix {
    pub fn source_classes(&self) -> usize {
        self.values.rows()
    }

    pub fn target_classes(&self) -> usize {
        self.values.cols()
    }

    pub fn total(&self) -> f64 {
        self.values.sum()
    }

    /// Whether source and target use label vocabularies of different size.
    pub fn vocabulary_mismatch(&self) -> bool {
        self.values.rows() != self.values.cols()
    }

    /// Share of each source class's mass sent to the same-index target class
    /// (zero when that class does not exist on the target side).
    pub fn diagonal_fractions(&self) -> Vec<f64> {
        (0..self.source_classes())
            .map(|u| {
                let total = self.row_class_mass[u];
                if total > 0.0 && u < self.target_classes() {
                    self.values[(u, u)] / total
                } else {
                    0.0
                }
            })
            .collect()
    }
}

pub fn class_mass_matrix(coupling: &Coupling, labels_a: &[usize], labels_b: &[usize]) -> Result<ClassMassMatrix> {
    if labels_a.len() != coupling.rows() {
        return Err(Error::DimensionMismatch { context: "source labels", expected: coupling.rows(), found: labels_a.len() });
    }
    if labels_b.len() != coupling.cols() {
        return Err(Error::DimensionMismatch { context: "target labels", expected: coupling.cols(), found: labels_b.len() });
    }
    let ka = labels_a.iter().max().map_or(0, |&k| k + 1);
    let kb = labels_b.iter().max().map_or(0, |&k| k + 1);
    let mut values = DenseMatrix::zeros(ka, kb);
    for (i, row) in coupling.values().iter_rows().enumerate() {
        let u = labels_a[i];
        for (j, &p) in row.iter().enumerate() {
            values[(u, labels_b[j])] += p;
        }
    }
    let row_class_mass = values.row_sums();
    Ok(ClassMassMatrix { values, row_class_mass })
}

/// Off-diagonal class pair that draws a large share of a source class.
#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub source_class: usize,
    pub target_class: usize,
    pub mass: f64,
    /// `mass / source class mass`.
    pub mass_fraction: f64,
    /// Share the source class keeps on its own index.
    pub diagonal_fraction: f64,
}

/// Every `(u, v)` with `u != v` and `mass_fraction >= min_fraction`, by
/// descending fraction, ties in `(u, v)` order.
pub fn detect_mismatches(mass: &ClassMassMatrix, min_fraction: f64) -> Result<Vec<Mismatch>> {
    if !(min_fraction > 0.0 && min_fraction <= 1.0) {
        return Err(Error::invalid("min_fraction", "must lie in (0, 1]"));
    }
    let diagonal = mass.diagonal_fractions();
    let mut out = Vec::new();
    for u in 0..mass.source_classes() {
        let total = mass.row_class_mass[u];
        if !(total > 0.0) {
            continue;
        }
        for v in 0..mass.target_classes() {
            if u == v {
                continue;
            }
            let cell = mass.values[(u, v)];
            let fraction = cell / total;
            if fraction >= min_fraction {
                out.push(Mismatch {
                    source_class: u,
                    target_class: v,
                    mass: cell,
                    mass_fraction: fraction,
                    diagonal_fraction: diagonal[u],
                });
            }
        }
    }
    out.sort_by(|x, y| {
        y.mass_fraction
            .total_cmp(&x.mass_fraction)
            .then(x.source_class.cmp(&y.source_class))
            .then(x.target_class.cmp(&y.target_class))
    });
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedPair {
    pub source_index: usize,
    pub target_index: usize,
    pub ground_cost: f64,
    pub coupling_mass: f64,
    /// `ground_cost · coupling_mass`.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairRanking {
    /// Lowest scores first.
    pub closest: Vec<RankedPair>,
    /// Highest scores first.
    pub farthest: Vec<RankedPair>,
    pub mass_floor: f64,
    pub candidates: usize,
    /// Set when no cell passed the mass floor.
    pub empty: bool,
}

/// Median of the strictly positive entries (mean of the middle two for an
/// even count); zero for an all-zero plan.
pub fn default_mass_floor(coupling: &Coupling) -> f64 {
    let mut nonzero: Vec<f64> = coupling.values().as_slice().iter().copied().filter(|&p| p > 0.0).collect();
    if nonzero.is_empty() {
        return 0.0;
    }
    nonzero.sort_by(f64::total_cmp);
    let mid = nonzero.len() / 2;
    if nonzero.len() % 2 == 1 {
        nonzero[mid]
    } else {
        0.5 * (nonzero[mid - 1] + nonzero[mid])
    }
}

/// Among cells with `π_ij >= mass_floor` (default: [`default_mass_floor`]),
/// the `k` lowest and `k` highest `d_ij · π_ij`.
pub fn rank_pairs(coupling: &Coupling, cost: &CostMatrix, k: usize, mass_floor: Option<f64>) -> Result<PairRanking> {
    if k == 0 {
        return Err(Error::invalid("k", "must be at least 1"));
    }
    if coupling.rows() != cost.rows() || coupling.cols() != cost.cols() {
        return Err(Error::DimensionMismatch {
            context: "coupling vs cost",
            expected: cost.rows() * cost.cols(),
            found: coupling.rows() * coupling.cols(),
        });
    }
    let floor = match mass_floor {
        Some(f) if f >= 0.0 => f,
        Some(_) => return Err(Error::invalid("mass_floor", "must be nonnegative")),
        None => default_mass_floor(coupling),
    };
    let m = coupling.cols();
    let mut candidates: Vec<RankedPair> = coupling
        .values()
        .as_slice()
        .iter()
        .zip(cost.values().as_slice())
        .enumerate()
        .filter(|(_, (&p, _))| p >= floor && p > 0.0)
        .map(|(idx, (&p, &c))| RankedPair {
            source_index: idx / m,
            target_index: idx % m,
            ground_cost: c,
            coupling_mass: p,
            score: c * p,
        })
        .collect();
    let total = candidates.len();
    let order = |x: &RankedPair, y: &RankedPair| (x.source_index, x.target_index).cmp(&(y.source_index, y.target_index));
    candidates.sort_by(|x, y| x.score.total_cmp(&y.score).then(order(x, y)));
    let closest = candidates.iter().take(k).cloned().collect();
    candidates.sort_by(|x, y| y.score.total_cmp(&x.score).then(order(x, y)));
    let farthest = candidates.into_iter().take(k).collect();
    Ok(PairRanking { closest, farthest, mass_floor: floor, candidates: total, empty: total == 0 })
}

/// OT between one class of each dataset on the feature cost alone, with
/// uniform weights inside each class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPairTransport {
    pub solution: OtSolution,
    pub cost: CostMatrix,
    /// Row `r` of the sub-problem is row `source_indices[r]` of `a`.
    pub source_indices: Vec<usize>,
    pub target_indices: Vec<usize>,
}

impl ClassPairTransport {
    /// [`rank_pairs`] on this coupling, with indices into the full datasets.
    pub fn rank(&self, k: usize, mass_floor: Option<f64>) -> Result<PairRanking> {
        let mut ranking = rank_pairs(&self.solution.coupling, &self.cost, k, mass_floor)?;
        for p in ranking.closest.iter_mut().chain(ranking.farthest.iter_mut()) {
            p.source_index = self.source_indices[p.source_index];
            p.target_index = self.target_indices[p.target_index];
        }
        Ok(ranking)
    }
}

pub fn solve_between_classes(
    a: &LabeledDataset,
    b: &LabeledDataset,
    class_a: usize,
    class_b: usize,
    config: &SolverConfig,
) -> Result<ClassPairTransport> {
    let (sub_a, source_indices) = a.restrict_to_class(class_a)?;
    let (sub_b, target_indices) = b.restrict_to_class(class_b)?;
    let cost = build_feature_cost(&sub_a, &sub_b)?;
    let solution = solve(&cost, sub_a.weights(), sub_b.weights(), config)?;
    Ok(ClassPairTransport { solution, cost, source_indices, target_indices })
}

/// Fresh OT between one class of `a` and one class of `b` on the feature
/// cost alone; returned indices refer to `a` and `b`.
pub fn rank_pairs_between_classes(
    a: &LabeledDataset,
    b: &LabeledDataset,
    class_a: usize,
    class_b: usize,
    k: usize,
    config: &SolverConfig,
) -> Result<PairRanking> {
    solve_between_classes(a, b, class_a, class_b, config)?.rank(k, None)
}

/// Ranks the sub-block of a global coupling between two classes, without
/// re-solving. Indices refer to the full datasets.
pub fn rank_pairs_in_block(
    coupling: &Coupling,
    cost: &CostMatrix,
    labels_a: &[usize],
    labels_b: &[usize],
    class_a: usize,
    class_b: usize,
    k: usize,
) -> Result<PairRanking> {
    let rows: Vec<usize> = (0..labels_a.len()).filter(|&i| labels_a[i] == class_a).collect();
    let cols: Vec<usize> = (0..labels_b.len()).filter(|&j| labels_b[j] == class_b).collect();
    if rows.is_empty() {
        return Err(Error::UnknownClass { class: class_a, classes: labels_a.iter().max().map_or(0, |k| k + 1) });
    }
    if cols.is_empty() {
        return Err(Error::UnknownClass { class: class_b, classes: labels_b.iter().max().map_or(0, |k| k + 1) });
    }
    let block = DenseMatrix::from_fn(rows.len(), cols.len(), |r, c| coupling.values()[(rows[r], cols[c])]);
    let block_cost = DenseMatrix::from_fn(rows.len(), cols.len(), |r, c| cost.values()[(rows[r], cols[c])]);
    let block_a = block.row_sums();
    let block_b = block.col_sums();
    let sub = Coupling::new(block, &block_a, &block_b)?;
    let sub_cost = CostMatrix::new(block_cost, cost.metric_tag())?;
    let mut ranking = rank_pairs(&sub, &sub_cost, k, None)?;
    for p in ranking.closest.iter_mut().chain(ranking.farthest.iter_mut()) {
        p.source_index = rows[p.source_index];
        p.target_index = cols[p.target_index];
    }
    Ok(ranking)
}

/// Adds `N(0, sigma²)` noise to every feature of `target_class`, clamped to
/// `[0, 1]`. Other rows are untouched; `sigma = 0` returns the input as is.
pub fn apply_gaussian_noise_shift(dataset: &LabeledDataset, target_class: usize, sigma: f64, seed: u64) -> Result<LabeledDataset> {
    if target_class >= dataset.num_classes() {
        return Err(Error::UnknownClass { class: target_class, classes: dataset.num_classes() });
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid("sigma", "must be nonnegative and finite"));
    }
    if sigma == 0.0 {
        return Ok(dataset.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = dataset.features().clone();
    for i in dataset.class_indices(target_class) {
        for x in features.row_mut(i) {
            let z: f64 = rng.sample(StandardNormal);
            *x = (*x + sigma * z).clamp(0.0, 1.0);
        }
    }
    dataset.with_features(features)
}

/// `classes` Gaussian blobs in `[0, 1]^dim`, class-major order.
///
/// Centers are `0.5 + 0.3 · centers_scale · u` with `u ~ U(-1, 1)^dim`, so
/// `centers_scale ∈ [0, 1]` keeps them in `[0.2, 0.8]^dim`. Samples add
/// `N(0, spread²)` per coordinate and are clamped to `[0, 1]`.
pub fn make_gaussian_blobs(
    classes: usize,
    per_class: usize,
    dim: usize,
    centers_scale: f64,
    spread: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if classes < 2 {
        return Err(Error::invalid("classes", "need at least 2"));
    }
    if per_class < 2 {
        return Err(Error::invalid("per_class", "need at least 2"));
    }
    if dim == 0 {
        return Err(Error::invalid("dim", "need at least 1"));
    }
    if !(0.0..=1.0).contains(&centers_scale) {
        return Err(Error::invalid("centers_scale", "must lie in [0, 1]"));
    }
    if !(spread >= 0.0) || !spread.is_finite() {
        return Err(Error::invalid("spread", "must be nonnegative and finite"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| 0.5 + 0.3 * centers_scale * rng.random_range(-1.0..=1.0)).collect())
        .collect();
    let n = classes * per_class;
    let mut features = DenseMatrix::zeros(n, dim);
    let mut labels = vec![0; n];
    for (c, center) in centers.iter().enumerate() {
        for t in 0..per_class {
            let i = c * per_class + t;
            labels[i] = c;
            for (x, &mu) in features.row_mut(i).iter_mut().zip(center) {
                let z: f64 = rng.sample(StandardNormal);
                *x = (mu + spread * z).clamp(0.0, 1.0);
            }
        }
    }
    make_dataset(features, labels, None)
}

/// Convenience for tests and callers building costs by hand.
pub fn feature_only(cost: DenseMatrix) -> Result<CostMatrix> {
    CostMatrix::new(cost, MetricTag::SquaredEuclideanFeatures)
}
