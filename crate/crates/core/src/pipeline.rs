//! End-to-end shift analysis between a source and a target dataset.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::dataset::{CostMatrix, LabeledDataset};
use crate::error::{Error, Result};
use crate::math::sqrt;
use crate::ot::{build_feature_cost, solve, OtSolution, SolverConfig};
use crate::otdd::{class_moments, label_distance_matrix, otdd_cost, GaussianMoments, LabelDistanceMatrix, Regularizer};
use crate::shift::{
    class_mass_matrix, detect_mismatches, rank_pairs, rank_pairs_between_classes, rank_pairs_in_block, ClassMassMatrix,
    Mismatch, PairRanking,
};

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub solver: SolverConfig,
    pub regularizer: Regularizer,
    /// Minimum share of a source class for a mismatch.
    pub mismatch_fraction: f64,
    /// Pairs reported on each side (closest and farthest).
    pub pairs: usize,
    /// Overrides the median-of-nonzero mass floor for pair ranking.
    pub mass_floor: Option<f64>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            regularizer: Regularizer::TraceScaled,
            mismatch_fraction: 0.5,
            pairs: 5,
            mass_floor: None,
        }
    }
}

/// Exemplar pairs for one mismatched class pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MismatchPairs {
    pub mismatch: Mismatch,
    /// From a dedicated OT between the two classes.
    pub fresh: PairRanking,
    /// From the global coupling's sub-block, for comparison.
    pub sub_block: PairRanking,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftAnalysis {
    pub moments_source: BTreeMap<usize, GaussianMoments>,
    pub moments_target: BTreeMap<usize, GaussianMoments>,
    pub label_distances: LabelDistanceMatrix,
    pub cost: CostMatrix,
    pub solution: OtSolution,
    pub class_mass: ClassMassMatrix,
    pub mismatches: Vec<Mismatch>,
    pub mismatch_pairs: Vec<MismatchPairs>,
    /// Pairs ranked over the whole coupling.
    pub global_pairs: PairRanking,
}

impl ShiftAnalysis {
    /// OT value over the combined cost (the squared dataset distance).
    pub fn otdd_squared(&self) -> f64 {
        self.solution.transport_cost
    }

    pub fn otdd(&self) -> f64 {
        sqrt(self.solution.transport_cost.max(0.0))
    }

    pub fn vocabulary_mismatch(&self) -> bool {
        self.class_mass.vocabulary_mismatch()
    }
}

/// Moments, label distances, combined cost, OT solve, class mass, mismatches
/// and exemplar pairs for each mismatch.
pub fn analyze_shift(source: &LabeledDataset, target: &LabeledDataset, config: &AnalysisConfig) -> Result<ShiftAnalysis> {
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch { context: "feature dimension", expected: source.dim(), found: target.dim() });
    }
    if config.pairs == 0 {
        return Err(Error::invalid("pairs", "must be at least 1"));
    }
    config.solver.validate()?;
    let moments_source = class_moments(source, config.regularizer)?;
    let moments_target = class_moments(target, config.regularizer)?;
    let label_distances = label_distance_matrix(&moments_source, &moments_target)?;
    let feature_cost = build_feature_cost(source, target)?;
    let cost = otdd_cost(&feature_cost, source.labels(), target.labels(), &label_distances)?;
    drop(feature_cost);
    let solution = solve(&cost, source.weights(), target.weights(), &config.solver)?;
    let class_mass = class_mass_matrix(&solution.coupling, source.labels(), target.labels())?;
    let mismatches = detect_mismatches(&class_mass, config.mismatch_fraction)?;
    let global_pairs = rank_pairs(&solution.coupling, &cost, config.pairs, config.mass_floor)?;
    let mismatch_pairs = mismatches
        .iter()
        .map(|mm| {
            let fresh = rank_pairs_between_classes(source, target, mm.source_class, mm.target_class, config.pairs, &config.solver)?;
            let sub_block = rank_pairs_in_block(
                &solution.coupling,
                &cost,
                source.labels(),
                target.labels(),
                mm.source_class,
                mm.target_class,
                config.pairs,
            )?;
            Ok(MismatchPairs { mismatch: mm.clone(), fresh, sub_block })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ShiftAnalysis {
        moments_source,
        moments_target,
        label_distances,
        cost,
        solution,
        class_mass,
        mismatches,
        mismatch_pairs,
        global_pairs,
    })
}
