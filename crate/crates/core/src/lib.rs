//! Label-aware optimal transport for characterizing distribution shift
//! between two labeled datasets.
//!
//! The pipeline builds a combined ground cost (squared feature distance plus
//! a Bures–Wasserstein distance between class-conditional Gaussians), solves
//! the transport problem exactly or with log-domain Sinkhorn, and reads the
//! optimal coupling back as a class-level mass matrix, a list of mismatched
//! class pairs and ranked exemplar sample pairs.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled. The `parallel` feature spreads cost construction, Sinkhorn
//! updates and label distances over a rayon pool.
#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

mod error;
mod math;
mod matrix;
mod par;

pub mod dataset;
pub mod ot;
pub mod otdd;
pub mod pipeline;
pub mod shift;

pub use dataset::{make_dataset, subsample, subsample_indices, CostMatrix, Coupling, LabeledDataset, MetricTag};
pub use error::{Error, Result};
pub use matrix::DenseMatrix;
pub use ot::{build_feature_cost, solve, solve_exact, solve_exact_capped, solve_sinkhorn, Epsilon, Method, OtSolution, SolverConfig};
pub use otdd::{
    bures_wasserstein_sq, class_moments, default_regularizer, label_distance_matrix, matrix_sqrt_psd, otdd_cost,
    GaussianMoments, LabelDistanceMatrix, Regularizer,
};
pub use pipeline::{analyze_shift, AnalysisConfig, MismatchPairs, ShiftAnalysis};
pub use shift::{
    apply_gaussian_noise_shift, class_mass_matrix, detect_mismatches, make_gaussian_blobs, rank_pairs,
    rank_pairs_between_classes, rank_pairs_in_block, solve_between_classes, ClassMassMatrix, ClassPairTransport, Mismatch, PairRanking, RankedPair,
};
