use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch { context: &'static str, expected: usize, found: usize },
    #[error("dataset must contain at least one sample and one feature")]
    EmptyDataset,
    #[error("weight {index} is negative or not finite ({value})")]
    InvalidWeight { index: usize, value: f64 },
    #[error("weights sum to {sum}, expected 1")]
    WeightsNotNormalized { sum: f64 },
    #[error("feature value at row {row}, column {col} is not finite")]
    NonFiniteFeature { row: usize, col: usize },
    #[error("labels must be compact 0..K: class {missing} has no samples")]
    NonCompactLabels { missing: usize },
    #[error("class {class} does not exist (K = {classes})")]
    UnknownClass { class: usize, classes: usize },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("instance has {cells} cells, above the exact-solver cap of {cap}")]
    ProblemTooLarge { cells: usize, cap: usize },
    #[error("marginals have different total mass ({source_mass} vs {target_mass})")]
    Infeasible { source_mass: f64, target_mass: f64 },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("exact solver exceeded {0} pivots")]
    PivotLimit(usize),
    #[error("matrix is not symmetric (max deviation {0})")]
    NotSymmetric(f64),
    #[error("matrix is not positive semi-definite (eigenvalue {0})")]
    NotPositiveSemiDefinite(f64),
    #[error("squared Bures distance is negative ({0}); covariance inputs are not PSD")]
    NegativeDistance(f64),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
