//! Ground costs and discrete optimal transport solvers.

mod network_simplex;
mod sinkhorn;

use crate::dataset::{check_simplex, CostMatrix, Coupling, LabeledDataset, MetricTag};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::par;

pub use network_simplex::DEFAULT_EXACT_CELL_CAP;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Exact,
    Sinkhorn,
}

/// Entropic regularization strength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Epsilon {
    /// Absolute, in units of cost.
    Absolute(f64),
    /// Multiple of the mean entry of the cost matrix.
    RelativeToMeanCost(f64),
}

impl Epsilon {
    /// Absolute strength for a given cost matrix. An all-zero cost has a
    /// trivial entropic solution, so any positive strength is returned.
    pub fn resolve(self, cost: &CostMatrix) -> f64 {
        match self {
            Epsilon::Absolute(e) => e,
            Epsilon::RelativeToMeanCost(r) => {
                let mean = cost.mean();
                if mean > 0.0 {
                    r * mean
                } else {
                    r
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub method: Method,
    pub epsilon: Epsilon,
    /// Convergence threshold on the max row-marginal violation (Sinkhorn).
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Largest `n·m` accepted by the exact solver.
    pub exact_cell_cap: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::Exact,
            epsilon: Epsilon::RelativeToMeanCost(0.05),
            tolerance: 1e-6,
            max_iterations: 10_000,
            exact_cell_cap: DEFAULT_EXACT_CELL_CAP,
        }
    }
}

impl SolverConfig {
    pub fn exact() -> Self {
        Self::default()
    }

    pub fn sinkhorn() -> Self {
        Self { method: Method::Sinkhorn, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance", "must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations", "must be at least 1"));
        }
        if self.method == Method::Sinkhorn {
            let e = match self.epsilon {
                Epsilon::Absolute(e) | Epsilon::RelativeToMeanCost(e) => e,
            };
            if !(e > 0.0) || !e.is_finite() {
                return Err(Error::invalid("epsilon", "must be positive and finite"));
            }
        }
        Ok(())
    }
}

/// Result of an OT solve.
#[derive(Debug, Clone, PartialEq)]
pub struct OtSolution {
    pub coupling: Coupling,
    /// `Σ cost_ij · π_ij`, without any entropy term.
    pub transport_cost: f64,
    /// Pivots (exact) or scaling sweeps (Sinkhorn).
    pub iterations_used: usize,
    pub converged: bool,
    pub method: Method,
    /// Absolute regularization used, for Sinkhorn solves.
    pub epsilon: Option<f64>,
}

/// Squared Euclidean distances between the feature rows of `a` and `b`.
pub fn build_feature_cost(a: &LabeledDataset, b: &LabeledDataset) -> Result<CostMatrix> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { context: "feature dimension", expected: a.dim(), found: b.dim() });
    }
    let (fa, fb) = (a.features(), b.features());
    let mut values = DenseMatrix::zeros(fa.rows(), fb.rows());
    let width = fb.rows();
    par::for_each_row(values.as_mut_slice(), width, |i, out| {
        let x = fa.row(i);
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = x.iter().zip(fb.row(j)).map(|(p, q)| (p - q) * (p - q)).sum();
        }
    });
    CostMatrix::new(values, MetricTag::SquaredEuclideanFeatures)
}

fn check_marginals(cost: &CostMatrix, a: &[f64], b: &[f64]) -> Result<()> {
    check_simplex(a, cost.rows(), "source weights")?;
    check_simplex(b, cost.cols(), "target weights")?;
    Ok(())
}

/// Exact transportation LP on instances up to [`DEFAULT_EXACT_CELL_CAP`] cells.
pub fn solve_exact(cost: &CostMatrix, a: &[f64], b: &[f64]) -> Result<OtSolution> {
    solve_exact_capped(cost, a, b, DEFAULT_EXACT_CELL_CAP)
}

pub fn solve_exact_capped(cost: &CostMatrix, a: &[f64], b: &[f64], cell_cap: usize) -> Result<OtSolution> {
    check_marginals(cost, a, b)?;
    let cells = cost.rows() * cost.cols();
    if cells > cell_cap {
        return Err(Error::ProblemTooLarge { cells, cap: cell_cap });
    }
    network_simplex::solve(cost, a, b)
}

/// Entropic OT via log-domain stabilized Sinkhorn.
pub fn solve_sinkhorn(cost: &CostMatrix, a: &[f64], b: &[f64], config: &SolverConfig) -> Result<OtSolution> {
    config.validate()?;
    check_marginals(cost, a, b)?;
    sinkhorn::solve(cost, a, b, config)
}

/// Dispatches on `config.method`.
pub fn solve(cost: &CostMatrix, a: &[f64], b: &[f64], config: &SolverConfig) -> Result<OtSolution> {
    config.validate()?;
    match config.method {
        Method::Exact => solve_exact_capped(cost, a, b, config.exact_cell_cap),
        Method::Sinkhorn => solve_sinkhorn(cost, a, b, config),
    }
}
