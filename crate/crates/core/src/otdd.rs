//! Label-aware ground cost: class-conditional Gaussians compared with the
//! Bures–Wasserstein metric and added to the feature cost.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::dataset::{CostMatrix, LabeledDataset, MetricTag};
use crate::error::{Error, Result};
use crate::math::sqrt;
use crate::matrix::DenseMatrix;
use crate::par;

/// Absolute tolerance for symmetry and negative eigenvalues.
pub const PSD_TOLERANCE: f64 = 1e-8;

/// Ridge added to each class covariance.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Regularizer {
    Fixed(f64),
    /// `1e-6 · trace(Σ) / d + 1e-12`, per class.
    #[default]
    TraceScaled,
}

pub fn default_regularizer(trace: f64, dim: usize) -> f64 {
    1e-6 * trace / dim as f64 + 1e-12
}

/// Eigen-decomposition `Σ = V diag(s) Vᵀ + floor · (I - V Vᵀ)` with
/// orthonormal columns in `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFactor {
    basis: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    floor: f64,
}

/// Mean and (regularized) covariance of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMoments {
    pub mean: Vec<f64>,
    pub covariance: DenseMatrix,
    pub sample_count: usize,
    /// Ridge that was added to the covariance.
    pub regularizer: f64,
    spectral: Option<SpectralFactor>,
}

impl GaussianMoments {
    /// Moments without a cached factor; distances use the dense route.
    pub fn new(mean: Vec<f64>, covariance: DenseMatrix, sample_count: usize) -> Result<Self> {
        if covariance.rows() != mean.len() || covariance.cols() != mean.len() {
            return Err(Error::DimensionMismatch { context: "covariance", expected: mean.len(), found: covariance.rows() });
        }
        Ok(Self { mean, covariance, sample_count, regularizer: 0.0, spectral: None })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|k| self.covariance[(k, k)]).sum()
    }

    pub fn has_spectral_factor(&self) -> bool {
        self.spectral.is_some()
    }

    /// Drops the cached factor, forcing the dense route.
    pub fn without_spectral_factor(mut self) -> Self {
        self.spectral = None;
        self
    }
}

/// Weighted per-class mean and covariance (normalized by the class weight),
/// plus a ridge.
pub fn class_moments(dataset: &LabeledDataset, regularizer: Regularizer) -> Result<BTreeMap<usize, GaussianMoments>> {
    if let Regularizer::Fixed(r) = regularizer {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::invalid("regularizer", "must be nonnegative and finite"));
        }
    }
    let d = dataset.dim();
    let mut out = BTreeMap::new();
    for class in 0..dataset.num_classes() {
        let members = dataset.class_indices(class);
        let total: f64 = members.iter().map(|&i| dataset.weights()[i]).sum();
        let weight_of = |i: usize| if total > 0.0 { dataset.weights()[i] / total } else { 1.0 / members.len() as f64 };

        let mut mean = vec![0.0; d];
        for &i in &members {
            let w = weight_of(i);
            for (m, x) in mean.iter_mut().zip(dataset.features().row(i)) {
                *m += w * x;
            }
        }
        // Rows sqrt(w_i) (x_i - mean), so covariance = AᵀA.
        let centered = DMatrix::from_fn(members.len(), d, |r, k| {
            let i = members[r];
            sqrt(weight_of(i)) * (dataset.features()[(i, k)] - mean[k])
        });
        let mut cov = centered.tr_mul(&centered);
        symmetrize(&mut cov);
        let trace = cov.trace();
        let ridge = match regularizer {
            Regularizer::Fixed(r) => r,
            Regularizer::TraceScaled => default_regularizer(trace, d),
        };
        let spectral = spectral_factor(&centered, &cov, ridge);
        for k in 0..d {
            cov[(k, k)] += ridge;
        }
        out.insert(
            class,
            GaussianMoments {
                mean,
                covariance: from_nalgebra(&cov),
                sample_count: members.len(),
                regularizer: ridge,
                spectral: Some(spectral),
            },
        );
    }
    Ok(out)
}

/// Eigenbasis of the unregularized covariance shifted by the ridge. With
/// fewer samples than dimensions, `Aᵀ = QR` and the eigenvectors of `R Rᵀ`
/// rotate `Q` into the eigenbasis.
fn spectral_factor(centered: &DMatrix<f64>, cov: &DMatrix<f64>, ridge: f64) -> SpectralFactor {
    let (r, d) = centered.shape();
    if r < d {
        let qr = centered.transpose().qr();
        let (q, upper) = (qr.q(), qr.r());
        let mut small = &upper * upper.transpose();
        symmetrize(&mut small);
        let eig = small.symmetric_eigen();
        let basis = q * eig.eigenvectors;
        let eigenvalues = eig.eigenvalues.iter().map(|l| l.max(0.0) + ridge).collect();
        SpectralFactor { basis, eigenvalues, floor: ridge }
    } else {
        let eig = cov.clone().symmetric_eigen();
        let eigenvalues = eig.eigenvalues.iter().map(|l| l.max(0.0) + ridge).collect();
        SpectralFactor { basis: eig.eigenvectors, eigenvalues, floor: ridge }
    }
}

fn to_nalgebra(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn from_nalgebra(m: &DMatrix<f64>) -> DenseMatrix {
    DenseMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Validates a symmetric PSD input and returns its symmetrized
/// eigen-decomposition.
fn checked_eigen(m: &DMatrix<f64>) -> Result<nalgebra::SymmetricEigen<f64, nalgebra::Dyn>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch { context: "square matrix", expected: m.nrows(), found: m.ncols() });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix square root input"));
    }
    let asym = max_asymmetry(m);
    if asym > PSD_TOLERANCE {
        return Err(Error::NotSymmetric(asym));
    }
    let mut sym = m.clone();
    symmetrize(&mut sym);
    let eig = sym.symmetric_eigen();
    if let Some(&low) = eig.eigenvalues.iter().find(|&&l| l < -PSD_TOLERANCE) {
        return Err(Error::NotPositiveSemiDefinite(low));
    }
    Ok(eig)
}

fn sqrt_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = checked_eigen(m)?;
    let roots = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|l| sqrt(l.max(0.0))));
    let mut scaled = eig.eigenvectors.clone();
    for (mut col, &s) in scaled.column_iter_mut().zip(roots.iter()) {
        col *= s;
    }
    let mut root = scaled * eig.eigenvectors.transpose();
    symmetrize(&mut root);
    Ok(root)
}

/// `Σ = U diag(e)² Uᵀ` over the numerical range of `Σ`: eigenvalues at or
/// below `d · ε · λ_max` are treated as zero.
#[derive(Debug, Clone)]
struct RangeFactor {
    basis: DMatrix<f64>,
    roots: Vec<f64>,
}

fn range_factor(m: &DMatrix<f64>) -> Result<RangeFactor> {
    let eig = checked_eigen(m)?;
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l));
    let cutoff = m.nrows() as f64 * f64::EPSILON * top;
    let keep: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&k| eig.eigenvalues[k] > cutoff).collect();
    let basis = eig.eigenvectors.select_columns(&keep);
    let roots = keep.iter().map(|&k| sqrt(eig.eigenvalues[k])).collect();
    Ok(RangeFactor { basis, roots })
}

/// Symmetric PSD square root by eigen-decomposition, clamping eigenvalues
/// in `[-1e-8, 0)` to zero.
pub fn matrix_sqrt_psd(m: &DenseMatrix) -> Result<DenseMatrix> {
    Ok(from_nalgebra(&sqrt_psd(&to_nalgebra(m))?))
}

fn mean_term(p: &GaussianMoments, q: &GaussianMoments) -> f64 {
    p.mean.iter().zip(&q.mean).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_dims(p: &GaussianMoments, q: &GaussianMoments) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch { context: "Gaussian dimension", expected: p.dim(), found: q.dim() });
    }
    Ok(())
}

/// Clamps roundoff negatives; the allowance scales with the covariance traces.
fn finish(value: f64, scale: f64) -> Result<f64> {
    if value.is_nan() {
        return Err(Error::NonFinite("Bures distance"));
    }
    if value < -PSD_TOLERANCE * scale.max(1.0) {
        return Err(Error::NegativeDistance(value));
    }
    Ok(value.max(0.0))
}

/// `tr sqrt(S_p Σ_q S_p)`, the nuclear norm of `C = E_q U_qᵀ U_p E_p`.
/// Singular values are taken as `‖C w‖` over eigenvectors `w` of the smaller
/// Gram matrix, which keeps near-zero ones at roundoff level.
fn cross_trace(fp: &RangeFactor, fq: &RangeFactor) -> f64 {
    if fp.roots.is_empty() || fq.roots.is_empty() {
        return 0.0;
    }
    let mut c = fq.basis.tr_mul(&fp.basis);
    for (mut row, &e) in c.row_iter_mut().zip(&fq.roots) {
        row *= e;
    }
    for (mut col, &e) in c.column_iter_mut().zip(&fp.roots) {
        col *= e;
    }
    let c = if c.nrows() < c.ncols() { c.transpose() } else { c };
    let mut gram = c.tr_mul(&c);
    symmetrize(&mut gram);
    let eig = gram.symmetric_eigen();
    (c * eig.eigenvectors).column_iter().map(|col| col.norm()).sum()
}

/// Squared 2-Wasserstein distance between two Gaussians:
/// `‖μ_p - μ_q‖² + tr(Σ_p + Σ_q - 2 (Σ_p^½ Σ_q Σ_p^½)^½)`.
///
/// Uses the cached spectral factors when both sides carry one, otherwise the
/// dense eigen-decomposition route.
pub fn bures_wasserstein_sq(p: &GaussianMoments, q: &GaussianMoments) -> Result<f64> {
    check_dims(p, q)?;
    match (&p.spectral, &q.spectral) {
        (Some(fp), Some(fq)) => bures_spectral(p, q, fp, fq),
        _ => {
            let fp = range_factor(&to_nalgebra(&p.covariance))?;
            let fq = range_factor(&to_nalgebra(&q.covariance))?;
            bures_dense(p, q, &fp, &fq)
        }
    }
}

fn bures_dense(p: &GaussianMoments, q: &GaussianMoments, fp: &RangeFactor, fq: &RangeFactor) -> Result<f64> {
    let traces = p.trace() + q.trace();
    finish(mean_term(p, q) + traces - 2.0 * cross_trace(fp, fq), traces)
}

/// Same quantity computed inside `span(V_p, V_q)`. Outside that span both
/// covariances are multiples of the identity, which contributes
/// `(d - k)(√floor_p - √floor_q)²` in closed form.
fn bures_spectral(p: &GaussianMoments, q: &GaussianMoments, fp: &SpectralFactor, fq: &SpectralFactor) -> Result<f64> {
    let d = p.dim();
    let (vp, vq) = (&fp.basis, &fq.basis);
    let rp = vp.ncols();

    // Residual of V_q against span(V_p), projected twice for stability.
    let mut overlap = vp.tr_mul(vq);
    let mut residual = vq - vp * &overlap;
    let correction = vp.tr_mul(&residual);
    residual -= vp * &correction;
    overlap += correction;

    let extra = if residual.ncols() > 0 && rp < d {
        let qr = residual.clone().col_piv_qr();
        let q_full = qr.q();
        let r = qr.unpack_r();
        let rank = (0..r.nrows().min(r.ncols())).take_while(|&k| r[(k, k)].abs() > 1e-9).count();
        Some(q_full.columns(0, rank).into_owned())
    } else {
        None
    };
    let t = extra.as_ref().map_or(0, |w| w.ncols());
    let k = rp + t;

    // Coordinates of V_q in the basis [V_p, W].
    let mut coords = DMatrix::zeros(k, vq.ncols());
    coords.rows_mut(0, rp).copy_from(&overlap);
    if let Some(w) = &extra {
        coords.rows_mut(rp, t).copy_from(&w.tr_mul(vq));
    }
    let mut weighted = coords.clone();
    for (mut col, &s) in weighted.column_iter_mut().zip(&fq.eigenvalues) {
        col *= s - fq.floor;
    }
    let mut inner = weighted * coords.transpose();
    for a in 0..k {
        inner[(a, a)] += fq.floor;
    }
    let root_p: Vec<f64> = fp.eigenvalues.iter().map(|&s| sqrt(s.max(0.0))).chain(core::iter::repeat_n(sqrt(fp.floor), t)).collect();
    for a in 0..k {
        for b in 0..k {
            inner[(a, b)] *= root_p[a] * root_p[b];
        }
    }
    symmetrize(&mut inner);
    let inside: f64 = inner.symmetric_eigenvalues().iter().map(|l| sqrt(l.max(0.0))).sum();

    let trace_p: f64 = fp.eigenvalues.iter().sum::<f64>() + (d - rp) as f64 * fp.floor;
    let trace_q: f64 = fq.eigenvalues.iter().sum::<f64>() + (d - fq.basis.ncols()) as f64 * fq.floor;
    let outside = (d - k) as f64 * sqrt(fp.floor * fq.floor);
    let traces = trace_p + trace_q;
    finish(mean_term(p, q) + traces - 2.0 * (inside + outside), traces)
}

/// `K_a × K_b` squared Bures distances between class Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelDistanceMatrix {
    pub values: DenseMatrix,
}

impl LabelDistanceMatrix {
    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn cols(&self) -> usize {
        self.values.cols()
    }
}

pub fn label_distance_matrix(
    moments_a: &BTreeMap<usize, GaussianMoments>,
    moments_b: &BTreeMap<usize, GaussianMoments>,
) -> Result<LabelDistanceMatrix> {
    let pa: Vec<&GaussianMoments> = moments_a.values().collect();
    let pb: Vec<&GaussianMoments> = moments_b.values().collect();
    if let (Some(x), Some(y)) = (pa.first(), pb.first()) {
        for m in pa.iter().chain(&pb) {
            check_dims(x, m)?;
        }
        check_dims(x, y)?;
    }
    // Pairs without two spectral factors go through the dense route, which
    // needs a range factor on both sides.
    let any_dense_a = pa.iter().any(|p| p.spectral.is_none());
    let any_dense_b = pb.iter().any(|q| q.spectral.is_none());
    let dense = |ms: &[&GaussianMoments], other_dense: bool| -> Result<Vec<Option<RangeFactor>>> {
        ms.iter()
            .map(|m| {
                if m.spectral.is_none() || other_dense {
                    range_factor(&to_nalgebra(&m.covariance)).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect()
    };
    let dense_a = dense(&pa, any_dense_b)?;
    let dense_b = dense(&pb, any_dense_a)?;
    let (ka, kb) = (pa.len(), pb.len());
    let mut cells: Vec<Result<f64>> = (0..ka * kb).map(|_| Ok(0.0)).collect();
    par::fill_indexed(&mut cells, |idx| {
        let (u, v) = (idx / kb, idx % kb);
        let (p, q) = (pa[u], pb[v]);
        match (&p.spectral, &q.spectral, &dense_a[u], &dense_b[v]) {
            (Some(sp), Some(sq), _, _) => bures_spectral(p, q, sp, sq),
            (_, _, Some(fp), Some(fq)) => bures_dense(p, q, fp, fq),
            _ => bures_wasserstein_sq(p, q),
        }
    });
    let values = cells.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(LabelDistanceMatrix { values: DenseMatrix::from_row_major(ka, kb, values)? })
}

/// `feature_cost[i][j] + label_dist[labels_a[i]][labels_b[j]]`.
pub fn otdd_cost(
    feature_cost: &CostMatrix,
    labels_a: &[usize],
    labels_b: &[usize],
    label_dist: &LabelDistanceMatrix,
) -> Result<CostMatrix> {
    let (n, m) = (feature_cost.rows(), feature_cost.cols());
    if labels_a.len() != n {
        return Err(Error::DimensionMismatch { context: "source labels", expected: n, found: labels_a.len() });
    }
    if labels_b.len() != m {
        return Err(Error::DimensionMismatch { context: "target labels", expected: m, found: labels_b.len() });
    }
    if let Some(&l) = labels_a.iter().find(|&&l| l >= label_dist.rows()) {
        return Err(Error::UnknownClass { class: l, classes: label_dist.rows() });
    }
    if let Some(&l) = labels_b.iter().find(|&&l| l >= label_dist.cols()) {
        return Err(Error::UnknownClass { class: l, classes: label_dist.cols() });
    }
    let mut values = feature_cost.values().clone();
    let ld = &label_dist.values;
    par::for_each_row(values.as_mut_slice(), m, |i, row| {
        let la = labels_a[i];
        for (j, c) in row.iter_mut().enumerate() {
            *c += ld[(la, labels_b[j])];
        }
    });
    CostMatrix::new(values, MetricTag::OtddCombined)
}
