//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use otshift_core::{make_dataset, DenseMatrix, LabeledDataset, RankedPair};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

/// Simplex vector with weights k/total for random integers k in 1..=5.
pub fn rational_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let ks: Vec<u32> = (0..n).map(|_| rng.random_range(1..=5)).collect();
    let total: u32 = ks.iter().sum();
    ks.iter().map(|&k| k as f64 / total as f64).collect()
}

pub fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Dataset whose every class in 0..classes is present.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, d: usize, classes: usize) -> LabeledDataset {
    let features = random_matrix(rng, n, d, 0.0, 1.0);
    let labels = (0..n).map(|i| if i < classes { i } else { rng.random_range(0..classes) }).collect();
    make_dataset(features, labels, None).unwrap()
}

pub fn brute_squared_euclidean(a: &DenseMatrix, b: &DenseMatrix) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; b.rows()]; a.rows()];
    for i in 0..a.rows() {
        for j in 0..b.rows() {
            for k in 0..a.cols() {
                let t = a[(i, k)] - b[(j, k)];
                out[i][j] += t * t;
            }
        }
    }
    out
}

/// Solves `A x = rhs` for a tall system; `None` unless it has full column
/// rank and is consistent.
fn solve_tall(mut a: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let (rows, cols) = (a.len(), a[0].len());
    let mut pivot_row = 0;
    for col in 0..cols {
        let best = (pivot_row..rows).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[best][col].abs() < 1e-12 {
            return None;
        }
        a.swap(pivot_row, best);
        rhs.swap(pivot_row, best);
        for r in 0..rows {
            if r != pivot_row {
                let f = a[r][col] / a[pivot_row][col];
                for c in 0..cols {
                    a[r][c] -= f * a[pivot_row][c];
                }
                rhs[r] -= f * rhs[pivot_row];
            }
        }
        pivot_row += 1;
    }
    if (pivot_row..rows).any(|r| rhs[r].abs() > 1e-12) {
        return None;
    }
    Some((0..cols).map(|c| rhs[c] / a[c][c]).collect())
}

/// Minimum of the objective over every vertex of the transportation
/// polytope, found by trying each set of `n + m - 1` support cells.
pub fn vertex_enumeration_min(cost: &DenseMatrix, a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len(), b.len());
    let cells = n * m;
    let size = n + m - 1;
    let rhs: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << cells) {
        if mask.count_ones() as usize != size {
            continue;
        }
        let support: Vec<usize> = (0..cells).filter(|&c| mask & (1 << c) != 0).collect();
        let system: Vec<Vec<f64>> = (0..n + m)
            .map(|r| {
                support
                    .iter()
                    .map(|&c| if (r < n && c / m == r) || (r >= n && c % m == r - n) { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        if let Some(x) = solve_tall(system, rhs.clone()) {
            if x.iter().all(|&v| v >= -1e-12) {
                let value: f64 = support.iter().zip(&x).map(|(&c, &v)| cost[(c / m, c % m)] * v).sum();
                best = best.min(value);
            }
        }
    }
    best
}

/// Every cell passing the floor, sorted by score then index.
pub fn brute_rank(plan: &DenseMatrix, cost: &DenseMatrix, k: usize, floor: f64) -> (Vec<RankedPair>, Vec<RankedPair>) {
    let mut all = Vec::new();
    for i in 0..plan.rows() {
        for j in 0..plan.cols() {
            let p = plan[(i, j)];
            if p >= floor && p > 0.0 {
                let c = cost[(i, j)];
                all.push(RankedPair { source_index: i, target_index: j, ground_cost: c, coupling_mass: p, score: c * p });
            }
        }
    }
    let mut asc = all.clone();
    asc.sort_by(|x, y| {
        x.score.partial_cmp(&y.score).unwrap().then((x.source_index, x.target_index).cmp(&(y.source_index, y.target_index)))
    });
    let mut desc = all;
    desc.sort_by(|x, y| {
        y.score.partial_cmp(&x.score).unwrap().then((x.source_index, x.target_index).cmp(&(y.source_index, y.target_index)))
    });
    asc.truncate(k);
    desc.truncate(k);
    (asc, desc)
}

pub fn median_of_positive(plan: &DenseMatrix) -> f64 {
    let mut v: Vec<f64> = plan.as_slice().iter().copied().filter(|&p| p > 0.0).collect();
    v.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 }
}

pub type Square = Vec<Vec<f64>>;

pub fn to_square(m: &DenseMatrix) -> Square {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn matmul(a: &Square, b: &Square) -> Square {
    let n = a.len();
    let k = b.len();
    let m = b[0].len();
    (0..n).map(|i| (0..m).map(|j| (0..k).map(|t| a[i][t] * b[t][j]).sum()).collect()).collect()
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix: `(values, vectors)`
/// with eigenvectors as columns.
pub fn jacobi_eigen(a: &Square) -> (Vec<f64>, Square) {
    let n = a.len();
    let mut a = a.clone();
    let mut v: Square = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

pub fn jacobi_sqrt(a: &Square) -> Square {
    let (values, v) = jacobi_eigen(a);
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| v[i][k] * values[k].max(0.0).sqrt() * v[j][k]).sum()).collect())
        .collect()
}

/// Squared 2-Wasserstein distance between Gaussians via Jacobi rotations.
pub fn bures_oracle(mu_p: &[f64], cov_p: &Square, mu_q: &[f64], cov_q: &Square) -> f64 {
    let mean: f64 = mu_p.iter().zip(mu_q).map(|(x, y)| (x - y) * (x - y)).sum();
    let root = jacobi_sqrt(cov_p);
    let mut inner = matmul(&matmul(&root, cov_q), &root);
    let n = inner.len();
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (inner[i][j] + inner[j][i]);
            inner[i][j] = s;
            inner[j][i] = s;
        }
    }
    let (values, _) = jacobi_eigen(&inner);
    let cross: f64 = values.iter().map(|l| l.max(0.0).sqrt()).sum();
    let trace = |m: &Square| (0..n).map(|i| m[i][i]).sum::<f64>();
    mean + trace(cov_p) + trace(cov_q) - 2.0 * cross
}

/// `BᵀB` for a random `rank × d` matrix B.
pub fn random_psd(rng: &mut ChaCha8Rng, d: usize, rank: usize) -> DenseMatrix {
    let b = random_matrix(rng, rank, d, -1.0, 1.0);
    DenseMatrix::from_fn(d, d, |i, j| (0..rank).map(|t| b[(t, i)] * b[(t, j)]).sum())
}
