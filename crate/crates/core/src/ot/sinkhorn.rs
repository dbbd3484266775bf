//! Log-domain stabilized Sinkhorn.
//!
//! The state is a pair of dual potentials `(f, g)`. Between absorptions the
//! solver runs ordinary scaling updates on the kernel
//! `K_ij = exp((f_i + g_j - C_ij) / eps)`, and folds the scalings back into
//! the potentials (`f += eps ln u`) before they leave a safe range. Rows or
//! columns that underflow are recovered with an exact soft-min update in the
//! log domain.

use alloc::vec;
use alloc::vec::Vec;

use super::{Method, OtSolution, SolverConfig};
use crate::dataset::{CostMatrix, Coupling};
use crate::error::{Error, Result};
use crate::math::{exp, ln, log_sum_exp};
use crate::matrix::DenseMatrix;
use crate::par;

/// Scalings outside `[1/ABSORB, ABSORB]` trigger an absorption.
const ABSORB: f64 = 1e50;
const COLUMN_CHUNK: usize = 256;

struct State<'a> {
    cost: &'a DenseMatrix,
    eps: f64,
    log_a: Vec<f64>,
    log_b: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    kernel: DenseMatrix,
}

impl<'a> State<'a> {
    /// `f_i = eps ln a_i - eps LSE_j((g_j - C_ij) / eps)`.
    fn soft_min_rows(&mut self) {
        let (cost, eps, g, log_a) = (self.cost, self.eps, &self.g, &self.log_a);
        par::fill_indexed(&mut self.f, |i| {
            if log_a[i] == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            let row = cost.row(i);
            let lse = log_sum_exp(g.iter().zip(row).map(|(gj, c)| (gj - c) / eps));
            eps * (log_a[i] - lse)
        });
    }

    fn soft_min_cols(&mut self) {
        let (cost, eps, f, log_b) = (self.cost, self.eps, &self.f, &self.log_b);
        let n = cost.rows();
        par::fill_indexed(&mut self.g, |j| {
            if log_b[j] == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            let lse = log_sum_exp((0..n).map(|i| (f[i] - cost[(i, j)]) / eps));
            eps * (log_b[j] - lse)
        });
    }

    fn rebuild_kernel(&mut self) {
        let (cost, eps, f, g) = (self.cost, self.eps, &self.f, &self.g);
        let m = cost.cols();
        par::for_each_row(self.kernel.as_mut_slice(), m, |i, out| {
            let row = cost.row(i);
            for (j, k) in out.iter_mut().enumerate() {
                *k = exp((f[i] + g[j] - row[j]) / eps);
            }
        });
    }

    fn absorb(&mut self, u: &mut [f64], v: &mut [f64]) {
        for (f, s) in self.f.iter_mut().zip(u.iter_mut()) {
            *f += self.eps * ln(*s);
            *s = 1.0;
        }
        for (g, s) in self.g.iter_mut().zip(v.iter_mut()) {
            *g += self.eps * ln(*s);
            *s = 1.0;
        }
        sanitize(&mut self.f);
        sanitize(&mut self.g);
    }

    fn potentials_finite(&self) -> bool {
        self.f.iter().chain(&self.g).all(|x| !x.is_nan() && *x != f64::INFINITY)
    }
}

/// Zero-weight rows are pinned at `-inf`; NaN stays NaN for detection.
fn sanitize(p: &mut [f64]) {
    for x in p.iter_mut() {
        if *x == f64::INFINITY {
            *x = f64::NAN;
        }
    }
}

fn kernel_times(kernel: &DenseMatrix, v: &[f64], out: &mut [f64]) {
    par::fill_indexed(out, |i| kernel.row(i).iter().zip(v).map(|(k, x)| k * x).sum());
}

fn kernel_transpose_times(kernel: &DenseMatrix, u: &[f64], out: &mut [f64]) {
    let n = kernel.rows();
    par::for_each_row(out, COLUMN_CHUNK, |chunk, slots| {
        let offset = chunk * COLUMN_CHUNK;
        slots.iter_mut().for_each(|s| *s = 0.0);
        for i in 0..n {
            let ui = u[i];
            if ui == 0.0 {
                continue;
            }
            let row = &kernel.row(i)[offset..offset + slots.len()];
            for (s, k) in slots.iter_mut().zip(row) {
                *s += k * ui;
            }
        }
    });
}

/// Scaling update `s_k = w_k / r_k`; false if a positive-weight entry has no
/// kernel mass left or a scaling escapes the safe range.
fn scale(weights: &[f64], reach: &[f64], out: &mut [f64]) -> bool {
    let mut safe = true;
    for ((s, &w), &r) in out.iter_mut().zip(weights).zip(reach) {
        if w == 0.0 {
            *s = 0.0;
            continue;
        }
        *s = w / r;
        if !(r > 0.0) || !s.is_finite() || *s > ABSORB || *s < 1.0 / ABSORB {
            safe = false;
        }
    }
    safe
}

pub(super) fn solve(cost: &CostMatrix, a: &[f64], b: &[f64], config: &SolverConfig) -> Result<OtSolution> {
    let eps = config.epsilon.resolve(cost);
    let values = cost.values();
    let (n, m) = (a.len(), b.len());
    let mut state = State {
        cost: values,
        eps,
        log_a: a.iter().map(|&w| ln(w)).collect(),
        log_b: b.iter().map(|&w| ln(w)).collect(),
        f: vec![0.0; n],
        g: vec![0.0; m],
        kernel: DenseMatrix::zeros(n, m),
    };
    state.soft_min_rows();
    state.soft_min_cols();
    if !state.potentials_finite() {
        return Err(Error::NonFinite("Sinkhorn potentials"));
    }
    state.rebuild_kernel();

    let mut u: Vec<f64> = a.iter().map(|&w| if w > 0.0 { 1.0 } else { 0.0 }).collect();
    let mut v: Vec<f64> = b.iter().map(|&w| if w > 0.0 { 1.0 } else { 0.0 }).collect();
    let mut row_reach = vec![0.0; n];
    let mut col_reach = vec![0.0; m];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < config.max_iterations {
        kernel_times(&state.kernel, &v, &mut row_reach);
        let row_error = u.iter().zip(&row_reach).zip(a).map(|((ui, r), ai)| (ui * r - ai).abs()).fold(0.0, f64::max);
        if row_error.is_nan() {
            return Err(Error::NonFinite("Sinkhorn marginals"));
        }
        if row_error <= config.tolerance {
            converged = true;
            break;
        }
        iterations += 1;

        if !scale(a, &row_reach, &mut u) {
            // Fold v in, then take an exact row step from the potentials.
            state.absorb(&mut vec![1.0; n], &mut v);
            state.soft_min_rows();
            u.iter_mut().zip(a).for_each(|(s, &w)| *s = if w > 0.0 { 1.0 } else { 0.0 });
            v.iter_mut().zip(b).for_each(|(s, &w)| *s = if w > 0.0 { 1.0 } else { 0.0 });
            state.rebuild_kernel();
        }
        kernel_transpose_times(&state.kernel, &u, &mut col_reach);
        if !scale(b, &col_reach, &mut v) {
            state.absorb(&mut u, &mut vec![1.0; m]);
            state.soft_min_cols();
            u.iter_mut().zip(a).for_each(|(s, &w)| *s = if w > 0.0 { 1.0 } else { 0.0 });
            v.iter_mut().zip(b).for_each(|(s, &w)| *s = if w > 0.0 { 1.0 } else { 0.0 });
            state.rebuild_kernel();
        }
        if !state.potentials_finite() {
            return Err(Error::NonFinite("Sinkhorn potentials"));
        }
    }

    let mut plan = state.kernel;
    par::for_each_row(plan.as_mut_slice(), m, |i, row| {
        for (p, vj) in row.iter_mut().zip(&v) {
            *p *= u[i] * vj;
        }
    });
    if plan.as_slice().iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("Sinkhorn coupling"));
    }
    let coupling = Coupling::new(plan, a, b)?;
    let transport_cost = coupling.transport_cost(cost);
    Ok(OtSolution {
        coupling,
        transport_cost,
        iterations_used: iterations,
        converged,
        method: Method::Sinkhorn,
        epsilon: Some(eps),
    })
}

#[cfg(test)]
mod tests {
    use super::super::{solve_exact, Epsilon};
    use super::*;
    use crate::dataset::MetricTag;

    fn cost(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> f64) -> CostMatrix {
        CostMatrix::new(DenseMatrix::from_fn(rows, cols, f), MetricTag::SquaredEuclideanFeatures).unwrap()
    }

    #[test]
    fn columns_exact_rows_within_tolerance() {
        let c = cost(7, 5, |i, j| ((i as f64) * 0.3 - (j as f64) * 0.4).powi(2));
        let a = vec![1.0 / 7.0; 7];
        let b = vec![0.1, 0.2, 0.3, 0.25, 0.15];
        let cfg = SolverConfig::sinkhorn();
        let s = solve(&c, &a, &b, &cfg).unwrap();
        assert!(s.converged);
        assert!(s.coupling.col_marginal_error() <= 1e-12);
        assert!(s.coupling.row_marginal_error() <= cfg.tolerance);
        assert!((s.coupling.total_mass() - 1.0).abs() <= 1e-6);
        assert_eq!(s.epsilon, Some(0.05 * c.mean()));
    }

    #[test]
    fn tiny_epsilon_stays_finite() {
        let c = cost(6, 6, |i, j| (((i * 7 + j * 3) % 11) as f64) * 10.0);
        let w = vec![1.0 / 6.0; 6];
        let cfg = SolverConfig {
            epsilon: Epsilon::RelativeToMeanCost(1e-4),
            max_iterations: 200_000,
            tolerance: 1e-13,
            ..SolverConfig::sinkhorn()
        };
        let s = solve(&c, &w, &w, &cfg).unwrap();
        let exact = solve_exact(&c, &w, &w).unwrap();
        assert!(s.converged);
        assert!(s.coupling.values().as_slice().iter().all(|p| p.is_finite() && *p >= 0.0));
        assert!(s.transport_cost >= exact.transport_cost - 1e-9);
        assert!(s.transport_cost - exact.transport_cost < 1e-3);
    }

    #[test]
    fn zero_weight_rows_get_no_mass() {
        let c = cost(3, 2, |i, j| (i + j) as f64);
        let s = solve(&c, &[0.5, 0.0, 0.5], &[0.4, 0.6], &SolverConfig::sinkhorn()).unwrap();
        assert!(s.converged);
        assert_eq!(s.coupling.values().row(1), &[0.0, 0.0]);
    }

    #[test]
    fn iteration_cap_reports_not_converged() {
        let c = cost(10, 10, |i, j| (((i * 7 + j * 3) % 11) as f64).sqrt());
        let w = vec![0.1; 10];
        let cfg = SolverConfig { epsilon: Epsilon::RelativeToMeanCost(0.001), max_iterations: 1, tolerance: 1e-14, ..SolverConfig::sinkhorn() };
        let s = solve(&c, &w, &w, &cfg).unwrap();
        assert!(!s.converged);
        assert_eq!(s.iterations_used, 1);
    }

    #[test]
    fn deterministic() {
        let c = cost(20, 15, |i, j| (((i * 13 + j * 7) % 17) as f64).sqrt());
        let a = vec![1.0 / 20.0; 20];
        let b = vec![1.0 / 15.0; 15];
        let cfg = SolverConfig::sinkhorn();
        let s1 = solve(&c, &a, &b, &cfg).unwrap();
        let s2 = solve(&c, &a, &b, &cfg).unwrap();
        assert_eq!(s1, s2);
    }
}
