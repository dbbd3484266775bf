//! Transportation simplex on the spanning-tree basis of the bipartite graph.
//!
//! Nodes `0..n` are sources, `n..n+m` targets. A basis is a spanning tree of
//! `n+m-1` cells. Potentials satisfy `cost_ij = u_i + v_j` on tree cells; a
//! nonbasic cell with negative reduced cost enters, the cycle it closes is
//! pushed, and the first blocking cell leaves.
//!
//! Pricing scans blocks of cells and takes the most negative candidate per
//! block. Degeneracy is resolved with Orden's perturbation: every source
//! supply gains `ε` and the last target demand `nε`, carried symbolically as
//! an integer coefficient next to each flow. Every basis of the perturbed
//! problem is nondegenerate, so each pivot strictly decreases the
//! lexicographic objective and the method cannot cycle. Remaining ratio-test
//! ties go to the lowest cell index. Final flows are recomputed from the true
//! marginals.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use super::{Method, OtSolution};
use crate::dataset::{CostMatrix, Coupling};
use crate::error::{Error, Result};
use crate::math;
use crate::matrix::DenseMatrix;

pub const DEFAULT_EXACT_CELL_CAP: usize = 250_000;

const NONE: usize = usize::MAX;

/// Flows at or below this gap compare by their `ε` coefficient.
const FLOW_TIE: f64 = 1e-14;

/// `value + perturbation · ε` for an infinitesimal `ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Flow {
    value: f64,
    perturbation: i64,
}

impl Flow {
    fn new(value: f64, perturbation: i64) -> Self {
        Self { value, perturbation }
    }

    fn less_than(self, other: Flow) -> bool {
        if (self.value - other.value).abs() > FLOW_TIE {
            self.value < other.value
        } else {
            self.perturbation < other.perturbation
        }
    }

    fn minus(self, other: Flow) -> Flow {
        Flow::new(self.value - other.value, self.perturbation - other.perturbation)
    }

    fn plus(self, other: Flow) -> Flow {
        Flow::new(self.value + other.value, self.perturbation + other.perturbation)
    }
}

struct Basis<'a> {
    n: usize,
    m: usize,
    cost: &'a DenseMatrix,
    /// Tree edge slot -> cell (source, target).
    cells: Vec<(usize, usize)>,
    flow: Vec<Flow>,
    /// Node -> incident edge slots.
    adjacency: Vec<Vec<usize>>,
    parent: Vec<usize>,
    parent_edge: Vec<usize>,
    depth: Vec<usize>,
    potential: Vec<f64>,
    queue: VecDeque<usize>,
}

impl<'a> Basis<'a> {
    /// North-west corner rule on the perturbed marginals. The perturbation
    /// makes every step exhaust exactly one of the current row and column.
    fn north_west_corner(cost: &'a DenseMatrix, a: &[f64], b: &[f64]) -> Self {
        let (n, m) = (a.len(), b.len());
        let supply = |i: usize| Flow::new(a[i], 1);
        let demand = |j: usize| Flow::new(b[j], if j == m - 1 { n as i64 } else { 0 });
        let mut cells = Vec::with_capacity(n + m - 1);
        let mut flow = Vec::with_capacity(n + m - 1);
        let (mut i, mut j) = (0, 0);
        let (mut left, mut need) = (supply(0), demand(0));
        loop {
            cells.push((i, j));
            if i == n - 1 && j == m - 1 {
                flow.push(left);
                break;
            }
            if j == m - 1 || (i < n - 1 && left.less_than(need)) {
                flow.push(left);
                need = need.minus(left);
                i += 1;
                left = supply(i);
            } else {
                flow.push(need);
                left = left.minus(need);
                j += 1;
                need = demand(j);
            }
        }
        let nodes = n + m;
        let mut adjacency = vec![Vec::new(); nodes];
        for (slot, &(i, j)) in cells.iter().enumerate() {
            adjacency[i].push(slot);
            adjacency[n + j].push(slot);
        }
        let mut basis = Self {
            n,
            m,
            cost,
            cells,
            flow,
            adjacency,
            parent: vec![NONE; nodes],
            parent_edge: vec![NONE; nodes],
            depth: vec![0; nodes],
            potential: vec![0.0; nodes],
            queue: VecDeque::with_capacity(nodes),
        };
        basis.rebuild_tree();
        basis
    }

    #[inline]
    fn endpoints(&self, slot: usize) -> (usize, usize) {
        let (i, j) = self.cells[slot];
        (i, self.n + j)
    }

    /// Re-roots the tree at node 0 and recomputes depths and potentials.
    fn rebuild_tree(&mut self) {
        let nodes = self.n + self.m;
        self.parent.iter_mut().for_each(|p| *p = NONE);
        self.parent[0] = 0;
        self.parent_edge[0] = NONE;
        self.depth[0] = 0;
        self.potential[0] = 0.0;
        self.queue.clear();
        self.queue.push_back(0);
        let mut seen = 1;
        while let Some(x) = self.queue.pop_front() {
            for k in 0..self.adjacency[x].len() {
                let slot = self.adjacency[x][k];
                let (r, c) = self.endpoints(slot);
                let y = if r == x { c } else { r };
                if self.parent[y] != NONE {
                    continue;
                }
                let (i, j) = self.cells[slot];
                self.parent[y] = x;
                self.parent_edge[y] = slot;
                self.depth[y] = self.depth[x] + 1;
                self.potential[y] = self.cost[(i, j)] - self.potential[x];
                seen += 1;
                self.queue.push_back(y);
            }
        }
        debug_assert_eq!(seen, nodes, "basis is not a spanning tree");
    }

    #[inline]
    fn reduced_cost(&self, i: usize, j: usize) -> f64 {
        self.cost[(i, j)] - self.potential[i] - self.potential[self.n + j]
    }

    /// Tree path from target node `n+j` to source node `i`, as edge slots.
    fn cycle(&self, i: usize, j: usize, path: &mut Vec<usize>) {
        path.clear();
        let mut tail = Vec::new();
        let (mut x, mut y) = (self.n + j, i);
        while self.depth[x] > self.depth[y] {
            path.push(self.parent_edge[x]);
            x = self.parent[x];
        }
        while self.depth[y] > self.depth[x] {
            tail.push(self.parent_edge[y]);
            y = self.parent[y];
        }
        while x != y {
            path.push(self.parent_edge[x]);
            x = self.parent[x];
            tail.push(self.parent_edge[y]);
            y = self.parent[y];
        }
        path.extend(tail.into_iter().rev());
    }

    /// Pushes flow around the cycle closed by `(i, j)`. Returns whether real
    /// (unperturbed) mass moved.
    fn pivot(&mut self, i: usize, j: usize, path: &mut Vec<usize>) -> bool {
        self.cycle(i, j, path);
        // Even positions lose flow, odd positions gain it.
        let m = self.m;
        let index = |cells: &[(usize, usize)], s: usize| cells[s].0 * m + cells[s].1;
        let mut leave = path[0];
        for &slot in path.iter().step_by(2).skip(1) {
            let (f, g) = (self.flow[slot], self.flow[leave]);
            if f.less_than(g) || (!g.less_than(f) && index(&self.cells, slot) < index(&self.cells, leave)) {
                leave = slot;
            }
        }
        let theta = self.flow[leave];
        for (k, &slot) in path.iter().enumerate() {
            self.flow[slot] = if k % 2 == 0 { self.flow[slot].minus(theta) } else { self.flow[slot].plus(theta) };
        }
        let (r, c) = self.endpoints(leave);
        for node in [r, c] {
            let pos = self.adjacency[node].iter().position(|&s| s == leave).expect("edge in adjacency");
            self.adjacency[node].swap_remove(pos);
        }
        self.cells[leave] = (i, j);
        self.flow[leave] = theta;
        self.adjacency[i].push(leave);
        self.adjacency[self.n + j].push(leave);
        self.rebuild_tree();
        theta.value.abs() > FLOW_TIE
    }

    /// Flows of the tree for the true marginals, by peeling leaves. Drops the
    /// perturbation and any drift accumulated over many pivots.
    fn final_flows(&mut self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cells.len()];
        let nodes = self.n + self.m;
        let mut residual: Vec<f64> = a.iter().chain(b).copied().collect();
        let mut degree: Vec<usize> = self.adjacency.iter().map(Vec::len).collect();
        let mut done = vec![false; self.cells.len()];
        self.queue.clear();
        self.queue.extend((0..nodes).filter(|&x| degree[x] == 1));
        while let Some(x) = self.queue.pop_front() {
            if degree[x] != 1 {
                continue;
            }
            let Some(&slot) = self.adjacency[x].iter().find(|&&s| !done[s]) else { continue };
            done[slot] = true;
            let (r, c) = self.endpoints(slot);
            let y = if r == x { c } else { r };
            let f = residual[x].max(0.0);
            out[slot] = f;
            residual[x] = 0.0;
            residual[y] -= f;
            degree[x] -= 1;
            degree[y] -= 1;
            if degree[y] == 1 {
                self.queue.push_back(y);
            }
        }
        out
    }
}

pub(super) fn solve(cost: &CostMatrix, a: &[f64], b: &[f64]) -> Result<OtSolution> {
    let values = cost.values();
    let (n, m) = (a.len(), b.len());
    let cells = n * m;
    let scale = values.as_slice().iter().fold(1.0f64, |acc, &c| acc.max(c));
    let tolerance = 1e-11 * scale;
    let block = (math::sqrt(cells as f64) as usize).max(16).min(cells);
    let pivot_limit = 1000 + 50 * cells.max(1) * (n + m);

    let mut basis = Basis::north_west_corner(values, a, b);
    let mut path = Vec::with_capacity(n + m);
    let mut cursor = 0usize;
    let mut pivots = 0usize;

    while let Some((i, j)) = block_search(&basis, &mut cursor, block, tolerance) {
        basis.pivot(i, j, &mut path);
        pivots += 1;
        if pivots > pivot_limit {
            return Err(Error::PivotLimit(pivot_limit));
        }
    }

    let flows = basis.final_flows(a, b);
    let mut plan = DenseMatrix::zeros(n, m);
    for (slot, &(i, j)) in basis.cells.iter().enumerate() {
        plan[(i, j)] = flows[slot];
    }
    let coupling = Coupling::new(plan, a, b)?;
    let transport_cost = coupling.transport_cost(cost);
    Ok(OtSolution {
        coupling,
        transport_cost,
        iterations_used: pivots,
        converged: true,
        method: Method::Exact,
        epsilon: None,
    })
}

/// Scans cyclically from `cursor` in blocks; returns the most negative cell
/// of the first block containing one.
fn block_search(basis: &Basis<'_>, cursor: &mut usize, block: usize, tolerance: f64) -> Option<(usize, usize)> {
    let cells = basis.n * basis.m;
    let mut best = None;
    let mut best_value = -tolerance;
    let mut scanned_in_block = 0;
    for step in 0..cells {
        let index = (*cursor + step) % cells;
        let (i, j) = (index / basis.m, index % basis.m);
        let r = basis.reduced_cost(i, j);
        if r < best_value {
            best_value = r;
            best = Some((i, j));
        }
        scanned_in_block += 1;
        if scanned_in_block == block {
            scanned_in_block = 0;
            if best.is_some() {
                *cursor = (index + 1) % cells;
                return best;
            }
        }
    }
    if best.is_some() {
        *cursor = 0;
    }
    best
}
