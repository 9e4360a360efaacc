//! Linear optimization oracles `w*(c) in argmax_{w in S} c'w`.
//!
//! Both shipped regions are 0/1 polytopes and the oracles return vertices.
//! Ties are broken toward the lower item or edge index, and a knapsack item
//! with cost exactly zero is never taken, so `w*(0) = 0` and every oracle is
//! a deterministic, scale-free function of `c`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::types::dot;

/// A feasible region `S` together with its linear maximization oracle.
pub trait DecisionOracle: Send + Sync {
    fn dim(&self) -> usize;

    /// Writes a maximizing vertex of `c'w` into `out`.
    fn solve_into(&self, c: &[f64], out: &mut [f64]);

    fn solve(&self, c: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        self.solve_into(c, out.as_mut_slice());
        out
    }

    /// All vertices, when the region is small enough to enumerate.
    fn vertices(&self) -> Option<Vec<DVector<f64>>>;

    /// Whether `w` is a vertex of `S`.
    fn is_vertex(&self, w: &[f64]) -> bool;

    /// An upper bound on `max_{w in S} ||V'w||_2`.
    fn consumption_bound(&self, consumption: &DMatrix<f64>) -> f64;
}

/// `S = {w : sum(w) <= k, 0 <= w <= 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KnapsackRegion {
    pub d: usize,
    pub k: usize,
}

impl KnapsackRegion {
    pub fn new(d: usize, k: usize) -> Result<Self> {
        if d == 0 || k == 0 || k > d {
            return Err(Error::Config(format!(
                "knapsack needs 1 <= k <= d, got d={d}, k={k}"
            )));
        }
        Ok(Self { d, k })
    }
}

/// Top-k strictly positive entries, lower index first among equals.
pub fn knapsack_solve(c: &[f64], region: &KnapsackRegion, out: &mut [f64]) {
    assert_eq!(c.len(), region.d, "knapsack cost length");
    out.fill(0.0);
    for _ in 0..region.k {
        let mut best: Option<usize> = None;
        for (j, &cj) in c.iter().enumerate() {
            if out[j] != 0.0 || !(cj > 0.0) {
                continue;
            }
            match best {
                Some(b) if c[b] >= cj => {}
                _ => best = Some(j),
            }
        }
        match best {
            Some(j) => out[j] = 1.0,
            None => break,
        }
    }
}

impl DecisionOracle for KnapsackRegion {
    fn dim(&self) -> usize {
        self.d
    }

    fn solve_into(&self, c: &[f64], out: &mut [f64]) {
        knapsack_solve(c, self, out);
    }

    fn vertices(&self) -> Option<Vec<DVector<f64>>> {
        if self.d > 20 {
            return None;
        }
        let mut out = Vec::new();
        for mask in 0u32..(1u32 << self.d) {
            if (mask.count_ones() as usize) <= self.k {
                out.push(DVector::from_fn(self.d, |j, _| ((mask >> j) & 1) as f64));
            }
        }
        Some(out)
    }

    fn is_vertex(&self, w: &[f64]) -> bool {
        w.len() == self.d
            && w.iter().all(|&x| x == 0.0 || x == 1.0)
            && w.iter().filter(|&&x| x == 1.0).count() <= self.k
    }

    fn consumption_bound(&self, consumption: &DMatrix<f64>) -> f64 {
        top_row_norm_sum(consumption, self.k)
    }
}

/// Direction of a grid edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Heading {
    East,
    North,
}

/// Monotone paths on an `n x n` grid from the southwest to the northeast
/// corner.
///
/// Node `(row, col)` has index `row * n + col`, with row 0 the southern edge
/// and column 0 the western edge. Edges are numbered by tail node index, the
/// east edge of a node before its north edge, which gives `2n(n-1)` edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridPathRegion {
    n: usize,
    edges: Vec<(usize, usize, Heading)>,
    east: Vec<Option<usize>>,
    north: Vec<Option<usize>>,
}

impl GridPathRegion {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("grid side must be >= 2, got {n}")));
        }
        let nodes = n * n;
        let mut edges = Vec::with_capacity(2 * n * (n - 1));
        let mut east = vec![None; nodes];
        let mut north = vec![None; nodes];
        for node in 0..nodes {
            let (row, col) = (node / n, node % n);
            if col + 1 < n {
                east[node] = Some(edges.len());
                edges.push((node, node + 1, Heading::East));
            }
            if row + 1 < n {
                north[node] = Some(edges.len());
                edges.push((node, node + n, Heading::North));
            }
        }
        Ok(Self {
            n,
            edges,
            east,
            north,
        })
    }

    pub fn side(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edges used by every path.
    pub fn path_length(&self) -> usize {
        2 * (self.n - 1)
    }

    /// `(tail, head, heading)` of edge `e`.
    pub fn edge(&self, e: usize) -> (usize, usize, Heading) {
        self.edges[e]
    }

    fn source(&self) -> usize {
        0
    }

    fn sink(&self) -> usize {
        self.n * self.n - 1
    }
}

/// Longest path by dynamic programming in reverse node order (every edge
/// points to a higher node index). At each node the east edge wins ties.
pub fn grid_path_solve(c: &[f64], region: &GridPathRegion, out: &mut [f64]) {
    assert_eq!(c.len(), region.num_edges(), "grid cost length");
    let nodes = region.n * region.n;
    let mut value = vec![0.0f64; nodes];
    let mut choice = vec![usize::MAX; nodes];
    for node in (0..region.sink()).rev() {
        let mut best = f64::NEG_INFINITY;
        for e in [region.east[node], region.north[node]].into_iter().flatten() {
            let head = region.edges[e].1;
            let cand = c[e] + value[head];
            if cand > best {
                best = cand;
                choice[node] = e;
            }
        }
        value[node] = best;
    }
    out.fill(0.0);
    let mut node = region.source();
    while node != region.sink() {
        let e = choice[node];
        out[e] = 1.0;
        node = region.edges[e].1;
    }
}

impl DecisionOracle for GridPathRegion {
    fn dim(&self) -> usize {
        self.num_edges()
    }

    fn solve_into(&self, c: &[f64], out: &mut [f64]) {
        grid_path_solve(c, self, out);
    }

    fn vertices(&self) -> Option<Vec<DVector<f64>>> {
        if self.n > 8 {
            return None;
        }
        let mut paths = Vec::new();
        let mut current = vec![0.0; self.num_edges()];
        self.enumerate_from(self.source(), &mut current, &mut paths);
        Some(paths)
    }

    fn is_vertex(&self, w: &[f64]) -> bool {
        if w.len() != self.num_edges() || !w.iter().all(|&x| x == 0.0 || x == 1.0) {
            return false;
        }
        let nodes = self.n * self.n;
        let mut inflow = vec![0.0; nodes];
        let mut outflow = vec![0.0; nodes];
        for (e, &(tail, head, _)) in self.edges.iter().enumerate() {
            outflow[tail] += w[e];
            inflow[head] += w[e];
        }
        (0..nodes).all(|v| {
            if v == self.source() {
                outflow[v] == 1.0 && inflow[v] == 0.0
            } else if v == self.sink() {
                inflow[v] == 1.0 && outflow[v] == 0.0
            } else {
                inflow[v] == outflow[v] && inflow[v] <= 1.0
            }
        })
    }

    fn consumption_bound(&self, consumption: &DMatrix<f64>) -> f64 {
        top_row_norm_sum(consumption, self.path_length())
    }
}

impl GridPathRegion {
    fn enumerate_from(&self, node: usize, current: &mut Vec<f64>, paths: &mut Vec<DVector<f64>>) {
        if node == self.sink() {
            paths.push(DVector::from_column_slice(current));
            return;
        }
        for e in [self.east[node], self.north[node]].into_iter().flatten() {
            current[e] = 1.0;
            self.enumerate_from(self.edges[e].1, current, paths);
            current[e] = 0.0;
        }
    }
}

/// The decision regions shipped with the simulator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Region {
    Knapsack(KnapsackRegion),
    GridPath(GridPathRegion),
}

impl DecisionOracle for Region {
    fn dim(&self) -> usize {
        match self {
            Region::Knapsack(r) => r.dim(),
            Region::GridPath(r) => r.dim(),
        }
    }

    fn solve_into(&self, c: &[f64], out: &mut [f64]) {
        match self {
            Region::Knapsack(r) => r.solve_into(c, out),
            Region::GridPath(r) => r.solve_into(c, out),
        }
    }

    fn vertices(&self) -> Option<Vec<DVector<f64>>> {
        match self {
            Region::Knapsack(r) => r.vertices(),
            Region::GridPath(r) => r.vertices(),
        }
    }

    fn is_vertex(&self, w: &[f64]) -> bool {
        match self {
            Region::Knapsack(r) => r.is_vertex(w),
            Region::GridPath(r) => r.is_vertex(w),
        }
    }

    fn consumption_bound(&self, consumption: &DMatrix<f64>) -> f64 {
        match self {
            Region::Knapsack(r) => r.consumption_bound(consumption),
            Region::GridPath(r) => r.consumption_bound(consumption),
        }
    }
}

fn top_row_norm_sum(consumption: &DMatrix<f64>, count: usize) -> f64 {
    let mut norms: Vec<f64> = consumption.row_iter().map(|row| row.norm()).collect();
    norms.sort_by(|a, b| b.total_cmp(a));
    norms.iter().take(count).sum()
}

/// `c'w`, summed in index order so every caller agrees bit for bit.
pub fn objective(c: &[f64], w: &[f64]) -> f64 {
    dot(c, w)
}

/// Argmax of `c'w` over an explicit vertex list; the first maximizer wins.
pub fn brute_force_solve(c: &[f64], vertices: &[DVector<f64>]) -> Result<DVector<f64>> {
    let mut best: Option<(f64, &DVector<f64>)> = None;
    for v in vertices {
        let val = objective(c, v.as_slice());
        match best {
            Some((b, _)) if b >= val => {}
            _ => best = Some((val, v)),
        }
    }
    best.map(|(_, v)| v.clone())
        .ok_or_else(|| Error::Usage("brute-force oracle needs at least one vertex".into()))
}
