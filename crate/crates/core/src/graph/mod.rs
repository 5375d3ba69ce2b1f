//! Undirected graphs in CSR form and the operators built on them.
//!
//! A [`SparseGraph`] is immutable once built. Every graph is symmetric:
//! edges are given once and stored in both directions. The degree-normalized
//! adjacency `Ã = D^{-1/2} A D^{-1/2}` lives in [`NormalizedAdjacency`] and is
//! what message passing multiplies by.

mod sample;
mod spectral;
mod synthetic;

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use sample::{induced_subgraph, neighbor_sample};
pub use spectral::{dense_eigenvalues, lambda_max, to_dense, DENSE_SPECTRAL_LIMIT};
pub use synthetic::{gnm_edges, make_synthetic, SbmParams, Synthetic, SyntheticKind};

/// Whether a unit self-loop is added to every node before normalization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SelfLoopPolicy {
    #[default]
    Add,
    KeepAsGiven,
}

impl SelfLoopPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            SelfLoopPolicy::Add => "add",
            SelfLoopPolicy::KeepAsGiven => "keep_as_given",
        }
    }
}

impl std::str::FromStr for SelfLoopPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "add" => Ok(SelfLoopPolicy::Add),
            "keep_as_given" | "keep" => Ok(SelfLoopPolicy::KeepAsGiven),
            other => Err(Error::invalid(format!(
                "unknown self-loop policy `{other}`"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
}

impl Edge {
    pub fn new(src: usize, dst: usize) -> Self {
        Self {
            src,
            dst,
            weight: 1.0,
        }
    }

    pub fn weighted(src: usize, dst: usize, weight: f64) -> Self {
        Self { src, dst, weight }
    }
}

impl From<(usize, usize)> for Edge {
    fn from((src, dst): (usize, usize)) -> Self {
        Edge::new(src, dst)
    }
}

impl From<(usize, usize, f64)> for Edge {
    fn from((src, dst, weight): (usize, usize, f64)) -> Self {
        Edge::weighted(src, dst, weight)
    }
}

/// Symmetric sparse matrix in CSR form, used both for adjacency matrices and
/// for the operators derived from them.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseGraph {
    num_nodes: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
    has_self_loops: bool,
    degrees: Vec<f64>,
}

/// Builds the canonical CSR graph from an undirected edge list.
///
/// Each edge is stored in both directions. Repeating an edge with the same
/// weight is harmless; repeating it with a different weight is an error.
pub fn build_graph<E: Into<Edge> + Copy>(
    edges: &[E],
    num_nodes: usize,
    policy: SelfLoopPolicy,
) -> Result<SparseGraph> {
    let mut triplets = Vec::with_capacity(2 * edges.len() + num_nodes);
    for &e in edges {
        let e: Edge = e.into();
        for idx in [e.src, e.dst] {
            if idx >= num_nodes {
                return Err(Error::NodeOutOfRange {
                    index: idx,
                    num_nodes,
                });
            }
        }
        if !e.weight.is_finite() {
            return Err(Error::NonFinite(format!(
                "weight of edge ({}, {})",
                e.src, e.dst
            )));
        }
        triplets.push((e.src, e.dst, e.weight));
        if e.src != e.dst {
            triplets.push((e.dst, e.src, e.weight));
        }
    }
    if policy == SelfLoopPolicy::Add {
        triplets.extend((0..num_nodes).map(|i| (i, i, 1.0)));
    }
    SparseGraph::from_triplets(num_nodes, triplets)
}

impl SparseGraph {
    /// Sorts and deduplicates `(row, col, value)` triplets into CSR. Callers
    /// are responsible for symmetry.
    fn from_triplets(num_nodes: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_offsets = vec![0usize; num_nodes + 1];
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                let prev = *values.last().expect("duplicate implies a previous entry");
                if prev != v {
                    return Err(Error::ConflictingWeight {
                        src: r,
                        dst: c,
                        first: prev,
                        second: v,
                    });
                }
                continue;
            }
            last = Some((r, c));
            row_offsets[r + 1] += 1;
            col_indices.push(c);
            values.push(v);
        }
        for i in 0..num_nodes {
            row_offsets[i + 1] += row_offsets[i];
        }
        Ok(Self::from_csr_unchecked(
            num_nodes,
            row_offsets,
            col_indices,
            values,
        ))
    }

    fn from_csr_unchecked(
        num_nodes: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        let mut degrees = vec![0.0; num_nodes];
        let mut loops = 0;
        for i in 0..num_nodes {
            for k in row_offsets[i]..row_offsets[i + 1] {
                degrees[i] += values[k];
                if col_indices[k] == i {
                    loops += 1;
                }
            }
        }
        Self {
            num_nodes,
            row_offsets,
            col_indices,
            values,
            has_self_loops: num_nodes > 0 && loops == num_nodes,
            degrees,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of stored entries (each undirected edge counts twice, a
    /// self-loop once).
    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// True when every node carries a self-loop.
    pub fn has_self_loops(&self) -> bool {
        self.has_self_loops
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    /// `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        self.col_indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// Neighbors of `i`, excluding `i` itself.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(i).map(|(j, _)| j).filter(move |&j| j != i)
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        self.col_indices[range.clone()]
            .binary_search(&j)
            .ok()
            .map(|k| self.values[range.start + k])
    }

    /// Number of undirected edges excluding self-loops.
    pub fn num_undirected_edges(&self) -> usize {
        let loops = (0..self.num_nodes)
            .filter(|&i| self.get(i, i).is_some())
            .count();
        (self.nnz() - loops) / 2
    }

    /// Undirected edge list (`src <= dst`), self-loops included.
    pub fn edges(&self) -> Vec<Edge> {
        (0..self.num_nodes)
            .flat_map(|i| {
                self.row(i)
                    .filter(move |&(j, _)| j >= i)
                    .map(move |(j, w)| Edge::weighted(i, j, w))
            })
            .collect()
    }

    /// Returns a copy with a unit self-loop on every node that lacks one.
    pub fn with_self_loops(&self) -> SparseGraph {
        let mut triplets: Vec<(usize, usize, f64)> =
            Vec::with_capacity(self.nnz() + self.num_nodes);
        for i in 0..self.num_nodes {
            triplets.extend(self.row(i).map(|(j, v)| (i, j, v)));
            if self.get(i, i).is_none() {
                triplets.push((i, i, 1.0));
            }
        }
        SparseGraph::from_triplets(self.num_nodes, triplets).expect("no duplicates by construction")
    }

    /// Checks `A == A^T` entrywise.
    pub fn is_symmetric(&self) -> bool {
        (0..self.num_nodes).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == Some(v)))
    }

    fn check_degrees(&self) -> Result<()> {
        match self.degrees.iter().position(|&d| d <= 0.0) {
            Some(i) => Err(Error::ZeroDegree(i)),
            None => Ok(()),
        }
    }

    /// Connected component id of every node, plus the component count.
    pub fn components(&self) -> (Vec<usize>, usize) {
        let mut comp = vec![usize::MAX; self.num_nodes];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..self.num_nodes {
            if comp[start] != usize::MAX {
                continue;
            }
            comp[start] = count;
            stack.push(start);
            while let Some(u) = stack.pop() {
                for v in self.neighbors(u) {
                    if comp[v] == usize::MAX {
                        comp[v] = count;
                        stack.push(v);
                    }
                }
            }
            count += 1;
        }
        (comp, count)
    }

    pub fn is_connected(&self) -> bool {
        self.components().1 <= 1
    }

    /// Sparse-dense product `self * x`, one row at a time.
    pub fn spmm(&self, x: &Tensor) -> Result<Tensor> {
        if x.rows() != self.num_nodes {
            return Err(Error::ShapeMismatch {
                op: "spmm",
                left: (self.num_nodes, self.num_nodes),
                right: x.shape(),
            });
        }
        let d = x.cols();
        let mut out = Tensor::zeros(self.num_nodes, d);
        for i in 0..self.num_nodes {
            let out_row = out.row_mut(i);
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                let v = self.values[k];
                let x_row = x.row(self.col_indices[k]);
                for (o, &xv) in out_row.iter_mut().zip(x_row) {
                    *o += v * xv;
                }
            }
        }
        Ok(out)
    }
}

/// Counts floating point operations, split into message passing (sparse
/// products) and dense work (matrix products).
#[derive(Debug, Default)]
pub struct FlopCounter {
    message: AtomicU64,
    dense: AtomicU64,
}

impl FlopCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_message(&self, n: u64) {
        self.message.fetch_add(n, Ordering::Relaxed);
    }

    pub fn add_dense(&self, n: u64) {
        self.dense.fetch_add(n, Ordering::Relaxed);
    }

    pub fn message(&self) -> u64 {
        self.message.load(Ordering::Relaxed)
    }

    pub fn dense(&self) -> u64 {
        self.dense.load(Ordering::Relaxed)
    }

    pub fn total(&self) -> u64 {
        self.message() + self.dense()
    }

    pub fn reset(&self) {
        self.message.store(0, Ordering::Relaxed);
        self.dense.store(0, Ordering::Relaxed);
    }
}

/// `Ã` with entries `w_ij / sqrt(deg_i deg_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency {
    graph: SparseGraph,
}

/// Rescales a graph's entries by `1/sqrt(deg_i deg_j)`. The source graph is
/// left untouched; isolated nodes are rejected.
pub fn normalize_adjacency(g: &SparseGraph) -> Result<NormalizedAdjacency> {
    g.check_degrees()?;
    let mut values = g.values.clone();
    for i in 0..g.num_nodes {
        for k in g.row_offsets[i]..g.row_offsets[i + 1] {
            values[k] /= (g.degrees[i] * g.degrees[g.col_indices[k]]).sqrt();
        }
    }
    Ok(NormalizedAdjacency {
        graph: SparseGraph::from_csr_unchecked(
            g.num_nodes,
            g.row_offsets.clone(),
            g.col_indices.clone(),
            values,
        ),
    })
}

impl NormalizedAdjacency {
    pub fn graph(&self) -> &SparseGraph {
        &self.graph
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes
    }

    pub fn nnz(&self) -> usize {
        self.graph.nnz()
    }

    /// `Ã X`.
    pub fn spmm(&self, x: &Tensor) -> Result<Tensor> {
        self.graph.spmm(x)
    }

    /// `Ã X`, adding `2 * nnz * cols` to the message-passing counter.
    pub fn spmm_counted(&self, x: &Tensor, counter: &FlopCounter) -> Result<Tensor> {
        let out = self.graph.spmm(x)?;
        counter.add_message(2 * (self.nnz() * x.cols()) as u64);
        Ok(out)
    }
}

/// Free-function form of [`NormalizedAdjacency::spmm`].
pub fn spmm(a: &NormalizedAdjacency, x: &Tensor) -> Result<Tensor> {
    a.spmm(x)
}

/// `L_norm = I - Ã`, stored sparsely with an explicit diagonal.
pub fn normalized_laplacian(g: &SparseGraph) -> Result<SparseGraph> {
    let a = normalize_adjacency(g)?;
    let mut triplets = Vec::with_capacity(a.nnz() + g.num_nodes);
    for i in 0..g.num_nodes {
        let mut diag = 1.0;
        for (j, v) in a.graph.row(i) {
            if j == i {
                diag -= v;
            } else {
                triplets.push((i, j, -v));
            }
        }
        triplets.push((i, i, diag));
    }
    SparseGraph::from_triplets(g.num_nodes, triplets)
}

/// Dirichlet energy `½ Σ_{(i,j)} w_ij ‖x_j/√deg_j − x_i/√deg_i‖²` over ordered
/// pairs. Self-loop terms are identically zero and skipped.
pub fn dirichlet_energy(g: &SparseGraph, x: &Tensor) -> Result<f64> {
    if x.rows() != g.num_nodes {
        return Err(Error::ShapeMismatch {
            op: "dirichlet_energy",
            left: (g.num_nodes, g.num_nodes),
            right: x.shape(),
        });
    }
    g.check_degrees()?;
    let inv_sqrt: Vec<f64> = g.degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut total = 0.0;
    for i in 0..g.num_nodes {
        let xi = x.row(i);
        for (j, w) in g.row(i) {
            if j == i {
                continue;
            }
            let xj = x.row(j);
            let sq: f64 = xi
                .iter()
                .zip(xj)
                .map(|(a, b)| {
                    let diff = b * inv_sqrt[j] - a * inv_sqrt[i];
                    diff * diff
                })
                .sum();
            total += w * sq;
        }
    }
    Ok(0.5 * total)
}

/// `E(X) / ‖X‖²_F`; zero for the zero signal.
pub fn normalized_dirichlet_energy(g: &SparseGraph, x: &Tensor) -> Result<f64> {
    let energy = dirichlet_energy(g, x)?;
    let norm_sq = x.data().iter().map(|v| v * v).sum::<f64>();
    Ok(if norm_sq > 0.0 { energy / norm_sq } else { 0.0 })
}

/// Per-layer Dirichlet energies of a feature trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyTrace {
    pub per_layer_energy: Vec<f64>,
    pub per_layer_normalized: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl EnergyTrace {
    /// Energies of each layer's features, with the spectral range of
    /// `L_norm` attached.
    pub fn from_layers(g: &SparseGraph, layers: &[Tensor]) -> Result<Self> {
        let mut per_layer_energy = Vec::with_capacity(layers.len());
        let mut per_layer_normalized = Vec::with_capacity(layers.len());
        for x in layers {
            let e = dirichlet_energy(g, x)?;
            let norm_sq = x.data().iter().map(|v| v * v).sum::<f64>();
            per_layer_energy.push(e);
            per_layer_normalized.push(if norm_sq > 0.0 { e / norm_sq } else { 0.0 });
        }
        Ok(Self {
            per_layer_energy,
            per_layer_normalized,
            lambda_min: 0.0,
            lambda_max: lambda_max(g)?,
        })
    }
}
