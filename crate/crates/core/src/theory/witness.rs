use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{build_graph, normalize_adjacency, NormalizedAdjacency, SelfLoopPolicy};
use crate::io::ExperimentReport;
use crate::seed::derive_seed;
use crate::tensor::Tensor;

/// `Ã` of the complete graph `K_n` with self-loops: every entry is `1/n`.
pub fn complete_adjacency(n: usize) -> Result<NormalizedAdjacency> {
    let edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    normalize_adjacency(&build_graph(&edges, n, SelfLoopPolicy::Add)?)
}

/// A nonzero input that the residual-free convolution maps to zero.
#[derive(Clone, Debug)]
pub struct KernelWitness {
    /// `X = u wᵀ` with `u = e₁ − e₂`.
    pub x: Tensor,
    /// `‖Ã X W‖_F`.
    pub residual_norm: f64,
    /// `‖X‖_F`.
    pub witness_norm: f64,
}

/// Builds `X = (e₁ − e₂) wᵀ` with `w ~ N(0, I_D)` drawn from `seed` and
/// measures `‖Ã X W‖_F` on the complete graph with `n` nodes.
pub fn kernel_witness(n: usize, w: &Tensor, seed: u64) -> Result<KernelWitness> {
    if n < 2 {
        return Err(Error::invalid(format!(
            "kernel witness needs at least 2 nodes, got {n}"
        )));
    }
    let d = w.rows();
    let adj = complete_adjacency(n)?;
    let wvec = Tensor::randn(1, d, 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
    let mut x = Tensor::zeros(n, d);
    x.row_mut(0).copy_from_slice(wvec.row(0));
    for (dst, src) in x.row_mut(1).iter_mut().zip(wvec.row(0)) {
        *dst = -src;
    }
    let residual_norm = adj.spmm(&x)?.matmul(w)?.frobenius_norm();
    let witness_norm = x.frobenius_norm();
    Ok(KernelWitness {
        x,
        residual_norm,
        witness_norm,
    })
}

/// For every `n` in `sizes`, `trials` random `W ~ N(0, 1)` of size `d x d`;
/// one row per `n` with the worst residual and the smallest witness norm.
pub fn kernel_sweep(
    sizes: &[usize],
    d: usize,
    trials: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    if d == 0 || trials == 0 {
        return Err(Error::invalid("kernel sweep needs d >= 1 and trials >= 1"));
    }
    let mut report = ExperimentReport::new(
        "kernel_witness",
        &["n", "d", "trials", "max_residual", "min_witness_norm"],
    );
    report.note("graph", "complete graph with self-loops");
    report.note("witness", "X = (e1 - e2) w^T");
    report.note("seed", seed);
    for &n in sizes {
        let mut max_residual: f64 = 0.0;
        let mut min_norm = f64::INFINITY;
        let mut residuals = Vec::with_capacity(trials);
        for t in 0..trials {
            let s = derive_seed(seed, &[n as u64, t as u64]);
            let w = Tensor::randn(
                d,
                d,
                1.0,
                &mut ChaCha8Rng::seed_from_u64(derive_seed(s, &[0])),
            );
            let k = kernel_witness(n, &w, derive_seed(s, &[1]))?;
            max_residual = max_residual.max(k.residual_norm);
            min_norm = min_norm.min(k.witness_norm);
            residuals.push(k.residual_norm);
        }
        report.push_row(vec![
            n.into(),
            d.into(),
            trials.into(),
            max_residual.into(),
            min_norm.into(),
        ])?;
        report.add_series(format!("residual/n{n}"), residuals);
    }
    Ok(report)
}
