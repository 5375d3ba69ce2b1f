use nalgebra::{DMatrix, DVector};

use super::{normalized_laplacian, SparseGraph};
use crate::error::{Error, Result};

/// Largest matrix size handed to the dense symmetric eigensolver.
pub const DENSE_SPECTRAL_LIMIT: usize = 256;

pub fn to_dense(g: &SparseGraph) -> DMatrix<f64> {
    let n = g.num_nodes();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for (j, v) in g.row(i) {
            m[(i, j)] = v;
        }
    }
    m
}

/// All eigenvalues of a symmetric sparse matrix, ascending. Refuses matrices
/// larger than [`DENSE_SPECTRAL_LIMIT`].
pub fn dense_eigenvalues(g: &SparseGraph) -> Result<Vec<f64>> {
    let n = g.num_nodes();
    if n > DENSE_SPECTRAL_LIMIT {
        return Err(Error::TooLarge {
            dim: n,
            limit: DENSE_SPECTRAL_LIMIT,
        });
    }
    let mut eig: Vec<f64> = to_dense(g)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// Largest eigenvalue of `L_norm`: exact for small graphs, power iteration
/// beyond [`DENSE_SPECTRAL_LIMIT`] nodes.
pub fn lambda_max(g: &SparseGraph) -> Result<f64> {
    let lap = normalized_laplacian(g)?;
    let n = lap.num_nodes();
    if n == 0 {
        return Ok(0.0);
    }
    if n <= DENSE_SPECTRAL_LIMIT {
        return Ok(*dense_eigenvalues(&lap)?.last().expect("n > 0"));
    }
    // deterministic start vector with no special structure
    let mut v = DVector::from_fn(n, |i, _| ((i as f64 + 1.0) * 0.754_877_666).fract() - 0.5);
    v /= v.norm();
    let mut estimate = 0.0;
    for _ in 0..2000 {
        let mut w = DVector::zeros(n);
        for i in 0..n {
            w[i] = lap.row(i).map(|(j, val)| val * v[j]).sum();
        }
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        v = w / norm;
        if (next - estimate).abs() < 1e-12 {
            estimate = next;
            break;
        }
        estimate = next;
    }
    Ok(estimate)
}
