use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};
use crate::graph::{to_dense, NormalizedAdjacency, DENSE_SPECTRAL_LIMIT};
use crate::tensor::Tensor;

/// Largest `N·D` for which `I + Ã ⊗ W` is assembled densely.
pub const KRONECKER_DENSE_LIMIT: usize = 4096;

/// Largest `N·D` for which [`kron_singular_values`] uses the dense SVD. The
/// block method is exact and far cheaper: a 512-square SVD costs about as
/// much as eight hundred 64-square ones.
pub const KRONECKER_DENSE_SVD_LIMIT: usize = 256;

/// How singular values of `I + Ã ⊗ W` were obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KronMethod {
    /// Explicit `ND x ND` assembly and SVD.
    Dense,
    /// `Ã = Q Λ Qᵀ` makes `I + Ã ⊗ W` orthogonally equivalent to the block
    /// diagonal of `I + λ_i(Ã) W`, so its singular values are the union of
    /// the blocks' singular values.
    BlockDiagonal,
}

impl KronMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            KronMethod::Dense => "dense",
            KronMethod::BlockDiagonal => "block_diagonal",
        }
    }
}

/// `I_{ND} + Ã ⊗ W`, assembled densely.
pub fn kron_operator(adj: &NormalizedAdjacency, w: &Tensor) -> Result<DMatrix<f64>> {
    let (n, d) = (adj.num_nodes(), check_square(w)?);
    let dim = n * d;
    if dim > KRONECKER_DENSE_LIMIT {
        return Err(Error::TooLarge {
            dim,
            limit: KRONECKER_DENSE_LIMIT,
        });
    }
    let mut m = to_dense(adj.graph()).kronecker(&w.to_dmatrix());
    for i in 0..dim {
        m[(i, i)] += 1.0;
    }
    Ok(m)
}

fn check_square(w: &Tensor) -> Result<usize> {
    if w.rows() != w.cols() {
        return Err(Error::invalid(format!(
            "W must be square, got {:?}",
            w.shape()
        )));
    }
    Ok(w.rows())
}

/// Singular values of `I + Ã ⊗ W`, descending. Dense assembly up to
/// [`KRONECKER_DENSE_SVD_LIMIT`], block diagonalization beyond.
pub fn kron_singular_values(
    adj: &NormalizedAdjacency,
    w: &Tensor,
) -> Result<(Vec<f64>, KronMethod)> {
    let d = check_square(w)?;
    if adj.num_nodes() * d <= KRONECKER_DENSE_SVD_LIMIT {
        let m = kron_operator(adj, w)?;
        let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        Ok((s, KronMethod::Dense))
    } else {
        Ok((
            kron_singular_values_blockwise(adj, w)?,
            KronMethod::BlockDiagonal,
        ))
    }
}

/// Singular values via the eigenvalues of `Ã`, descending.
pub fn kron_singular_values_blockwise(adj: &NormalizedAdjacency, w: &Tensor) -> Result<Vec<f64>> {
    let d = check_square(w)?;
    let n = adj.num_nodes();
    if n > DENSE_SPECTRAL_LIMIT {
        return Err(Error::TooLarge {
            dim: n,
            limit: DENSE_SPECTRAL_LIMIT,
        });
    }
    let mu = to_dense(adj.graph()).symmetric_eigenvalues();
    let wm = w.to_dmatrix();
    let mut s = Vec::with_capacity(n * d);
    for &m in mu.iter() {
        let block = DMatrix::identity(d, d) + &wm * m;
        s.extend(block.singular_values().iter().copied());
    }
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Iteration cap for the real Schur decomposition.
const SCHUR_MAX_ITERATIONS: usize = 100_000;

/// Eigenvalues of a square real matrix, complex in general.
pub fn eigenvalues(w: &Tensor) -> Result<Vec<Complex<f64>>> {
    let d = check_square(w)?;
    if !w.all_finite() {
        return Err(Error::NonFinite("matrix passed to the eigensolver".into()));
    }
    // the Schur iteration rescales by the largest entry and never finishes on 0
    if w.max_abs() == 0.0 {
        return Ok(vec![Complex::new(0.0, 0.0); d]);
    }
    let schur = w
        .to_dmatrix()
        .try_schur(f64::EPSILON, SCHUR_MAX_ITERATIONS)
        .ok_or(Error::NoConvergence("real Schur decomposition"))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// `(Σ_j |λ_j(W)|²)^{1/2}`: the square root of the summed squared
/// eigenvalue moduli. This is the quantity whose being below 1 guarantees
/// `I + Ã ⊗ W` is invertible when `‖Ã‖₂ = 1`.
pub fn eigenvalue_norm(w: &Tensor) -> Result<f64> {
    Ok(eigenvalues(w)?
        .iter()
        .map(|z| z.norm_sqr())
        .sum::<f64>()
        .sqrt())
}

/// Largest singular value of `W` (the conventional spectral norm).
pub fn spectral_norm(w: &Tensor) -> Result<f64> {
    check_square(w)?;
    Ok(w.to_dmatrix()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max))
}

/// Largest distance between the eigenvalues of `Ã ⊗ W` computed directly
/// and the products `λ_i(Ã) λ_j(W)`, after greedy nearest matching.
pub fn kron_eigen_identity_error(adj: &NormalizedAdjacency, w: &Tensor) -> Result<f64> {
    let d = check_square(w)?;
    let dim = adj.num_nodes() * d;
    if dim > DENSE_SPECTRAL_LIMIT {
        return Err(Error::TooLarge {
            dim,
            limit: DENSE_SPECTRAL_LIMIT,
        });
    }
    let a = to_dense(adj.graph());
    let direct = eigenvalues(&Tensor::from_dmatrix(&a.kronecker(&w.to_dmatrix())))?;
    let mu = a.symmetric_eigenvalues();
    let lam = eigenvalues(w)?;
    let mut predicted: Vec<Complex<f64>> = Vec::with_capacity(dim);
    for &m in mu.iter() {
        predicted.extend(lam.iter().map(|&l| l * m));
    }
    let mut used = vec![false; direct.len()];
    let mut worst: f64 = 0.0;
    for p in predicted {
        let (k, dist) = direct
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, z)| (k, (z - p).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .expect("as many direct eigenvalues as predicted ones");
        used[k] = true;
        worst = worst.max(dist);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::graph::{build_graph, normalize_adjacency, SelfLoopPolicy};

    fn small_graph() -> NormalizedAdjacency {
        let g = build_graph(&[(0, 1), (1, 2), (2, 3), (0, 2)], 4, SelfLoopPolicy::Add).unwrap();
        normalize_adjacency(&g).unwrap()
    }

    #[test]
    fn zero_w_is_identity() {
        let (s, method) = kron_singular_values(&small_graph(), &Tensor::zeros(3, 3)).unwrap();
        assert_eq!(method, KronMethod::Dense);
        assert!(s.iter().all(|&v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn operator_acts_on_row_major_vec() {
        // with rows stacked, vec(Ã X W + X) = (I + Ã ⊗ Wᵀ) vec(X)
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let adj = small_graph();
        let w = Tensor::randn(3, 3, 1.0, &mut rng);
        let x = Tensor::randn(4, 3, 1.0, &mut rng);
        let layer = adj.spmm(&x).unwrap().matmul(&w).unwrap().add(&x).unwrap();
        let op = kron_operator(&adj, &w.transpose()).unwrap();
        let applied = op * nalgebra::DVector::from_column_slice(x.data());
        for (a, b) in applied.iter().zip(layer.data()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn blockwise_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = Tensor::randn(3, 3, 0.7, &mut rng);
        let adj = small_graph();
        let (dense, _) = kron_singular_values(&adj, &w).unwrap();
        let block = kron_singular_values_blockwise(&adj, &w).unwrap();
        for (a, b) in dense.iter().zip(&block) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn kron_eigenvalues_are_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = Tensor::randn(3, 3, 1.0, &mut rng);
        assert!(kron_eigen_identity_error(&small_graph(), &w).unwrap() < 1e-8);
    }

    #[test]
    fn eigenvalue_norm_of_diagonal() {
        let w = Tensor::from_rows(&[vec![0.3, 0.0], vec![0.0, -0.4]]).unwrap();
        assert!((eigenvalue_norm(&w).unwrap() - 0.5).abs() < 1e-15);
        // rotation: eigenvalues ±i, moduli 1
        let r = Tensor::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap();
        assert!((eigenvalue_norm(&r).unwrap() - 2f64.sqrt()).abs() < 1e-14);
        assert!((spectral_norm(&r).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_matrix_eigenvalues() {
        assert_eq!(eigenvalue_norm(&Tensor::zeros(3, 3)).unwrap(), 0.0);
        assert!(eigenvalues(&Tensor::filled(2, 2, f64::NAN)).is_err());
    }
}
