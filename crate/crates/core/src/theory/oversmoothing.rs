use std::str::FromStr;

use nalgebra::Complex;

use super::kronecker::{
    eigenvalue_norm, eigenvalues, kron_singular_values, spectral_norm, KronMethod,
};
use crate::error::{Error, Result};
use crate::graph::{
    dense_eigenvalues, normalize_adjacency, EnergyTrace, NormalizedAdjacency, SparseGraph,
};
use crate::model::{apply_block, init_params, BlockConfig, ModelConfig};
use crate::tensor::Tensor;

/// Layer map followed by [`oversmoothing_trace`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OversmoothingMode {
    /// `X ↦ Ã X`: weight `I`, identity activation, no residual.
    LinearNoResidual,
    /// Freshly initialized standard blocks.
    SmpnnDefault,
    /// Freshly initialized blocks without the convolution residual.
    SmpnnNoResidual,
}

impl OversmoothingMode {
    pub const ALL: [OversmoothingMode; 3] = [
        OversmoothingMode::LinearNoResidual,
        OversmoothingMode::SmpnnDefault,
        OversmoothingMode::SmpnnNoResidual,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OversmoothingMode::LinearNoResidual => "linear_no_residual",
            OversmoothingMode::SmpnnDefault => "smpnn_default",
            OversmoothingMode::SmpnnNoResidual => "smpnn_no_residual",
        }
    }
}

impl FromStr for OversmoothingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown oversmoothing mode `{s}`")))
    }
}

/// Raw and normalized Dirichlet energy of `X⁽⁰⁾, …, X⁽ᴸ⁾`. Block weights for
/// the model modes come from `init_params` with hidden size `D = X0.cols()`
/// and `seed`. Disconnected graphs are refused: a repeated zero eigenvalue of
/// `L_norm` makes the limit depend on the components.
pub fn oversmoothing_trace(
    g: &SparseGraph,
    x0: &Tensor,
    layers: usize,
    mode: OversmoothingMode,
    seed: u64,
) -> Result<EnergyTrace> {
    let (_, components) = g.components();
    if components > 1 {
        return Err(Error::Disconnected { components });
    }
    if x0.rows() != g.num_nodes() {
        return Err(Error::ShapeMismatch {
            op: "oversmoothing_trace",
            left: (g.num_nodes(), g.num_nodes()),
            right: x0.shape(),
        });
    }
    let adj = normalize_adjacency(g)?;
    let mut trace = Vec::with_capacity(layers + 1);
    trace.push(x0.clone());
    if layers > 0 {
        match mode {
            OversmoothingMode::LinearNoResidual => {
                for _ in 0..layers {
                    let next = adj.spmm(trace.last().expect("non-empty"))?;
                    trace.push(next);
                }
            }
            OversmoothingMode::SmpnnDefault | OversmoothingMode::SmpnnNoResidual => {
                let block = if mode == OversmoothingMode::SmpnnDefault {
                    BlockConfig::standard()
                } else {
                    BlockConfig::no_residual()
                };
                let d = x0.cols();
                let cfg = ModelConfig::new(d, d, d, layers).with_block(block);
                let params = init_params(&cfg, seed)?;
                for layer in &params.layers {
                    let next = apply_block(trace.last().expect("non-empty"), &adj, layer, &cfg)?;
                    trace.push(next);
                }
            }
        }
    }
    EnergyTrace::from_layers(g, &trace)
}

/// Finite-depth reading of a normalized-energy trace. Frequency dominance is
/// defined as a limit over depth, so this is a heuristic on the last layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrequencyClass {
    /// Normalized energy has reached the bottom of the spectrum, `0`.
    LfdLike,
    /// Normalized energy has reached the top of the spectrum, `λ_max`.
    HfdLike,
    Neither,
}

impl FrequencyClass {
    pub fn as_str(self) -> &'static str {
        match self {
            FrequencyClass::LfdLike => "lfd_like",
            FrequencyClass::HfdLike => "hfd_like",
            FrequencyClass::Neither => "neither",
        }
    }
}

/// Compares the last normalized energy with `0` and with `λ_max(L_norm)`,
/// both within `tol`. For connected graphs `λ_max < 2`, and `λ_max ≥ 1`
/// whenever there are at least two nodes.
pub fn classify_frequency(trace: &EnergyTrace, tol: f64) -> FrequencyClass {
    match trace.per_layer_normalized.last() {
        Some(&e) if e <= trace.lambda_min + tol => FrequencyClass::LfdLike,
        Some(&e) if e >= trace.lambda_max - tol => FrequencyClass::HfdLike,
        _ => FrequencyClass::Neither,
    }
}

/// Spectral facts about the linearized residual layer `I + Ã ⊗ W`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumReport {
    /// Eigenvalues of `Ã ⊗ W` as the products `λ_i(Ã) λ_j(W)`, with
    /// multiplicity: `N·D` of them.
    pub eigenvalues: Vec<Complex<f64>>,
    /// `(Σ_j |λ_j(W)|²)^{1/2}`.
    pub lambda_norm_sum: f64,
    /// Largest singular value of `W`, for comparison.
    pub spectral_norm: f64,
    pub s_min: f64,
    pub s_max: f64,
    pub method: KronMethod,
    /// Set by [`SpectrumReport::with_trace`].
    pub frequency: Option<FrequencyClass>,
}

impl SpectrumReport {
    pub fn with_trace(mut self, trace: &EnergyTrace, tol: f64) -> Self {
        self.frequency = Some(classify_frequency(trace, tol));
        self
    }
}

pub fn spectrum_report(adj: &NormalizedAdjacency, w: &Tensor) -> Result<SpectrumReport> {
    let mu = dense_eigenvalues(adj.graph())?;
    let lam = eigenvalues(w)?;
    let products = mu
        .iter()
        .flat_map(|&m| lam.iter().map(move |&l| l * m))
        .collect();
    let (s, method) = kron_singular_values(adj, w)?;
    Ok(SpectrumReport {
        eigenvalues: products,
        lambda_norm_sum: eigenvalue_norm(w)?,
        spectral_norm: spectral_norm(w)?,
        s_min: *s.last().expect("non-empty operator"),
        s_max: s[0],
        method,
        frequency: None,
    })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::graph::{build_graph, SelfLoopPolicy};

    fn cycle(n: usize) -> SparseGraph {
        let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        build_graph(&edges, n, SelfLoopPolicy::Add).unwrap()
    }

    #[test]
    fn smooth_signal_is_fixed() {
        let g = cycle(6);
        // regular graph: sqrt(deg) is constant
        let x0 = Tensor::ones(6, 2);
        let t = oversmoothing_trace(&g, &x0, 20, OversmoothingMode::LinearNoResidual, 0).unwrap();
        assert!(t.per_layer_normalized.iter().all(|&e| e.abs() < 1e-15));
    }

    #[test]
    fn linear_stack_is_lfd_like() {
        let g = cycle(5);
        let x0 = Tensor::randn(5, 3, 1.0, &mut ChaCha8Rng::seed_from_u64(1));
        let t = oversmoothing_trace(&g, &x0, 200, OversmoothingMode::LinearNoResidual, 0).unwrap();
        assert_eq!(t.per_layer_normalized.len(), 201);
        assert_eq!(classify_frequency(&t, 1e-8), FrequencyClass::LfdLike);
    }

    #[test]
    fn fresh_blocks_barely_move_energy() {
        let g = cycle(8);
        let x0 = Tensor::randn(8, 4, 1.0, &mut ChaCha8Rng::seed_from_u64(2));
        let t = oversmoothing_trace(&g, &x0, 12, OversmoothingMode::SmpnnDefault, 3).unwrap();
        let e = &t.per_layer_normalized;
        assert!((e[12] - e[0]).abs() < 1e-3);
    }

    #[test]
    fn refuses_disconnected() {
        let g = build_graph(&[(0, 1), (2, 3)], 4, SelfLoopPolicy::Add).unwrap();
        let r = oversmoothing_trace(
            &g,
            &Tensor::ones(4, 1),
            3,
            OversmoothingMode::LinearNoResidual,
            0,
        );
        assert!(matches!(r, Err(Error::Disconnected { components: 2 })));
    }

    #[test]
    fn spectrum_of_zero_w() {
        let adj = normalize_adjacency(&cycle(4)).unwrap();
        let r = spectrum_report(&adj, &Tensor::zeros(3, 3)).unwrap();
        assert_eq!(r.eigenvalues.len(), 12);
        assert!((r.s_min - 1.0).abs() < 1e-14 && (r.s_max - 1.0).abs() < 1e-14);
        assert_eq!(r.lambda_norm_sum, 0.0);
    }

    #[test]
    fn mode_names_round_trip() {
        for m in OversmoothingMode::ALL {
            assert_eq!(m.as_str().parse::<OversmoothingMode>().unwrap(), m);
        }
    }
}
