//! Randomized invariants of the block: permutation equivariance and the
//! rank collapse of the residual-free convolution on complete graphs.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use smpnn::graph::{build_graph, normalize_adjacency, SelfLoopPolicy};
use smpnn::model::{apply_block, init_params, ModelConfig, Variant};
use smpnn::theory::complete_adjacency;
use smpnn::Tensor;

fn variant() -> impl Strategy<Value = Variant> {
    prop::sample::select(Variant::ALL.to_vec())
}

/// Node count, chords and a node permutation.
fn graph_and_permutation() -> impl Strategy<Value = (usize, Vec<(usize, usize)>, Vec<usize>)> {
    (3usize..12).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec((0..n, 0..n), 0..n),
            Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
        )
    })
}

fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Relabeling nodes before the block is the same as relabeling after.
    #[test]
    fn block_is_permutation_equivariant(
        (n, chords, perm) in graph_and_permutation(),
        v in variant(),
        dim in 2usize..6,
        alpha in 0.1f64..1.0,
        seed in any::<u64>(),
    ) {
        let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        edges.extend(chords.into_iter().filter(|(i, j)| i != j));
        // new node k is old node perm[k]
        let mut inv = vec![0; n];
        for (k, &old) in perm.iter().enumerate() {
            inv[old] = k;
        }
        let moved: Vec<(usize, usize)> = edges.iter().map(|&(i, j)| (inv[i], inv[j])).collect();
        let adj = normalize_adjacency(&build_graph(&edges, n, SelfLoopPolicy::Add).unwrap()).unwrap();
        let adj_p = normalize_adjacency(&build_graph(&moved, n, SelfLoopPolicy::Add).unwrap()).unwrap();

        let cfg = ModelConfig::new(dim, dim, 2, 1).with_block(v.block_config());
        let mut params = init_params(&cfg, seed).unwrap();
        params.set_alphas(alpha);
        let x = Tensor::randn(n, dim, 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
        let out = apply_block(&x, &adj, &params.layers[0], &cfg).unwrap();
        let out_p = apply_block(&x.select_rows(&perm), &adj_p, &params.layers[0], &cfg).unwrap();
        let err = max_abs_diff(&out_p, &out.select_rows(&perm));
        prop_assert!(err < 1e-10, "{v:?}: {err}");
    }

    /// Without the convolution residual every row of the block output is the
    /// same on a complete graph, whatever the input and weights.
    #[test]
    fn no_residual_block_collapses_rows_on_complete_graphs(
        n in 2usize..40,
        dim in 2usize..8,
        alpha in -2.0f64..2.0,
        seed in any::<u64>(),
    ) {
        let adj = complete_adjacency(n).unwrap();
        let cfg = ModelConfig::new(dim, dim, 2, 1).with_block(Variant::NoResidual.block_config());
        let mut params = init_params(&cfg, seed).unwrap();
        params.set_alphas(alpha);
        let x = Tensor::uniform(n, dim, -5.0, 5.0, &mut ChaCha8Rng::seed_from_u64(seed));
        let out = apply_block(&x, &adj, &params.layers[0], &cfg).unwrap();
        for i in 1..n {
            let spread = out.row(i).iter().zip(out.row(0)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(spread < 1e-10, "row {i} differs by {spread}");
        }
    }
}
