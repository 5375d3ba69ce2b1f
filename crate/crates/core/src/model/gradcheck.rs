//! Finite-difference check of a whole model's parameter gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{init_params, model_forward, Mode, ModelConfig, Variant};
use crate::autodiff::{grad_check, GradCheckOptions, GradCheckReport};
use crate::error::{Error, Result};
use crate::graph::{build_graph, normalize_adjacency, SelfLoopPolicy};
use crate::seed::derive_seed;
use crate::tensor::Tensor;

/// A random problem for [`check_model_gradients`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelCheck {
    pub variant: Variant,
    pub depth: usize,
    pub nodes: usize,
    /// Input and hidden width.
    pub dim: usize,
    pub classes: usize,
    /// Value every `α` is set to. The initial `1e-6` would leave block
    /// gradients near the finite-difference noise floor.
    pub alpha: f64,
    pub seed: u64,
}

impl ModelCheck {
    pub fn new(variant: Variant, depth: usize, nodes: usize, dim: usize, seed: u64) -> Self {
        Self {
            variant,
            depth,
            nodes,
            dim,
            classes: 3,
            alpha: 0.5,
            seed,
        }
    }
}

/// Cross-entropy over every node of a ring with random chords, features in
/// `[-2, 2]` and random labels; gradients with respect to every parameter.
pub fn check_model_gradients(
    check: &ModelCheck,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    if check.nodes < 3 || check.classes < 2 {
        return Err(Error::invalid(
            "model gradient check needs at least 3 nodes and 2 classes",
        ));
    }
    let n = check.nodes;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(check.seed, &[0]));
    let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    for _ in 0..n / 2 {
        let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if i != j {
            edges.push((i, j));
        }
    }
    let adj = normalize_adjacency(&build_graph(&edges, n, SelfLoopPolicy::Add)?)?;
    let x = Tensor::uniform(n, check.dim, -2.0, 2.0, &mut rng);
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..check.classes)).collect();
    let rows: Vec<usize> = (0..n).collect();

    let cfg = ModelConfig::new(check.dim, check.dim, check.classes, check.depth)
        .with_block(check.variant.block_config());
    cfg.validate()?;
    let mut params = init_params(&cfg, derive_seed(check.seed, &[1]))?;
    params.set_alphas(check.alpha);
    let structure = params.clone();
    grad_check(
        |tape, vars| {
            let bound = structure.from_flat(vars)?;
            let xv = tape.constant(x.clone());
            let out = model_forward(tape, xv, &adj, &bound, &cfg, &mut Mode::Eval)?;
            tape.cross_entropy(out.logits, &rows, &labels)
        },
        &params.flatten(),
        opts,
    )
}
