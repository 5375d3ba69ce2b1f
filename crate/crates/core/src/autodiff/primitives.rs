//! Gradient checks of every tape operation on small random inputs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{grad_check, GradCheckOptions, GradCheckReport, Tape, Var};
use crate::error::Result;
use crate::graph::{build_graph, normalize_adjacency, SelfLoopPolicy};
use crate::tensor::Tensor;

/// Reduces `out` to a scalar through a fixed random weighting, so that
/// operations whose plain sum is constant (softmax rows, normalization)
/// still receive informative gradients.
fn weighted_sum(tape: &mut Tape<'_>, out: Var, seed: u64) -> Result<Var> {
    let (r, c) = tape.value(out).shape();
    let weights = Tensor::uniform(r, c, -1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
    let w = tape.constant(weights);
    let prod = tape.hadamard(out, w)?;
    Ok(tape.sum(prod))
}

/// One report per operation, named after the [`Tape`] method it checks.
pub fn check_primitives(
    seed: u64,
    opts: &GradCheckOptions,
) -> Result<Vec<(&'static str, GradCheckReport)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = |r: usize, c: usize| Tensor::uniform(r, c, -2.0, 2.0, &mut rng);
    let (a, b, m) = (u(3, 4), u(3, 4), u(4, 2));
    let (alpha, row, x5) = (u(1, 1), u(1, 3), u(5, 3));
    let (ln_x, gamma, beta) = (u(4, 5), u(1, 5), u(1, 5));
    let logits = u(5, 3);
    let ring: Vec<(usize, usize)> = (0..5).map(|i| (i, (i + 1) % 5)).chain([(0, 2)]).collect();
    let adj = normalize_adjacency(&build_graph(&ring, 5, SelfLoopPolicy::Add)?)?;
    let targets = Tensor::from_fn(5, 3, |i, j| ((i + j) % 2) as f64);
    let ws = seed ^ 0x5eed;

    type Objective<'c> = Box<dyn Fn(&mut Tape<'c>, &[Var]) -> Result<Var> + 'c>;
    let adj_ref = &adj;
    let targets_ref = &targets;
    let cases: Vec<(&'static str, Vec<Tensor>, Objective<'_>)> = vec![
        (
            "matmul",
            vec![a.clone(), m],
            Box::new(move |t, v| {
                let o = t.matmul(v[0], v[1])?;
                weighted_sum(t, o, ws)
            }),
        ),
        (
            "add",
            vec![a.clone(), b.clone()],
            Box::new(move |t, v| {
                let o = t.add(v[0], v[1])?;
                weighted_sum(t, o, ws)
            }),
        ),
        (
            "sub",
            vec![a.clone(), b.clone()],
            Box::new(move |t, v| {
                let o = t.sub(v[0], v[1])?;
                weighted_sum(t, o, ws)
            }),
        ),
        (
            "hadamard",
            vec![a.clone(), b.clone()],
            Box::new(move |t, v| {
                let o = t.hadamard(v[0], v[1])?;
                weighted_sum(t, o, ws)
            }),
        ),
        (
            "scale",
            vec![a.clone()],
            Box::new(move |t, v| {
                let o = t.scale(v[0], -1.7);
                weighted_sum(t, o, ws)
            }),
        ),
        (
            "mul_scalar",
            vec![alpha, a.clone()],
            Box::new(move |t, v| {
                let o = t.mul_scalar(v[0], v[1])?;
                weighted_sum(t, o, ws)
            }),
        ),
        (
            "spmm",
            vec![x5.clone()],
            Box::new(move |t, v| {
                let o = t.spmm(adj_ref, v[0])?;
                weighted_sum(t, o, ws)
            }),
        ),
        (
            "silu",
            vec![a.clone()],
            Box::new(move |t, v| {
                let o = t.silu(v[0]);
                weighted_sum(t, o, ws)
            }),
        ),
        (
            "layer_norm",
            vec![ln_x, gamma, beta],
            Box::new(move |t, v| {
                let o = t.layer_norm(v[0], v[1], v[2], 1e-5)?;
                weighted_sum(t, o, ws)
            }),
        ),
        (
            "softmax_rows",
            vec![a.clone()],
            Box::new(move |t, v| {
                let o = t.softmax_rows(v[0]);
                weighted_sum(t, o, ws)
            }),
        ),
        (
            "transpose",
            vec![a.clone()],
            Box::new(move |t, v| {
                let o = t.transpose(v[0]);
                weighted_sum(t, o, ws)
            }),
        ),
        (
            "column_sums",
            vec![a.clone()],
            Box::new(move |t, v| {
                let o = t.column_sums(v[0]);
                weighted_sum(t, o, ws)
            }),
        ),
        (
            "broadcast_rows",
            vec![row],
            Box::new(move |t, v| {
                let o = t.broadcast_rows(v[0], 4)?;
                weighted_sum(t, o, ws)
            }),
        ),
        (
            "normalize",
            vec![a.clone()],
            Box::new(move |t, v| {
                let o = t.normalize(v[0])?;
                weighted_sum(t, o, ws)
            }),
        ),
        (
            "normalize_rows",
            vec![a.clone()],
            Box::new(move |t, v| {
                let o = t.normalize_rows(v[0])?;
                weighted_sum(t, o, ws)
            }),
        ),
        (
            "sum",
            vec![a.clone()],
            Box::new(|t, v| {
                let sq = t.hadamard(v[0], v[0])?;
                Ok(t.sum(sq))
            }),
        ),
        (
            "mean",
            vec![a.clone()],
            Box::new(|t, v| {
                let sq = t.hadamard(v[0], v[0])?;
                Ok(t.mean(sq))
            }),
        ),
        (
            "cross_entropy",
            vec![logits.clone()],
            Box::new(|t, v| t.cross_entropy(v[0], &[0, 2, 3, 4], &[1, 0, 2, 2])),
        ),
        (
            "bce_with_logits",
            vec![logits],
            Box::new(move |t, v| t.bce_with_logits(v[0], &[0, 1, 3], targets_ref)),
        ),
        (
            "dropout",
            vec![x5],
            Box::new(move |t, v| {
                // a fresh generator per evaluation keeps the mask fixed
                let mut mask_rng = ChaCha8Rng::seed_from_u64(ws);
                let o = t.dropout(v[0], 0.3, &mut mask_rng, true)?;
                weighted_sum(t, o, ws)
            }),
        ),
    ];
    cases
        .into_iter()
        .map(|(name, params, f)| Ok((name, grad_check(f, &params, opts)?)))
        .collect()
}
