//! Linear global attention through a single virtual node.
//!
//! Per head, the query is the normalized column sum of `Q = X Wq`, keys are
//! `K = X Wk` normalized (globally by default), and the attention row
//! `a = softmax(q K_nᵀ)` (1 x N) weights the values `V = X Wv`. The single
//! output row `a V` is broadcast to every node, costing O(N D²) instead of
//! O(N² D). Heads are summed.

use nalgebra::DMatrix;

use super::{HeadParams, KeyNorm};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Returns `(output N x D, weights 1 x N)` for one head.
fn head_forward(
    tape: &mut Tape<'_>,
    x: Var,
    head: &HeadParams<Var>,
    key_norm: KeyNorm,
) -> Result<(Var, Var)> {
    let n = tape.value(x).rows();
    let q = tape.matmul(x, head.wq)?;
    let k = tape.matmul(x, head.wk)?;
    let v = tape.matmul(x, head.wv)?;
    let q_sum = tape.column_sums(q);
    if tape.value(q_sum).frobenius_norm() == 0.0 {
        return Err(Error::DegenerateQuery);
    }
    let q_n = tape.normalize(q_sum)?;
    let k_n = match key_norm {
        // an all-zero key matrix scores every node equally
        KeyNorm::Global if tape.value(k).frobenius_norm() == 0.0 => k,
        KeyNorm::Global => tape.normalize(k)?,
        KeyNorm::PerRow => tape.normalize_rows(k)?,
    };
    let k_t = tape.transpose(k_n);
    let scores = tape.matmul(q_n, k_t)?;
    let weights = tape.softmax_rows(scores);
    let row = tape.matmul(weights, v)?;
    let out = tape.broadcast_rows(row, n)?;
    Ok((out, weights))
}

/// Sum over heads of the broadcast attention output; every row is identical.
pub fn linear_global_attention(
    tape: &mut Tape<'_>,
    x: Var,
    heads: &[HeadParams<Var>],
    key_norm: KeyNorm,
) -> Result<Var> {
    let mut total: Option<Var> = None;
    for head in heads {
        let (out, _) = head_forward(tape, x, head, key_norm)?;
        total = Some(match total {
            None => out,
            Some(t) => tape.add(t, out)?,
        });
    }
    total.ok_or_else(|| Error::invalid("global attention needs at least one head"))
}

fn bind_head(tape: &mut Tape<'_>, head: &HeadParams<Tensor>) -> HeadParams<Var> {
    HeadParams {
        wq: tape.constant(head.wq.clone()),
        wk: tape.constant(head.wk.clone()),
        wv: tape.constant(head.wv.clone()),
    }
}

/// Attention weights (1 x N) of one head on plain tensors.
pub fn attention_weights(
    x: &Tensor,
    head: &HeadParams<Tensor>,
    key_norm: KeyNorm,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let h = bind_head(&mut tape, head);
    let (_, weights) = head_forward(&mut tape, xv, &h, key_norm)?;
    Ok(tape.value(weights).clone())
}

/// Attention output (N x D) summed over heads, on plain tensors.
pub fn attention_output(
    x: &Tensor,
    heads: &[HeadParams<Tensor>],
    key_norm: KeyNorm,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let bound: Vec<HeadParams<Var>> = heads.iter().map(|h| bind_head(&mut tape, h)).collect();
    let out = linear_global_attention(&mut tape, xv, &bound, key_norm)?;
    Ok(tape.value(out).clone())
}

/// Reference implementation: assembles `a ⊗ 1_N` (N x N, every row `a`) as a
/// dense Kronecker product and multiplies it with `V`.
pub fn explicit_attention(weights: &Tensor, v: &Tensor) -> Result<Tensor> {
    let n = weights.cols();
    if weights.rows() != 1 || v.rows() != n {
        return Err(Error::ShapeMismatch {
            op: "explicit_attention",
            left: weights.shape(),
            right: v.shape(),
        });
    }
    let ones = DMatrix::from_element(n, 1, 1.0);
    let spread = weights.to_dmatrix().kronecker(&ones);
    Ok(Tensor::from_dmatrix(&(spread * v.to_dmatrix())))
}
