use std::borrow::Cow;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::attention::linear_global_attention;
use super::{Affine, AttentionParams, HeadParams, KeyNorm, LayerParams, ModelConfig, SmpnnParams};
use crate::autodiff::{check_layer_norm, layer_norm_value, silu_value, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::model::Params;
use crate::tensor::Tensor;

/// Evaluation, or training with dropout on every sublayer branch.
#[derive(Clone, Debug)]
pub enum Mode {
    Eval,
    Train { dropout: f64, rng: ChaCha8Rng },
}

impl Mode {
    pub fn train(dropout: f64, seed: u64) -> Self {
        Mode::Train {
            dropout,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn dropout(&mut self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        match self {
            Mode::Eval => Ok(x),
            Mode::Train { dropout, rng } => tape.dropout(x, *dropout, rng, true),
        }
    }
}

/// The arithmetic a forward pass needs. The block is written once against
/// this trait; the tape records it for gradients, while [`EvalOps`] computes
/// the same values on plain tensors without keeping intermediates alive.
trait ForwardOps {
    type V: Clone;
    fn value<'s>(&'s self, v: &'s Self::V) -> &'s Tensor;
    fn num_nodes(&self) -> usize;
    fn matmul(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn add(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    /// `Ã x`.
    fn spmm(&mut self, x: &Self::V) -> Result<Self::V>;
    fn silu(&mut self, x: &Self::V) -> Self::V;
    fn layer_norm(&mut self, x: &Self::V, a: &Affine<Self::V>, eps: f64) -> Result<Self::V>;
    fn mul_scalar(&mut self, alpha: &Self::V, x: &Self::V) -> Result<Self::V>;
    fn attention(
        &mut self,
        x: &Self::V,
        heads: &[HeadParams<Self::V>],
        key_norm: KeyNorm,
    ) -> Result<Self::V>;
    fn dropout(&mut self, x: Self::V) -> Result<Self::V>;
}

struct TapeOps<'t, 'a> {
    tape: &'t mut Tape<'a>,
    adj: &'a NormalizedAdjacency,
    mode: &'t mut Mode,
}

impl ForwardOps for TapeOps<'_, '_> {
    type V = Var;

    fn value<'s>(&'s self, v: &'s Var) -> &'s Tensor {
        self.tape.value(*v)
    }

    fn num_nodes(&self) -> usize {
        self.adj.num_nodes()
    }

    fn matmul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        self.tape.matmul(*a, *b)
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        self.tape.add(*a, *b)
    }

    fn spmm(&mut self, x: &Var) -> Result<Var> {
        self.tape.spmm(self.adj, *x)
    }

    fn silu(&mut self, x: &Var) -> Var {
        self.tape.silu(*x)
    }

    fn layer_norm(&mut self, x: &Var, a: &Affine<Var>, eps: f64) -> Result<Var> {
        self.tape.layer_norm(*x, a.gamma, a.beta, eps)
    }

    fn mul_scalar(&mut self, alpha: &Var, x: &Var) -> Result<Var> {
        self.tape.mul_scalar(*alpha, *x)
    }

    fn attention(&mut self, x: &Var, heads: &[HeadParams<Var>], key_norm: KeyNorm) -> Result<Var> {
        linear_global_attention(self.tape, *x, heads, key_norm)
    }

    fn dropout(&mut self, x: Var) -> Result<Var> {
        self.mode.dropout(self.tape, x)
    }
}

/// Evaluation on tensors: parameters and the input are borrowed, and each
/// intermediate is dropped as soon as the next one exists.
struct EvalOps<'a> {
    adj: &'a NormalizedAdjacency,
}

impl<'a> ForwardOps for EvalOps<'a> {
    type V = Cow<'a, Tensor>;

    fn value<'s>(&'s self, v: &'s Self::V) -> &'s Tensor {
        v
    }

    fn num_nodes(&self) -> usize {
        self.adj.num_nodes()
    }

    fn matmul(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V> {
        a.matmul(b)
            .map(Cow::Owned)
            .map_err(|_| Error::ShapeMismatch {
                op: "matmul",
                left: a.shape(),
                right: b.shape(),
            })
    }

    fn add(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V> {
        a.add(b).map(Cow::Owned)
    }

    fn spmm(&mut self, x: &Self::V) -> Result<Self::V> {
        self.adj.spmm(x).map(Cow::Owned)
    }

    fn silu(&mut self, x: &Self::V) -> Self::V {
        Cow::Owned(silu_value(x))
    }

    fn layer_norm(&mut self, x: &Self::V, a: &Affine<Self::V>, eps: f64) -> Result<Self::V> {
        check_layer_norm(x, &a.gamma, &a.beta)?;
        Ok(Cow::Owned(layer_norm_value(x, &a.gamma, &a.beta, eps).0))
    }

    fn mul_scalar(&mut self, alpha: &Self::V, x: &Self::V) -> Result<Self::V> {
        if alpha.shape() != (1, 1) {
            return Err(Error::ShapeMismatch {
                op: "mul_scalar",
                left: alpha.shape(),
                right: x.shape(),
            });
        }
        Ok(Cow::Owned(x.scale(alpha.item())))
    }

    fn attention(
        &mut self,
        x: &Self::V,
        heads: &[HeadParams<Self::V>],
        key_norm: KeyNorm,
    ) -> Result<Self::V> {
        // O(N D²) and rarely on a hot path: reuse the recorded implementation
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone().into_owned());
        let bound: Vec<HeadParams<Var>> = heads
            .iter()
            .map(|h| HeadParams {
                wq: tape.constant(h.wq.clone().into_owned()),
                wk: tape.constant(h.wk.clone().into_owned()),
                wv: tape.constant(h.wv.clone().into_owned()),
            })
            .collect();
        let out = linear_global_attention(&mut tape, xv, &bound, key_norm)?;
        Ok(Cow::Owned(tape.value(out).clone()))
    }

    fn dropout(&mut self, x: Self::V) -> Result<Self::V> {
        Ok(x)
    }
}

fn check_finite<O: ForwardOps>(ops: &O, v: &O::V, layer: usize) -> Result<()> {
    if ops.value(v).all_finite() {
        Ok(())
    } else {
        Err(Error::NanInLayer { layer })
    }
}

/// Multiplies by `α`, or passes through when `α` is fixed to 1.
fn scale_by_alpha<O: ForwardOps>(
    ops: &mut O,
    alpha: &O::V,
    x: O::V,
    learn_alpha: bool,
) -> Result<O::V> {
    if learn_alpha {
        ops.mul_scalar(alpha, &x)
    } else {
        Ok(x)
    }
}

fn block<O: ForwardOps>(
    ops: &mut O,
    x: &O::V,
    p: &LayerParams<O::V>,
    cfg: &ModelConfig,
    layer: usize,
) -> Result<O::V> {
    let b = &cfg.block;
    let (n, d) = ops.value(x).shape();
    if n != ops.num_nodes() {
        return Err(Error::ShapeMismatch {
            op: "block_forward",
            left: (n, d),
            right: (ops.num_nodes(), ops.num_nodes()),
        });
    }

    let aggregated = if b.use_gcn_layernorm {
        let h1 = ops.layer_norm(x, &p.ln1, cfg.ln_eps)?;
        ops.spmm(&h1)?
    } else {
        ops.spmm(x)?
    };
    let mixed = ops.matmul(&aggregated, &p.w1)?;
    drop(aggregated);
    let mut branch = ops.silu(&mixed);
    drop(mixed);
    if b.use_attention {
        let attn = p
            .attention
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("block {layer} has no attention parameters")))?;
        let g = ops.layer_norm(x, &attn.ln, cfg.ln_eps)?;
        let global = ops.attention(&g, &attn.heads, cfg.key_norm)?;
        branch = ops.add(&branch, &global)?;
    }
    let branch = ops.dropout(branch)?;
    let scaled = scale_by_alpha(ops, &p.alpha1, branch, b.learn_alpha)?;
    let h2 = if b.use_residual {
        ops.add(&scaled, x)?
    } else {
        scaled
    };
    check_finite(ops, &h2, layer)?;
    if !b.use_feedforward {
        return Ok(h2);
    }

    let h3 = ops.layer_norm(&h2, &p.ln2, cfg.ln_eps)?;
    let mixed = ops.matmul(&h3, &p.w2)?;
    drop(h3);
    let branch = ops.silu(&mixed);
    drop(mixed);
    let branch = ops.dropout(branch)?;
    let scaled = scale_by_alpha(ops, &p.alpha2, branch, b.learn_alpha)?;
    let h4 = ops.add(&scaled, &h2)?;
    check_finite(ops, &h4, layer)?;
    Ok(h4)
}

fn model<O: ForwardOps>(
    ops: &mut O,
    x_in: &O::V,
    p: &Params<O::V>,
    cfg: &ModelConfig,
) -> Result<(O::V, Vec<O::V>)> {
    if p.layers.len() != cfg.depth {
        return Err(Error::invalid(format!(
            "configuration has depth {} but parameters have {} blocks",
            cfg.depth,
            p.layers.len()
        )));
    }
    let mut h = ops.matmul(x_in, &p.input_proj)?;
    let mut hidden = Vec::with_capacity(cfg.depth + 1);
    for (l, layer) in p.layers.iter().enumerate() {
        let next = block(ops, &h, layer, cfg, l)?;
        hidden.push(std::mem::replace(&mut h, next));
    }
    hidden.push(h.clone());
    if let Some(f) = &p.final_ln {
        h = ops.layer_norm(&h, f, cfg.ln_eps)?;
    }
    let logits = ops.matmul(&h, &p.output_proj)?;
    if !ops.value(&logits).all_finite() {
        return Err(Error::NonFinite("logits".into()));
    }
    Ok((logits, hidden))
}

/// One block. `layer` is used only to label a non-finite failure.
///
/// With attention enabled the graph-convolution branch and the global
/// attention branch (with its own layer norm) are summed before scaling by
/// `α1`. Dropout, in train mode, applies to each sublayer branch before `α`.
pub fn block_forward<'a>(
    tape: &mut Tape<'a>,
    x: Var,
    adj: &'a NormalizedAdjacency,
    p: &LayerParams<Var>,
    cfg: &ModelConfig,
    mode: &mut Mode,
    layer: usize,
) -> Result<Var> {
    block(&mut TapeOps { tape, adj, mode }, &x, p, cfg, layer)
}

/// Logits plus the hidden state entering each block and leaving the last.
#[derive(Clone, Debug)]
pub struct ModelOutput {
    pub logits: Var,
    /// `hidden[0]` is the projected input; `hidden[l]` the output of block `l`.
    pub hidden: Vec<Var>,
}

/// Input projection, every block, optional final layer norm, output
/// projection. No softmax.
pub fn model_forward<'a>(
    tape: &mut Tape<'a>,
    x_in: Var,
    adj: &'a NormalizedAdjacency,
    p: &Params<Var>,
    cfg: &ModelConfig,
    mode: &mut Mode,
) -> Result<ModelOutput> {
    let (logits, hidden) = model(&mut TapeOps { tape, adj, mode }, &x_in, p, cfg)?;
    Ok(ModelOutput { logits, hidden })
}

/// Result of a gradient-free forward pass.
#[derive(Clone, Debug)]
pub struct Inference {
    pub logits: Tensor,
    pub hidden: Vec<Tensor>,
}

/// Evaluation-mode forward pass on plain tensors. Bitwise equal to
/// [`model_forward`] in [`Mode::Eval`], without recording a tape.
pub fn infer(
    x: &Tensor,
    adj: &NormalizedAdjacency,
    params: &SmpnnParams,
    cfg: &ModelConfig,
) -> Result<Inference> {
    let p = params.map(|_, t| Cow::Borrowed(t));
    let (logits, hidden) = model(&mut EvalOps { adj }, &Cow::Borrowed(x), &p, cfg)?;
    Ok(Inference {
        logits: logits.into_owned(),
        hidden: hidden.into_iter().map(Cow::into_owned).collect(),
    })
}

fn borrow_affine(a: &Affine<Tensor>) -> Affine<Cow<'_, Tensor>> {
    Affine {
        gamma: Cow::Borrowed(&a.gamma),
        beta: Cow::Borrowed(&a.beta),
    }
}

/// Evaluation-mode single block on plain tensors; bitwise equal to
/// [`block_forward`] in [`Mode::Eval`].
pub fn apply_block(
    x: &Tensor,
    adj: &NormalizedAdjacency,
    layer: &LayerParams<Tensor>,
    cfg: &ModelConfig,
) -> Result<Tensor> {
    let borrowed = LayerParams {
        w1: Cow::Borrowed(&layer.w1),
        w2: Cow::Borrowed(&layer.w2),
        ln1: borrow_affine(&layer.ln1),
        ln2: borrow_affine(&layer.ln2),
        alpha1: Cow::Borrowed(&layer.alpha1),
        alpha2: Cow::Borrowed(&layer.alpha2),
        attention: layer.attention.as_ref().map(|a| AttentionParams {
            heads: a
                .heads
                .iter()
                .map(|h| HeadParams {
                    wq: Cow::Borrowed(&h.wq),
                    wk: Cow::Borrowed(&h.wk),
                    wv: Cow::Borrowed(&h.wv),
                })
                .collect(),
            ln: borrow_affine(&a.ln),
        }),
    };
    Ok(block(&mut EvalOps { adj }, &Cow::Borrowed(x), &borrowed, cfg, 0)?.into_owned())
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::autodiff::{grad_check, GradCheckOptions};
    use crate::graph::{build_graph, normalize_adjacency, SelfLoopPolicy};
    use crate::model::{init_params, BlockConfig, Variant};

    fn ring(n: usize) -> NormalizedAdjacency {
        let edges: Vec<(usize, usize)> = (0..n)
            .map(|i| (i, (i + 1) % n))
            .chain([(0, n / 2)])
            .collect();
        normalize_adjacency(&build_graph(&edges, n, SelfLoopPolicy::Add).unwrap()).unwrap()
    }

    #[test]
    fn zero_alpha_block_is_identity() {
        let adj = ring(6);
        let cfg = ModelConfig::new(4, 4, 2, 1);
        let mut p = init_params(&cfg, 1).unwrap();
        p.set_alphas(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::uniform(6, 4, -1.0, 1.0, &mut rng);
        assert_eq!(apply_block(&x, &adj, &p.layers[0], &cfg).unwrap(), x);
    }

    #[test]
    fn no_feedforward_returns_h2() {
        let adj = ring(5);
        let cfg = ModelConfig::new(3, 3, 2, 1).with_block(BlockConfig::no_feedforward());
        let mut p = init_params(&cfg, 3).unwrap();
        p.set_alphas(0.5);
        let x = Tensor::from_fn(5, 3, |i, j| (i * 3 + j) as f64 * 0.1 - 0.4);
        let out = apply_block(&x, &adj, &p.layers[0], &cfg).unwrap();
        // out - x = 0.5 * SiLU(Ã LN(x) W1): recompute by hand
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let g = tape.constant(Tensor::ones(1, 3));
        let b = tape.constant(Tensor::zeros(1, 3));
        let h1 = tape.layer_norm(xv, g, b, 1e-5).unwrap();
        let agg = adj.spmm(tape.value(h1)).unwrap();
        let lin = agg.matmul(&p.layers[0].w1).unwrap();
        let expected = lin.map(|v| 0.5 * v / (1.0 + (-v).exp())).add(&x).unwrap();
        assert!(out.sub(&expected).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn tensor_path_matches_tape_bitwise() {
        let adj = ring(7);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::uniform(7, 3, -1.5, 1.5, &mut rng);
        for variant in Variant::ALL {
            let cfg = ModelConfig::new(3, 4, 2, 3).with_block(variant.block_config());
            let mut p = init_params(&cfg, 6).unwrap();
            p.set_alphas(0.7);
            let mut tape = Tape::new();
            let xv = tape.constant(x.clone());
            let bound = p.bind_constant(&mut tape);
            let out = model_forward(&mut tape, xv, &adj, &bound, &cfg, &mut Mode::Eval).unwrap();
            let fast = infer(&x, &adj, &p, &cfg).unwrap();
            assert_eq!(&fast.logits, tape.value(out.logits), "{variant:?}");
            assert_eq!(fast.hidden.len(), out.hidden.len());
            for (a, &b) in fast.hidden.iter().zip(&out.hidden) {
                assert_eq!(a, tape.value(b), "{variant:?}");
            }
            let h0 = &fast.hidden[0];
            let block_out = block_forward(
                &mut tape,
                out.hidden[0],
                &adj,
                &bound.layers[0],
                &cfg,
                &mut Mode::Eval,
                0,
            )
            .unwrap();
            assert_eq!(
                &apply_block(h0, &adj, &p.layers[0], &cfg).unwrap(),
                tape.value(block_out)
            );
        }
    }

    #[test]
    fn depth_mismatch_is_rejected() {
        let adj = ring(4);
        let cfg = ModelConfig::new(2, 2, 2, 2);
        let p = init_params(&ModelConfig::new(2, 2, 2, 1), 0).unwrap();
        assert!(infer(&Tensor::ones(4, 2), &adj, &p, &cfg).is_err());
    }

    #[test]
    fn nan_reports_layer() {
        let adj = ring(4);
        let cfg = ModelConfig::new(2, 2, 2, 3);
        let mut p = init_params(&cfg, 0).unwrap();
        p.layers[1].alpha1 = Tensor::scalar(f64::NAN);
        let err = infer(&Tensor::ones(4, 2).scale(0.3), &adj, &p, &cfg).unwrap_err();
        assert!(matches!(err, Error::NanInLayer { layer: 1 }), "{err}");
    }

    #[test]
    fn dropout_mode_changes_output_only_in_train() {
        let adj = ring(6);
        let cfg = ModelConfig::new(3, 4, 2, 2);
        let mut p = init_params(&cfg, 0).unwrap();
        p.set_alphas(1.0);
        let x = Tensor::from_fn(6, 3, |i, j| ((i + 2 * j) % 5) as f64 - 2.0);
        let run = |mode: &mut Mode| {
            let mut tape = Tape::new();
            let xv = tape.constant(x.clone());
            let bound = p.bind_constant(&mut tape);
            let out = model_forward(&mut tape, xv, &adj, &bound, &cfg, mode).unwrap();
            tape.value(out.logits).clone()
        };
        let eval = run(&mut Mode::Eval);
        assert_eq!(eval, infer(&x, &adj, &p, &cfg).unwrap().logits);
        assert_eq!(run(&mut Mode::train(0.0, 1)), eval);
        assert_ne!(run(&mut Mode::train(0.5, 1)), eval);
        assert_eq!(run(&mut Mode::train(0.5, 1)), run(&mut Mode::train(0.5, 1)));
    }

    #[test]
    fn single_block_gradients_match_differences() {
        let adj = ring(7);
        let cfg = ModelConfig::new(3, 4, 3, 1);
        let mut p = init_params(&cfg, 4).unwrap();
        p.set_alphas(0.8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Tensor::uniform(7, 3, -2.0, 2.0, &mut rng);
        let structure = p.clone();
        let report = grad_check(
            |tape, vars| {
                let bound = structure.from_flat(vars)?;
                let xv = tape.constant(x.clone());
                let out = model_forward(tape, xv, &adj, &bound, &cfg, &mut Mode::Eval)?;
                Ok(tape.mean(out.logits))
            },
            &p.flatten(),
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.passed(), "max rel err {}", report.max_rel_err);
    }
}
