//! The residual message-passing block, the stacked model, its ablation
//! variants, and linear global attention.
//!
//! A block maps `X` (N x D) to
//!
//! ```text
//! H1 = LN(X)
//! H2 = α1 · SiLU(Ã H1 W1) + X
//! H3 = LN(H2)
//! H4 = α2 · SiLU(H3 W2) + H2
//! ```
//!
//! with scalar `α` initialized at `1e-6`, so every block starts close to the
//! identity. The full model is `input projection → blocks → output
//! projection`, producing logits.
//!
//! Parameters are stored in generic structs: [`SmpnnParams`] holds tensors,
//! and [`Params::bind`] produces the same structure of tape variables.

mod attention;
mod checkpoint;
mod forward;
mod gradcheck;

use std::convert::Infallible;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use attention::{
    attention_output, attention_weights, explicit_attention, linear_global_attention,
};
pub use checkpoint::{
    load_checkpoint, parse_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION,
};
pub use forward::{apply_block, block_forward, infer, model_forward, Inference, Mode, ModelOutput};
pub use gradcheck::{check_model_gradients, ModelCheck};

/// Alpha value at initialization.
pub const ALPHA_INIT: f64 = 1e-6;
/// Layer-norm epsilon.
pub const LN_EPS: f64 = 1e-5;

/// Which parts of a block are active. The defaults give the standard block;
/// the named constructors give the ablations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockConfig {
    /// Add `X` back after the graph-convolution sublayer.
    pub use_residual: bool,
    /// Learnable `α`; when false both `α` are fixed to 1.
    pub learn_alpha: bool,
    /// Run the pointwise feedforward sublayer (`H3`, `H4`).
    pub use_feedforward: bool,
    /// Layer-normalize before the graph convolution; when false `H1 = X`.
    pub use_gcn_layernorm: bool,
    /// Add a linear global attention branch next to the graph convolution.
    pub use_attention: bool,
    pub num_heads: usize,
}

impl Default for BlockConfig {
    fn default() -> Self {
        Self {
            use_residual: true,
            learn_alpha: true,
            use_feedforward: true,
            use_gcn_layernorm: true,
            use_attention: false,
            num_heads: 1,
        }
    }
}

impl BlockConfig {
    pub fn standard() -> Self {
        Self::default()
    }

    pub fn no_residual() -> Self {
        Self {
            use_residual: false,
            ..Self::default()
        }
    }

    pub fn fixed_alpha() -> Self {
        Self {
            learn_alpha: false,
            ..Self::default()
        }
    }

    pub fn no_feedforward() -> Self {
        Self {
            use_feedforward: false,
            ..Self::default()
        }
    }

    pub fn no_gcn_layernorm() -> Self {
        Self {
            use_gcn_layernorm: false,
            ..Self::default()
        }
    }

    pub fn with_attention(num_heads: usize) -> Self {
        Self {
            use_attention: true,
            num_heads,
            ..Self::default()
        }
    }
}

/// Named variants used by the experiment drivers and the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    Standard,
    NoResidual,
    FixedAlpha,
    NoFeedforward,
    NoGcnLayerNorm,
    Attention,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Standard,
        Variant::NoResidual,
        Variant::FixedAlpha,
        Variant::NoFeedforward,
        Variant::NoGcnLayerNorm,
        Variant::Attention,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Standard => "standard",
            Variant::NoResidual => "no_residual",
            Variant::FixedAlpha => "fixed_alpha",
            Variant::NoFeedforward => "no_feedforward",
            Variant::NoGcnLayerNorm => "no_gcn_layernorm",
            Variant::Attention => "attention",
        }
    }

    pub fn block_config(self) -> BlockConfig {
        match self {
            Variant::Standard => BlockConfig::standard(),
            Variant::NoResidual => BlockConfig::no_residual(),
            Variant::FixedAlpha => BlockConfig::fixed_alpha(),
            Variant::NoFeedforward => BlockConfig::no_feedforward(),
            Variant::NoGcnLayerNorm => BlockConfig::no_gcn_layernorm(),
            Variant::Attention => BlockConfig::with_attention(1),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown variant `{s}`")))
    }
}

/// How attention keys are normalized before scoring.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum KeyNorm {
    /// `K / ‖K‖_F`: one norm for the whole key matrix.
    #[default]
    Global,
    /// Each key row divided by its own norm.
    PerRow,
}

impl KeyNorm {
    pub fn as_str(self) -> &'static str {
        match self {
            KeyNorm::Global => "global",
            KeyNorm::PerRow => "per_row",
        }
    }
}

impl FromStr for KeyNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(KeyNorm::Global),
            "per_row" => Ok(KeyNorm::PerRow),
            other => Err(Error::invalid(format!("unknown key norm `{other}`"))),
        }
    }
}

/// Shape and architecture of a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    /// Number of stacked blocks; 0 leaves only the two projections.
    pub depth: usize,
    pub block: BlockConfig,
    /// Layer-normalize before the output projection. Off by default.
    pub final_layer_norm: bool,
    pub key_norm: KeyNorm,
    pub ln_eps: f64,
    pub alpha_init: f64,
}

impl ModelConfig {
    pub fn new(input_dim: usize, hidden_dim: usize, num_classes: usize, depth: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            num_classes,
            depth,
            block: BlockConfig::default(),
            final_layer_norm: false,
            key_norm: KeyNorm::Global,
            ln_eps: LN_EPS,
            alpha_init: ALPHA_INIT,
        }
    }

    pub fn with_block(mut self, block: BlockConfig) -> Self {
        self.block = block;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.num_classes == 0 {
            return Err(Error::invalid("input_dim and num_classes must be positive"));
        }
        if self.hidden_dim < 2 {
            return Err(Error::invalid(format!(
                "hidden_dim must be at least 2 for layer norm, got {}",
                self.hidden_dim
            )));
        }
        if self.block.use_attention && self.block.num_heads == 0 {
            return Err(Error::invalid("attention needs at least one head"));
        }
        if !(self.ln_eps > 0.0) {
            return Err(Error::invalid(format!(
                "ln_eps must be positive, got {}",
                self.ln_eps
            )));
        }
        if !self.alpha_init.is_finite() {
            return Err(Error::invalid("alpha_init must be finite"));
        }
        Ok(())
    }
}

/// Featurewise affine pair of a layer norm.
#[derive(Clone, Debug, PartialEq)]
pub struct Affine<T> {
    pub gamma: T,
    pub beta: T,
}

/// Query, key and value projections of one attention head.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams<T> {
    pub wq: T,
    pub wk: T,
    pub wv: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams<T> {
    pub heads: Vec<HeadParams<T>>,
    /// Layer norm applied to the attention input, separate from the local one.
    pub ln: Affine<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T> {
    pub w1: T,
    pub w2: T,
    pub ln1: Affine<T>,
    pub ln2: Affine<T>,
    /// `1 x 1`.
    pub alpha1: T,
    /// `1 x 1`.
    pub alpha2: T,
    pub attention: Option<AttentionParams<T>>,
}

/// Every model parameter. No biases anywhere.
#[derive(Clone, Debug, PartialEq)]
pub struct Params<T> {
    /// `input_dim x hidden_dim`.
    pub input_proj: T,
    pub layers: Vec<LayerParams<T>>,
    pub final_ln: Option<Affine<T>>,
    /// `hidden_dim x num_classes`.
    pub output_proj: T,
}

pub type SmpnnParams = Params<Tensor>;

impl<T> Params<T> {
    /// Maps every parameter in the canonical order, passing its dotted name.
    pub fn try_map<'s, U, E>(
        &'s self,
        f: &mut impl FnMut(String, &'s T) -> std::result::Result<U, E>,
    ) -> std::result::Result<Params<U>, E> {
        let input_proj = f("input_proj".into(), &self.input_proj)?;
        let mut layers = Vec::with_capacity(self.layers.len());
        for (l, p) in self.layers.iter().enumerate() {
            let pre = format!("layers.{l}");
            let w1 = f(format!("{pre}.w1"), &p.w1)?;
            let w2 = f(format!("{pre}.w2"), &p.w2)?;
            let ln1 = Affine {
                gamma: f(format!("{pre}.ln1.gamma"), &p.ln1.gamma)?,
                beta: f(format!("{pre}.ln1.beta"), &p.ln1.beta)?,
            };
            let ln2 = Affine {
                gamma: f(format!("{pre}.ln2.gamma"), &p.ln2.gamma)?,
                beta: f(format!("{pre}.ln2.beta"), &p.ln2.beta)?,
            };
            let alpha1 = f(format!("{pre}.alpha1"), &p.alpha1)?;
            let alpha2 = f(format!("{pre}.alpha2"), &p.alpha2)?;
            let attention = match &p.attention {
                None => None,
                Some(a) => {
                    let mut heads = Vec::with_capacity(a.heads.len());
                    for (h, head) in a.heads.iter().enumerate() {
                        heads.push(HeadParams {
                            wq: f(format!("{pre}.attn.head{h}.wq"), &head.wq)?,
                            wk: f(format!("{pre}.attn.head{h}.wk"), &head.wk)?,
                            wv: f(format!("{pre}.attn.head{h}.wv"), &head.wv)?,
                        });
                    }
                    let ln = Affine {
                        gamma: f(format!("{pre}.attn.ln.gamma"), &a.ln.gamma)?,
                        beta: f(format!("{pre}.attn.ln.beta"), &a.ln.beta)?,
                    };
                    Some(AttentionParams { heads, ln })
                }
            };
            layers.push(LayerParams {
                w1,
                w2,
                ln1,
                ln2,
                alpha1,
                alpha2,
                attention,
            });
        }
        let final_ln = match &self.final_ln {
            None => None,
            Some(a) => Some(Affine {
                gamma: f("final_ln.gamma".into(), &a.gamma)?,
                beta: f("final_ln.beta".into(), &a.beta)?,
            }),
        };
        let output_proj = f("output_proj".into(), &self.output_proj)?;
        Ok(Params {
            input_proj,
            layers,
            final_ln,
            output_proj,
        })
    }

    pub fn map<'s, U>(&'s self, mut f: impl FnMut(String, &'s T) -> U) -> Params<U> {
        match self.try_map(&mut |name, t| Ok::<U, Infallible>(f(name, t))) {
            Ok(p) => p,
            Err(never) => match never {},
        }
    }

    /// `(name, parameter)` pairs in the canonical order.
    pub fn named(&self) -> Vec<(String, &T)> {
        let mut out = Vec::new();
        self.map(|name, t| out.push((name, t)));
        out
    }

    /// Mutable references in the canonical order.
    pub fn named_mut(&mut self) -> Vec<(String, &mut T)> {
        let names: Vec<String> = self.named().into_iter().map(|(n, _)| n).collect();
        let mut refs: Vec<&mut T> = Vec::with_capacity(names.len());
        refs.push(&mut self.input_proj);
        for p in &mut self.layers {
            refs.push(&mut p.w1);
            refs.push(&mut p.w2);
            refs.push(&mut p.ln1.gamma);
            refs.push(&mut p.ln1.beta);
            refs.push(&mut p.ln2.gamma);
            refs.push(&mut p.ln2.beta);
            refs.push(&mut p.alpha1);
            refs.push(&mut p.alpha2);
            if let Some(a) = &mut p.attention {
                for head in &mut a.heads {
                    refs.push(&mut head.wq);
                    refs.push(&mut head.wk);
                    refs.push(&mut head.wv);
                }
                refs.push(&mut a.ln.gamma);
                refs.push(&mut a.ln.beta);
            }
        }
        if let Some(a) = &mut self.final_ln {
            refs.push(&mut a.gamma);
            refs.push(&mut a.beta);
        }
        refs.push(&mut self.output_proj);
        debug_assert_eq!(names.len(), refs.len());
        names.into_iter().zip(refs).collect()
    }

    pub fn len(&self) -> usize {
        self.named().len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Rebuilds this structure from a flat list in canonical order.
    pub fn from_flat<U: Clone>(&self, flat: &[U]) -> Result<Params<U>> {
        let mut i = 0;
        let out = self.try_map(&mut |name, _| {
            let v = flat.get(i).cloned().ok_or_else(|| {
                Error::invalid(format!("flat parameter list ends before `{name}`"))
            })?;
            i += 1;
            Ok::<U, Error>(v)
        })?;
        if i != flat.len() {
            return Err(Error::invalid(format!(
                "expected {i} parameters, got {}",
                flat.len()
            )));
        }
        Ok(out)
    }
}

impl SmpnnParams {
    /// Registers every tensor as a trainable leaf.
    pub fn bind<'a>(&self, tape: &mut Tape<'a>) -> Params<Var> {
        self.map(|_, t| tape.leaf(t.clone()))
    }

    /// Registers every tensor as a constant (no gradients recorded).
    pub fn bind_constant<'a>(&self, tape: &mut Tape<'a>) -> Params<Var> {
        self.map(|_, t| tape.constant(t.clone()))
    }

    /// Tensors in canonical order.
    pub fn flatten(&self) -> Vec<Tensor> {
        self.named().into_iter().map(|(_, t)| t.clone()).collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.all_finite())
    }

    /// Sets every `α` to `value`.
    pub fn set_alphas(&mut self, value: f64) {
        for p in &mut self.layers {
            p.alpha1 = Tensor::scalar(value);
            p.alpha2 = Tensor::scalar(value);
        }
    }

    /// Checks every tensor shape against `cfg`.
    pub fn check_shapes(&self, cfg: &ModelConfig) -> Result<()> {
        let template = init_params(cfg, 0)?;
        let expected = template.named();
        let got = self.named();
        if expected.len() != got.len() {
            return Err(Error::invalid(format!(
                "parameter count {} does not match configuration ({})",
                got.len(),
                expected.len()
            )));
        }
        for ((en, et), (gn, gt)) in expected.iter().zip(&got) {
            if en != gn || et.shape() != gt.shape() {
                return Err(Error::invalid(format!(
                    "parameter `{gn}` {:?} does not match `{en}` {:?}",
                    gt.shape(),
                    et.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Glorot/Xavier uniform: `U(-b, b)` with `b = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let b = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::uniform(fan_in, fan_out, -b, b, rng)
}

/// Deterministic initialization: Xavier-uniform matrices, `α = alpha_init`,
/// layer norms at `(γ, β) = (1, 0)`. Tensors are drawn in canonical order.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<SmpnnParams> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = cfg.hidden_dim;
    let ln = || Affine {
        gamma: Tensor::ones(1, d),
        beta: Tensor::zeros(1, d),
    };
    let input_proj = xavier_uniform(cfg.input_dim, d, &mut rng);
    let mut layers = Vec::with_capacity(cfg.depth);
    for _ in 0..cfg.depth {
        let w1 = xavier_uniform(d, d, &mut rng);
        let w2 = xavier_uniform(d, d, &mut rng);
        let attention = cfg.block.use_attention.then(|| AttentionParams {
            heads: (0..cfg.block.num_heads)
                .map(|_| HeadParams {
                    wq: xavier_uniform(d, d, &mut rng),
                    wk: xavier_uniform(d, d, &mut rng),
                    wv: xavier_uniform(d, d, &mut rng),
                })
                .collect(),
            ln: ln(),
        });
        layers.push(LayerParams {
            w1,
            w2,
            ln1: ln(),
            ln2: ln(),
            alpha1: Tensor::scalar(cfg.alpha_init),
            alpha2: Tensor::scalar(cfg.alpha_init),
            attention,
        });
    }
    let final_ln = cfg.final_layer_norm.then(ln);
    let output_proj = xavier_uniform(d, cfg.num_classes, &mut rng);
    Ok(Params {
        input_proj,
        layers,
        final_ln,
        output_proj,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_params() {
        let cfg = ModelConfig::new(3, 4, 2, 2).with_block(BlockConfig::with_attention(2));
        assert_eq!(init_params(&cfg, 5).unwrap(), init_params(&cfg, 5).unwrap());
        assert_ne!(init_params(&cfg, 5).unwrap(), init_params(&cfg, 6).unwrap());
    }

    #[test]
    fn alphas_start_at_one_millionth() {
        let p = init_params(&ModelConfig::new(3, 4, 2, 3), 0).unwrap();
        for l in &p.layers {
            assert_eq!(l.alpha1.item(), 1e-6);
            assert_eq!(l.alpha2.item(), 1e-6);
            assert!(l.ln1.gamma.data().iter().all(|&g| g == 1.0));
            assert!(l.ln1.beta.data().iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn xavier_mean_is_near_zero() {
        // 10^4 draws of U(-b, b): std of the mean is b / sqrt(3 * 10^4)
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = xavier_uniform(100, 100, &mut rng);
        let b = (6.0f64 / 200.0).sqrt();
        let mean = w.sum() / w.len() as f64;
        let sigma = b / (3.0 * w.len() as f64).sqrt();
        assert!(mean.abs() < 3.0 * sigma, "mean {mean}, sigma {sigma}");
        assert!(w.max_abs() <= b);
    }

    #[test]
    fn canonical_names() {
        let cfg = ModelConfig {
            final_layer_norm: true,
            ..ModelConfig::new(3, 4, 2, 1).with_block(BlockConfig::with_attention(1))
        };
        let p = init_params(&cfg, 0).unwrap();
        let names: Vec<String> = p.named().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names.first().unwrap(), "input_proj");
        assert_eq!(names.last().unwrap(), "output_proj");
        assert!(names.contains(&"layers.0.attn.head0.wk".to_string()));
        assert!(names.contains(&"final_ln.beta".to_string()));
        let mut q = p.clone();
        let mut_names: Vec<String> = q.named_mut().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, mut_names);
        let rebuilt = p.from_flat(&p.flatten()).unwrap();
        assert_eq!(rebuilt, p);
        assert!(p.check_shapes(&cfg).is_ok());
        assert!(p.check_shapes(&ModelConfig::new(3, 4, 2, 2)).is_err());
    }

    #[test]
    fn variants_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert!("bogus".parse::<Variant>().is_err());
    }
}
