use crate::error::{Error, Result};
use crate::model::SmpnnParams;
use crate::tensor::Tensor;

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Coupled L2 penalty: `weight_decay * p` is added to each gradient.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// First and second moment estimates, one tensor per parameter in canonical
/// order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &SmpnnParams) -> Self {
        let zeros: Vec<Tensor> = params
            .named()
            .iter()
            .map(|(_, t)| Tensor::zeros(t.rows(), t.cols()))
            .collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update. Every gradient is checked before any
/// parameter changes, so a non-finite gradient leaves the model untouched
/// and the error names the offending parameter.
pub fn adam_step(
    params: &mut SmpnnParams,
    grads: &[Tensor],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    let mut named = params.named_mut();
    if grads.len() != named.len() || state.m.len() != named.len() || state.v.len() != named.len() {
        return Err(Error::invalid(format!(
            "adam_step got {} gradients and {} moment slots for {} parameters",
            grads.len(),
            state.m.len(),
            named.len()
        )));
    }
    for ((name, p), g) in named.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                left: p.shape(),
                right: g.shape(),
            });
        }
        if !g.all_finite() {
            return Err(Error::NonFinite(format!("gradient of `{name}`")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (k, (_, p)) in named.iter_mut().enumerate() {
        let g = &grads[k];
        let m = state.m[k].data_mut();
        let v = state.v[k].data_mut();
        for (i, w) in p.data_mut().iter_mut().enumerate() {
            let gi = g.data()[i] + cfg.weight_decay * *w;
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            *w -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
