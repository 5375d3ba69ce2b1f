//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every operation appends a node holding its forward value and a
//! vector-Jacobian product closure. Node ids grow monotonically, so a node's
//! parents always precede it and walking ids backwards is a reverse
//! topological order.
//!
//! ```
//! use smpnn::autodiff::Tape;
//! use smpnn::tensor::Tensor;
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(Tensor::from_rows(&[vec![1.0, -2.0]]).unwrap());
//! let sq = tape.hadamard(x, x).unwrap();
//! let loss = tape.sum(sq);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[2.0, -4.0]);
//! ```

mod gradcheck;
mod primitives;

use std::rc::Rc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{FlopCounter, NormalizedAdjacency};
use crate::tensor::Tensor;

pub use gradcheck::{
    grad_check, relative_error, GradCheckEntry, GradCheckOptions, GradCheckReport, Stencil,
};
pub use primitives::check_primitives;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

type Vjp<'a> = Box<dyn Fn(&Tensor, &[bool]) -> Vec<Option<Tensor>> + 'a>;

struct Node<'a> {
    value: Rc<Tensor>,
    parents: Vec<usize>,
    vjp: Option<Vjp<'a>>,
    requires_grad: bool,
}

/// Records differentiable operations. Single-threaded; `'a` bounds borrowed
/// graph operators and the optional FLOP counter.
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    counter: Option<&'a FlopCounter>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// The gradient of `v`, or zeros shaped like `like` when nothing flowed.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.rows(), like.cols()))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `x * sigmoid(x)` elementwise; the value computed by [`Tape::silu`].
pub(crate) fn silu_value(x: &Tensor) -> Tensor {
    x.map(|v| v * sigmoid(v))
}

/// Row-wise layer norm value with shapes already checked: returns the
/// output, the normalized rows and each row's inverse standard deviation.
pub(crate) fn layer_norm_value(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    eps: f64,
) -> (Tensor, Tensor, Vec<f64>) {
    let (n, d) = x.shape();
    let mut x_hat = Tensor::zeros(n, d);
    let mut inv_std = vec![0.0; n];
    for i in 0..n {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + eps).sqrt();
        inv_std[i] = r;
        for (o, v) in x_hat.row_mut(i).iter_mut().zip(row) {
            *o = (v - mean) * r;
        }
    }
    let mut out = x_hat.clone();
    for i in 0..n {
        for (j, o) in out.row_mut(i).iter_mut().enumerate() {
            *o = *o * gamma.data()[j] + beta.data()[j];
        }
    }
    (out, x_hat, inv_std)
}

/// Shape checks shared by every layer-norm implementation.
pub(crate) fn check_layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<()> {
    let d = x.cols();
    if d < 2 {
        return Err(Error::invalid(format!(
            "layer_norm needs at least 2 features, got {d}"
        )));
    }
    if gamma.shape() != (1, d) {
        return Err(shape_err("layer_norm gamma", x, gamma));
    }
    if beta.shape() != (1, d) {
        return Err(shape_err("layer_norm beta", x, beta));
    }
    Ok(())
}

fn shape_err(op: &'static str, left: &Tensor, right: &Tensor) -> Error {
    Error::ShapeMismatch {
        op,
        left: left.shape(),
        right: right.shape(),
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            counter: None,
        }
    }

    pub fn with_counter(counter: &'a FlopCounter) -> Self {
        Self {
            nodes: Vec::new(),
            counter: Some(counter),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, parents: Vec<usize>, vjp: Option<Vjp<'a>>) -> Var {
        let requires_grad = parents.iter().any(|&p| self.nodes[p].requires_grad);
        self.nodes.push(Node {
            value: Rc::new(value),
            parents,
            vjp: if requires_grad { vjp } else { None },
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A trainable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value: Rc::new(value),
            parents: Vec::new(),
            vjp: None,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// An input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value: Rc::new(value),
            parents: Vec::new(),
            vjp: None,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn rc(&self, v: Var) -> Rc<Tensor> {
        Rc::clone(&self.nodes[v.0].value)
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Reverse pass from a `1 x 1` output. Each node is visited once; only
    /// gradients of nodes without a VJP (leaves) are kept in the result.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let out = self.value(loss);
        if out.shape() != (1, 1) {
            return Err(Error::invalid(format!(
                "backward needs a scalar output, got {:?}",
                out.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            let Some(vjp) = node.vjp.as_ref() else {
                continue;
            };
            let Some(upstream) = grads[id].take() else {
                continue;
            };
            let needs: Vec<bool> = node
                .parents
                .iter()
                .map(|&p| self.nodes[p].requires_grad)
                .collect();
            let parent_grads = vjp(&upstream, &needs);
            for ((&p, g), need) in node.parents.iter().zip(parent_grads).zip(needs) {
                let (true, Some(g)) = (need, g) else {
                    continue;
                };
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&g)?,
                    slot @ None => *slot = Some(g),
                }
            }
        }
        Ok(Gradients { grads })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.rc(a), self.rc(b));
        let out = av.matmul(&bv).map_err(|_| shape_err("matmul", &av, &bv))?;
        if let Some(c) = self.counter {
            c.add_dense(2 * (av.rows() * av.cols() * bv.cols()) as u64);
        }
        let vjp: Vjp<'a> = Box::new(move |g, needs| {
            vec![
                needs[0].then(|| g.matmul_t(&bv).expect("shapes checked in forward")),
                needs[1].then(|| av.t_matmul(g).expect("shapes checked in forward")),
            ]
        });
        Ok(self.push(out, vec![a.0, b.0], Some(vjp)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        let vjp: Vjp<'a> =
            Box::new(|g, needs| vec![needs[0].then(|| g.clone()), needs[1].then(|| g.clone())]);
        Ok(self.push(out, vec![a.0, b.0], Some(vjp)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).sub(self.value(b))?;
        let vjp: Vjp<'a> =
            Box::new(|g, needs| vec![needs[0].then(|| g.clone()), needs[1].then(|| g.scale(-1.0))]);
        Ok(self.push(out, vec![a.0, b.0], Some(vjp)))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.rc(a), self.rc(b));
        let out = av.hadamard(&bv)?;
        let vjp: Vjp<'a> = Box::new(move |g, needs| {
            vec![
                needs[0].then(|| g.hadamard(&bv).expect("same shape")),
                needs[1].then(|| g.hadamard(&av).expect("same shape")),
            ]
        });
        Ok(self.push(out, vec![a.0, b.0], Some(vjp)))
    }

    /// Multiplication by a constant.
    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).scale(s);
        let vjp: Vjp<'a> = Box::new(move |g, _| vec![Some(g.scale(s))]);
        self.push(out, vec![a.0], Some(vjp))
    }

    /// `alpha * a` where `alpha` is a differentiable `1 x 1` tensor.
    pub fn mul_scalar(&mut self, alpha: Var, a: Var) -> Result<Var> {
        let (sv, av) = (self.rc(alpha), self.rc(a));
        if sv.shape() != (1, 1) {
            return Err(shape_err("mul_scalar", &sv, &av));
        }
        let s = sv.item();
        let out = av.scale(s);
        let vjp: Vjp<'a> = Box::new(move |g, needs| {
            vec![
                needs[0].then(|| {
                    Tensor::scalar(g.data().iter().zip(av.data()).map(|(x, y)| x * y).sum())
                }),
                needs[1].then(|| g.scale(s)),
            ]
        });
        Ok(self.push(out, vec![alpha.0, a.0], Some(vjp)))
    }

    /// `Ã X` with `Ã` held constant. The VJP is `Ã^T G = Ã G` by symmetry.
    pub fn spmm(&mut self, adj: &'a NormalizedAdjacency, x: Var) -> Result<Var> {
        let out = adj.spmm(self.value(x))?;
        if let Some(c) = self.counter {
            c.add_message(2 * (adj.nnz() * out.cols()) as u64);
        }
        let vjp: Vjp<'a> =
            Box::new(move |g, _| vec![Some(adj.spmm(g).expect("shape checked in forward"))]);
        Ok(self.push(out, vec![x.0], Some(vjp)))
    }

    /// `x * sigmoid(x)` elementwise.
    pub fn silu(&mut self, x: Var) -> Var {
        let xv = self.rc(x);
        let out = silu_value(&xv);
        let vjp: Vjp<'a> = Box::new(move |g, _| {
            let d = xv.map(|v| {
                let s = sigmoid(v);
                s * (1.0 + v * (1.0 - s))
            });
            vec![Some(g.hadamard(&d).expect("same shape"))]
        });
        self.push(out, vec![x.0], Some(vjp))
    }

    /// Row-wise layer normalization with biased variance, then the featurewise
    /// affine map `gamma * x_hat + beta` (`gamma`, `beta` are `1 x D`).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (xv, gv, bv) = (self.rc(x), self.rc(gamma), self.rc(beta));
        let (n, d) = xv.shape();
        check_layer_norm(&xv, &gv, &bv)?;
        let (out, x_hat, inv_std) = layer_norm_value(&xv, &gv, &bv, eps);
        let vjp: Vjp<'a> = Box::new(move |g, needs| {
            let grad_x = needs[0].then(|| {
                let mut dx = Tensor::zeros(n, d);
                for i in 0..n {
                    let gr = g.row(i);
                    let xh = x_hat.row(i);
                    let dxh: Vec<f64> = gr.iter().zip(gv.data()).map(|(a, b)| a * b).collect();
                    let mean_dxh = dxh.iter().sum::<f64>() / d as f64;
                    let mean_dxh_xh =
                        dxh.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                    for (j, o) in dx.row_mut(i).iter_mut().enumerate() {
                        *o = inv_std[i] * (dxh[j] - mean_dxh - xh[j] * mean_dxh_xh);
                    }
                }
                dx
            });
            let grad_gamma = needs[1].then(|| {
                let mut dg = Tensor::zeros(1, d);
                for i in 0..n {
                    for (j, o) in dg.data_mut().iter_mut().enumerate() {
                        *o += g.get(i, j) * x_hat.get(i, j);
                    }
                }
                dg
            });
            let grad_beta = needs[2].then(|| g.column_sums());
            vec![grad_x, grad_gamma, grad_beta]
        });
        Ok(self.push(out, vec![x.0, gamma.0, beta.0], Some(vjp)))
    }

    /// Softmax over each row.
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let mut out = xv.clone();
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let y = Rc::new(out.clone());
        let vjp: Vjp<'a> = Box::new(move |g, _| {
            let mut dx = Tensor::zeros(y.rows(), y.cols());
            for i in 0..y.rows() {
                let dot: f64 = g.row(i).iter().zip(y.row(i)).map(|(a, b)| a * b).sum();
                for ((o, gv), yv) in dx.row_mut(i).iter_mut().zip(g.row(i)).zip(y.row(i)) {
                    *o = yv * (gv - dot);
                }
            }
            vec![Some(dx)]
        });
        self.push(out, vec![x.0], Some(vjp))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let out = self.value(x).transpose();
        let vjp: Vjp<'a> = Box::new(|g, _| vec![Some(g.transpose())]);
        self.push(out, vec![x.0], Some(vjp))
    }

    /// Sum over rows, giving a `1 x D` row.
    pub fn column_sums(&mut self, x: Var) -> Var {
        let n = self.value(x).rows();
        let out = self.value(x).column_sums();
        let vjp: Vjp<'a> =
            Box::new(move |g, _| vec![Some(Tensor::from_fn(n, g.cols(), |_, j| g.get(0, j)))]);
        self.push(out, vec![x.0], Some(vjp))
    }

    /// Repeats a `1 x D` row `n` times.
    pub fn broadcast_rows(&mut self, x: Var, n: usize) -> Result<Var> {
        let xv = self.value(x);
        if xv.rows() != 1 {
            return Err(Error::invalid(format!(
                "broadcast_rows needs a single row, got {:?}",
                xv.shape()
            )));
        }
        let out = Tensor::from_fn(n, xv.cols(), |_, j| xv.get(0, j));
        let vjp: Vjp<'a> = Box::new(|g, _| vec![Some(g.column_sums())]);
        Ok(self.push(out, vec![x.0], Some(vjp)))
    }

    /// `x / ‖x‖_F`.
    pub fn normalize(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let norm = xv.frobenius_norm();
        if norm == 0.0 {
            return Err(Error::invalid("cannot normalize a zero tensor"));
        }
        let y = Rc::new(xv.scale(1.0 / norm));
        let out = (*y).clone();
        let vjp: Vjp<'a> = Box::new(move |g, _| {
            let dot: f64 = g.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
            vec![Some(
                g.zip_with(&y, "normalize", |gv, yv| (gv - yv * dot) / norm)
                    .expect("same shape"),
            )]
        });
        Ok(self.push(out, vec![x.0], Some(vjp)))
    }

    /// Each row divided by its own Euclidean norm.
    pub fn normalize_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let norms: Vec<f64> = (0..xv.rows())
            .map(|i| xv.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        if let Some(i) = norms.iter().position(|&n| n == 0.0) {
            return Err(Error::invalid(format!("row {i} has zero norm")));
        }
        let y = Rc::new(Tensor::from_fn(xv.rows(), xv.cols(), |i, j| {
            xv.get(i, j) / norms[i]
        }));
        let out = (*y).clone();
        let vjp: Vjp<'a> = Box::new(move |g, _| {
            let mut dx = Tensor::zeros(y.rows(), y.cols());
            for i in 0..y.rows() {
                let dot: f64 = g.row(i).iter().zip(y.row(i)).map(|(a, b)| a * b).sum();
                for ((o, gv), yv) in dx.row_mut(i).iter_mut().zip(g.row(i)).zip(y.row(i)) {
                    *o = (gv - yv * dot) / norms[i];
                }
            }
            vec![Some(dx)]
        });
        Ok(self.push(out, vec![x.0], Some(vjp)))
    }

    /// Sum of all entries as a `1 x 1` tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let (r, c) = self.value(x).shape();
        let out = Tensor::scalar(self.value(x).sum());
        let vjp: Vjp<'a> = Box::new(move |g, _| vec![Some(Tensor::filled(r, c, g.item()))]);
        self.push(out, vec![x.0], Some(vjp))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let count = self.value(x).len().max(1) as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / count)
    }

    /// Mean softmax cross-entropy over `rows`, where `labels[i]` is the class of
    /// `rows[i]`.
    pub fn cross_entropy(&mut self, logits: Var, rows: &[usize], labels: &[usize]) -> Result<Var> {
        let zv = self.rc(logits);
        let classes = zv.cols();
        if rows.len() != labels.len() {
            return Err(Error::invalid(
                "cross_entropy rows and labels differ in length",
            ));
        }
        if rows.is_empty() {
            return Err(Error::invalid("cross_entropy over zero rows"));
        }
        let mut probs = Vec::with_capacity(rows.len());
        let mut total = 0.0;
        for (&r, &y) in rows.iter().zip(labels) {
            if y >= classes {
                return Err(Error::LabelOutOfRange {
                    label: y,
                    num_classes: classes,
                });
            }
            if r >= zv.rows() {
                return Err(Error::NodeOutOfRange {
                    index: r,
                    num_nodes: zv.rows(),
                });
            }
            let row = zv.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[y];
            probs.push(row.iter().map(|v| (v - lse).exp()).collect::<Vec<f64>>());
        }
        let m = rows.len() as f64;
        let rows = rows.to_vec();
        let labels = labels.to_vec();
        let (n, c) = zv.shape();
        let vjp: Vjp<'a> = Box::new(move |g, _| {
            let scale = g.item() / m;
            let mut dz = Tensor::zeros(n, c);
            for ((&r, &y), p) in rows.iter().zip(&labels).zip(&probs) {
                let out = dz.row_mut(r);
                for (j, o) in out.iter_mut().enumerate() {
                    *o += scale * (p[j] - if j == y { 1.0 } else { 0.0 });
                }
            }
            vec![Some(dz)]
        });
        Ok(self.push(Tensor::scalar(total / m), vec![logits.0], Some(vjp)))
    }

    /// Mean binary cross-entropy with logits over the given rows and every
    /// column of `targets` (entries in {0, 1}).
    pub fn bce_with_logits(
        &mut self,
        logits: Var,
        rows: &[usize],
        targets: &Tensor,
    ) -> Result<Var> {
        let zv = self.rc(logits);
        if targets.cols() != zv.cols() || targets.rows() != zv.rows() {
            return Err(shape_err("bce_with_logits", &zv, targets));
        }
        if rows.is_empty() {
            return Err(Error::invalid("bce_with_logits over zero rows"));
        }
        let c = zv.cols();
        let m = (rows.len() * c) as f64;
        let mut total = 0.0;
        for &r in rows {
            for (z, t) in zv.row(r).iter().zip(targets.row(r)) {
                total += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
            }
        }
        let rows = rows.to_vec();
        let targets = targets.clone();
        let vjp: Vjp<'a> = Box::new(move |g, _| {
            let scale = g.item() / m;
            let mut dz = Tensor::zeros(zv.rows(), c);
            for &r in &rows {
                for j in 0..c {
                    dz.set(r, j, scale * (sigmoid(zv.get(r, j)) - targets.get(r, j)));
                }
            }
            vec![Some(dz)]
        });
        Ok(self.push(Tensor::scalar(total / m), vec![logits.0], Some(vjp)))
    }

    /// Inverted dropout: in train mode zeroes entries with probability `p` and
    /// scales survivors by `1/(1-p)`; otherwise returns `x` unchanged.
    pub fn dropout(&mut self, x: Var, p: f64, rng: &mut impl Rng, train: bool) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::invalid(format!(
                "dropout probability {p} outside [0, 1)"
            )));
        }
        if !train || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let xv = self.value(x);
        let mask = Tensor::from_fn(xv.rows(), xv.cols(), |_, _| {
            if rng.gen::<f64>() < p {
                0.0
            } else {
                keep
            }
        });
        let out = xv.hadamard(&mask)?;
        let vjp: Vjp<'a> = Box::new(move |g, _| vec![Some(g.hadamard(&mask).expect("same shape"))]);
        Ok(self.push(out, vec![x.0], Some(vjp)))
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn t(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_identity_passes_gradient_through() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let eye = tape.constant(Tensor::identity(2));
        let y = tape.matmul(eye, x).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
        let s = tape.sum(y);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap(), &Tensor::ones(2, 2));
        assert!(g.get(eye).is_none());
    }

    #[test]
    fn add_sends_upstream_to_both() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(&[vec![1.0, 2.0]]));
        let b = tape.leaf(t(&[vec![3.0, 5.0]]));
        let c = tape.add(a, b).unwrap();
        let w = tape.constant(t(&[vec![2.0], vec![-1.0]]));
        let out = tape.matmul(c, w).unwrap();
        let g = tape.backward(out).unwrap();
        assert_eq!(g.get(a).unwrap().data(), &[2.0, -1.0]);
        assert_eq!(g.get(b).unwrap().data(), &[2.0, -1.0]);
    }

    #[test]
    fn silu_values_and_slope() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[vec![0.0, 1.0]]));
        let y = tape.silu(x);
        assert_eq!(tape.value(y).get(0, 0), 0.0);
        let expected = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((tape.value(y).get(0, 1) - expected).abs() < 1e-15);
        assert!((expected - 0.731_058_578_630_004_9).abs() < 1e-15);
        let s = tape.sum(y);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().get(0, 0), 0.5);
    }

    #[test]
    fn silu_does_not_overflow() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[vec![-1000.0, 1000.0]]));
        let y = tape.silu(x);
        assert!(tape.value(y).all_finite());
        assert_eq!(tape.value(y).get(0, 1), 1000.0);
    }

    #[test]
    fn layer_norm_basic_rows() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[vec![3.0, 3.0, 3.0], vec![1.0, -1.0, 0.0]]));
        let gamma = tape.leaf(Tensor::ones(1, 3));
        let beta = tape.leaf(Tensor::zeros(1, 3));
        let y = tape.layer_norm(x, gamma, beta, 1e-5).unwrap();
        assert_eq!(tape.value(y).row(0), &[0.0, 0.0, 0.0]);
        let row = tape.value(y).row(1);
        let mean = row.iter().sum::<f64>() / 3.0;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-4);
    }

    #[test]
    fn layer_norm_pair_is_fixed_point_without_eps() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[vec![1.0, -1.0]]));
        let gamma = tape.leaf(Tensor::ones(1, 2));
        let beta = tape.leaf(Tensor::zeros(1, 2));
        let y = tape.layer_norm(x, gamma, beta, 0.0).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, -1.0]);
    }

    #[test]
    fn layer_norm_needs_two_features() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::ones(3, 1));
        let gamma = tape.leaf(Tensor::ones(1, 1));
        let beta = tape.leaf(Tensor::zeros(1, 1));
        assert!(tape.layer_norm(x, gamma, beta, 1e-5).is_err());
    }

    #[test]
    fn softmax_and_cross_entropy_uniform() {
        let mut tape = Tape::new();
        let z = tape.leaf(Tensor::zeros(1, 2));
        let p = tape.softmax_rows(z);
        assert_eq!(tape.value(p).data(), &[0.5, 0.5]);
        let ce = tape.cross_entropy(z, &[0], &[0]).unwrap();
        assert!((tape.value(ce).item() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(matches!(
            tape.cross_entropy(z, &[0], &[2]),
            Err(Error::LabelOutOfRange {
                label: 2,
                num_classes: 2
            })
        ));
    }

    #[test]
    fn bce_at_zero_logit() {
        let mut tape = Tape::new();
        let z = tape.leaf(Tensor::zeros(2, 1));
        let targets = t(&[vec![1.0], vec![0.0]]);
        let l = tape.bce_with_logits(z, &[0, 1], &targets).unwrap();
        assert!((tape.value(l).item() - std::f64::consts::LN_2).abs() < 1e-15);
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get(z).unwrap().data(), &[-0.25, 0.25]);
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::ones(50, 4));
        let same = tape.dropout(x, 0.5, &mut rng, false).unwrap();
        assert_eq!(same, x);
        let d = tape.dropout(x, 0.5, &mut rng, true).unwrap();
        assert!(tape.value(d).data().iter().all(|&v| v == 0.0 || v == 2.0));
        assert!(tape.dropout(x, 1.0, &mut rng, true).is_err());
    }

    #[test]
    fn backward_requires_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::ones(2, 2));
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn gradients_of_a_sum_of_losses_add_up() {
        let x0 = Tensor::from_fn(3, 2, |i, j| (i as f64) - 0.7 * j as f64);
        let grads_of = |which: u8| {
            let mut tape = Tape::new();
            let x = tape.leaf(x0.clone());
            let s = tape.silu(x);
            let l1 = tape.sum(s);
            let sq = tape.hadamard(x, x).unwrap();
            let l2 = tape.mean(sq);
            let loss = match which {
                1 => l1,
                2 => l2,
                _ => tape.add(l1, l2).unwrap(),
            };
            tape.backward(loss).unwrap().get(x).unwrap().clone()
        };
        let both = grads_of(0);
        let split = grads_of(1).add(&grads_of(2)).unwrap();
        for (a, b) in both.data().iter().zip(split.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn shared_parent_accumulates() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[vec![2.0]]));
        let y = tape.hadamard(x, x).unwrap();
        let z = tape.add(y, x).unwrap();
        let g = tape.backward(z).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 5.0);
    }
}
