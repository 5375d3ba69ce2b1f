//! Transductive node classification: losses, Adam, full-graph and
//! mini-batch training, metrics, and the depth-sweep and ablation drivers.
//!
//! Training is single-threaded and deterministic for a given seed. Dropout
//! masks and batch permutations draw from seeds derived from
//! `(seed, epoch, batch)`.

mod adam;
mod experiments;
mod metrics;

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::graph::{
    induced_subgraph, neighbor_sample, normalize_adjacency, NormalizedAdjacency, SparseGraph,
};
use crate::model::{infer, init_params, model_forward, Mode, ModelConfig, SmpnnParams};
use crate::seed::derive_seed;
use crate::tensor::Tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use experiments::{
    ablation, depth_sweep, desk_dataset, desk_synthetic, run_variant, sweep_mean, DeskTask,
    RunSummary,
};
pub use metrics::{accuracy, argmax, evaluate, mean_roc_auc, roc_auc, Labels, Metric};

/// Train, validation and test node ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitSpec {
    /// Checks the three lists are in range and pairwise disjoint.
    pub fn validate(&self, num_nodes: usize) -> Result<()> {
        let mut owner = vec![None; num_nodes];
        for (name, ids) in [
            ("train", &self.train),
            ("val", &self.val),
            ("test", &self.test),
        ] {
            for &i in ids {
                if i >= num_nodes {
                    return Err(Error::NodeOutOfRange {
                        index: i,
                        num_nodes,
                    });
                }
                if let Some(prev) = owner[i] {
                    return Err(Error::Inconsistent(format!(
                        "node {i} is in both the {prev} and {name} splits"
                    )));
                }
                owner[i] = Some(name);
            }
        }
        Ok(())
    }

    /// Random split: the first `train_frac` of a seeded permutation trains,
    /// the next `val_frac` validates, the rest tests.
    pub fn random(num_nodes: usize, train_frac: f64, val_frac: f64, seed: u64) -> Result<Self> {
        if !(train_frac > 0.0 && val_frac >= 0.0 && train_frac + val_frac <= 1.0) {
            return Err(Error::invalid(format!(
                "bad split fractions {train_frac}, {val_frac}"
            )));
        }
        let mut ids: Vec<usize> = (0..num_nodes).collect();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = (train_frac * num_nodes as f64).round() as usize;
        let n_val = (val_frac * num_nodes as f64).round() as usize;
        let n_val = n_val.min(num_nodes - n_train);
        let mut split = SplitSpec {
            train: ids[..n_train].to_vec(),
            val: ids[n_train..n_train + n_val].to_vec(),
            test: ids[n_train + n_val..].to_vec(),
        };
        split.train.sort_unstable();
        split.val.sort_unstable();
        split.test.sort_unstable();
        Ok(split)
    }
}

/// A graph with node features, targets and a split.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub graph: SparseGraph,
    pub features: Tensor,
    pub labels: Labels,
    pub split: SplitSpec,
}

impl Dataset {
    pub fn new(
        graph: SparseGraph,
        features: Tensor,
        labels: Labels,
        split: SplitSpec,
    ) -> Result<Self> {
        let n = graph.num_nodes();
        if features.rows() != n {
            return Err(Error::Inconsistent(format!(
                "graph has {n} nodes but the feature matrix has {} rows",
                features.rows()
            )));
        }
        if labels.len() != n {
            return Err(Error::Inconsistent(format!(
                "graph has {n} nodes but there are {} labels",
                labels.len()
            )));
        }
        split.validate(n)?;
        if split.train.is_empty() {
            return Err(Error::invalid("training split is empty"));
        }
        Ok(Self {
            graph,
            features,
            labels,
            split,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn metric(&self) -> Metric {
        self.labels.default_metric()
    }

    /// Model configuration matching this dataset's input and output widths.
    pub fn model_config(&self, hidden_dim: usize, depth: usize) -> ModelConfig {
        ModelConfig::new(
            self.features.cols(),
            hidden_dim,
            self.labels.num_outputs(),
            depth,
        )
    }
}

/// Optimizer and schedule settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Nodes per mini-batch; `None` trains on the full graph.
    pub batch_nodes: Option<usize>,
    pub dropout: f64,
    pub seed: u64,
    /// Evaluate every this many epochs (and always after the last).
    pub eval_every: usize,
    /// In mini-batch mode, evaluate on sampled neighborhoods instead of the
    /// full graph.
    pub sampled_inference: bool,
    pub fanouts: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            epochs: 100,
            batch_nodes: None,
            dropout: 0.0,
            seed: 0,
            eval_every: 1,
            sampled_inference: false,
            fanouts: vec![15, 10, 5],
        }
    }
}

impl TrainConfig {
    /// `lr = 0` is accepted (a frozen model), negative rates are not.
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!(
                "lr must be finite and non-negative, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("Adam betas must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::invalid("Adam eps must be positive"));
        }
        if self.eval_every == 0 {
            return Err(Error::invalid("eval_every must be at least 1"));
        }
        if self.batch_nodes == Some(0) {
            return Err(Error::invalid("batch_nodes must be at least 1"));
        }
        if self.sampled_inference && self.fanouts.is_empty() {
            return Err(Error::invalid("sampled inference needs fanouts"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

/// One evaluation point. `epoch` 0 is the untrained model.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_metric: f64,
    pub test_metric: f64,
    pub wall_ms: f64,
}

pub const METRICS_HEADER: &str = "epoch,train_loss,val_metric,test_metric,wall_ms";

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:?},{:?},{:?},{:.3}",
            r.epoch, r.train_loss, r.val_metric, r.test_metric, r.wall_ms
        );
    }
    out
}

/// Everything a training run produces.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub metric: Metric,
    pub metrics: Vec<MetricsRow>,
    /// Parameters at the best validation score (later epochs win ties).
    pub best_params: SmpnnParams,
    pub best_epoch: usize,
    pub final_params: SmpnnParams,
    /// Mini-batches skipped because they held no training node.
    pub skipped_batches: usize,
}

impl TrainOutcome {
    pub fn best_row(&self) -> &MetricsRow {
        self.metrics
            .iter()
            .find(|r| r.epoch == self.best_epoch)
            .expect("best epoch is always an evaluated epoch")
    }
}

fn loss_var<'a>(
    tape: &mut Tape<'a>,
    logits: crate::autodiff::Var,
    labels: &Labels,
    rows: &[usize],
) -> Result<crate::autodiff::Var> {
    match labels {
        Labels::Classes { labels, .. } => {
            let ys: Vec<usize> = rows.iter().map(|&r| labels[r]).collect();
            tape.cross_entropy(logits, rows, &ys)
        }
        Labels::MultiLabel(targets) => tape.bce_with_logits(logits, rows, targets),
    }
}

/// Loss on `rows` and its gradient for every parameter, in canonical order.
/// `labels` are aligned with the rows of `x`.
pub fn loss_and_gradients(
    params: &SmpnnParams,
    cfg: &ModelConfig,
    adj: &NormalizedAdjacency,
    x: &Tensor,
    labels: &Labels,
    rows: &[usize],
    mode: &mut Mode,
) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let bound = params.bind(&mut tape);
    let out = model_forward(&mut tape, xv, adj, &bound, cfg, mode)?;
    let loss = loss_var(&mut tape, out.logits, labels, rows)?;
    let value = tape.value(loss).item();
    let grads = tape.backward(loss)?;
    let flat = params
        .named()
        .into_iter()
        .zip(bound.named())
        .map(|((_, t), (_, &v))| grads.get_or_zeros(v, t))
        .collect();
    Ok((value, flat))
}

/// Evaluation-mode loss of precomputed logits on `rows`.
pub fn loss_of_logits(logits: &Tensor, labels: &Labels, rows: &[usize]) -> Result<f64> {
    let mut tape = Tape::new();
    let z = tape.constant(logits.clone());
    let loss = loss_var(&mut tape, z, labels, rows)?;
    Ok(tape.value(loss).item())
}

/// Logits for every node from independent sampled neighborhoods of
/// `chunk`-sized groups of target nodes.
pub fn sampled_logits(
    params: &SmpnnParams,
    cfg: &ModelConfig,
    ds: &Dataset,
    fanouts: &[usize],
    chunk: usize,
    seed: u64,
) -> Result<Tensor> {
    let n = ds.num_nodes();
    let mut out = Tensor::zeros(n, cfg.num_classes);
    let targets: Vec<usize> = (0..n).collect();
    for (c, group) in targets.chunks(chunk.max(1)).enumerate() {
        let (sub, map) =
            neighbor_sample(&ds.graph, group, fanouts, derive_seed(seed, &[c as u64]))?;
        let adj = normalize_adjacency(&sub)?;
        let logits = infer(&ds.features.select_rows(&map), &adj, params, cfg)?.logits;
        for (k, &node) in group.iter().enumerate() {
            out.row_mut(node).copy_from_slice(logits.row(k));
        }
    }
    Ok(out)
}

struct Evaluator<'d> {
    ds: &'d Dataset,
    adj: NormalizedAdjacency,
    metric: Metric,
    sampled: Option<(Vec<usize>, usize)>,
    seed: u64,
}

impl<'d> Evaluator<'d> {
    fn logits(&self, params: &SmpnnParams, cfg: &ModelConfig) -> Result<Tensor> {
        match &self.sampled {
            None => Ok(infer(&self.ds.features, &self.adj, params, cfg)?.logits),
            Some((fanouts, chunk)) => {
                sampled_logits(params, cfg, self.ds, fanouts, *chunk, self.seed)
            }
        }
    }

    fn score(&self, logits: &Tensor, rows: &[usize]) -> Result<f64> {
        if rows.is_empty() {
            return Ok(f64::NAN);
        }
        evaluate(logits, &self.ds.labels, rows, self.metric)
    }

    fn row(
        &self,
        params: &SmpnnParams,
        cfg: &ModelConfig,
        epoch: usize,
        train_loss: Option<f64>,
        start: Instant,
    ) -> Result<MetricsRow> {
        let logits = self.logits(params, cfg)?;
        let train_loss = match train_loss {
            Some(l) => l,
            None => loss_of_logits(&logits, &self.ds.labels, &self.ds.split.train)?,
        };
        Ok(MetricsRow {
            epoch,
            train_loss,
            val_metric: self.score(&logits, &self.ds.split.val)?,
            test_metric: self.score(&logits, &self.ds.split.test)?,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    }
}

/// Tracks the best validation score; later epochs win ties. Without a
/// validation split the last evaluated epoch is kept.
struct BestTracker {
    val: f64,
    epoch: usize,
    params: SmpnnParams,
}

impl BestTracker {
    fn offer(&mut self, row: &MetricsRow, params: &SmpnnParams) {
        if row.val_metric >= self.val || row.val_metric.is_nan() {
            self.val = if row.val_metric.is_nan() {
                f64::NEG_INFINITY
            } else {
                row.val_metric
            };
            self.epoch = row.epoch;
            self.params = params.clone();
        }
    }
}

fn check_model(ds: &Dataset, cfg: &ModelConfig) -> Result<()> {
    cfg.validate()?;
    if cfg.input_dim != ds.features.cols() || cfg.num_classes != ds.labels.num_outputs() {
        return Err(Error::invalid(format!(
            "model maps {} -> {} but the dataset has {} features and {} outputs",
            cfg.input_dim,
            cfg.num_classes,
            ds.features.cols(),
            ds.labels.num_outputs()
        )));
    }
    Ok(())
}

/// Trains on the whole graph: one Adam step per epoch with the loss on the
/// training nodes only. Evaluates at epoch 0 and every `eval_every` epochs.
pub fn train_full_graph(ds: &Dataset, cfg: &ModelConfig, tc: &TrainConfig) -> Result<TrainOutcome> {
    tc.validate()?;
    check_model(ds, cfg)?;
    let start = Instant::now();
    let adj = normalize_adjacency(&ds.graph)?;
    let eval = Evaluator {
        ds,
        adj: adj.clone(),
        metric: ds.metric(),
        sampled: None,
        seed: tc.seed,
    };
    let mut params = init_params(cfg, tc.seed)?;
    let mut state = AdamState::new(&params);
    let first = eval.row(&params, cfg, 0, None, start)?;
    let mut best = BestTracker {
        val: f64::NEG_INFINITY,
        epoch: 0,
        params: params.clone(),
    };
    best.offer(&first, &params);
    let mut metrics = vec![first];
    for epoch in 1..=tc.epochs {
        let mut mode = Mode::train(tc.dropout, derive_seed(tc.seed, &[epoch as u64, 0]));
        let (loss, grads) = loss_and_gradients(
            &params,
            cfg,
            &adj,
            &ds.features,
            &ds.labels,
            &ds.split.train,
            &mut mode,
        )?;
        adam_step(&mut params, &grads, &mut state, &tc.adam())?;
        if epoch % tc.eval_every == 0 || epoch == tc.epochs {
            let row = eval.row(&params, cfg, epoch, Some(loss), start)?;
            best.offer(&row, &params);
            metrics.push(row);
        }
    }
    Ok(TrainOutcome {
        metric: eval.metric,
        metrics,
        best_params: best.params,
        best_epoch: best.epoch,
        final_params: params,
        skipped_batches: 0,
    })
}

/// The batches of one epoch: a seeded permutation of all nodes cut into
/// `batch_nodes`-sized pieces, each sorted by node id.
pub fn epoch_batches(
    num_nodes: usize,
    batch_nodes: usize,
    seed: u64,
    epoch: usize,
) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..num_nodes).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
        seed,
        &[epoch as u64],
    )));
    perm.chunks(batch_nodes.max(1))
        .map(|c| {
            let mut b = c.to_vec();
            b.sort_unstable();
            b
        })
        .collect()
}

/// Trains on induced subgraphs of uniformly sampled node batches, one Adam
/// step per batch, with the loss on the batch's training nodes. Batches with
/// no training node are skipped and counted. Evaluation uses the full graph,
/// or sampled neighborhoods when `sampled_inference` is set.
pub fn train_mini_batch(ds: &Dataset, cfg: &ModelConfig, tc: &TrainConfig) -> Result<TrainOutcome> {
    tc.validate()?;
    check_model(ds, cfg)?;
    let n = ds.num_nodes();
    let batch_nodes = tc
        .batch_nodes
        .ok_or_else(|| Error::invalid("mini-batch training needs batch_nodes"))?;
    if batch_nodes > n {
        return Err(Error::invalid(format!(
            "batch_nodes {batch_nodes} exceeds the {n} nodes of the graph"
        )));
    }
    let start = Instant::now();
    let eval = Evaluator {
        ds,
        adj: normalize_adjacency(&ds.graph)?,
        metric: ds.metric(),
        sampled: tc
            .sampled_inference
            .then(|| (tc.fanouts.clone(), batch_nodes)),
        seed: tc.seed,
    };
    let mut is_train = vec![false; n];
    for &i in &ds.split.train {
        is_train[i] = true;
    }
    let mut params = init_params(cfg, tc.seed)?;
    let mut state = AdamState::new(&params);
    let first = eval.row(&params, cfg, 0, None, start)?;
    let mut best = BestTracker {
        val: f64::NEG_INFINITY,
        epoch: 0,
        params: params.clone(),
    };
    best.offer(&first, &params);
    let mut metrics = vec![first];
    let mut skipped = 0;
    for epoch in 1..=tc.epochs {
        let (mut loss_sum, mut labeled) = (0.0, 0usize);
        for (b, batch) in epoch_batches(n, batch_nodes, tc.seed, epoch)
            .into_iter()
            .enumerate()
        {
            let rows: Vec<usize> = (0..batch.len()).filter(|&k| is_train[batch[k]]).collect();
            if rows.is_empty() {
                skipped += 1;
                continue;
            }
            let (sub, map) = induced_subgraph(&ds.graph, &batch)?;
            let adj = normalize_adjacency(&sub)?;
            let x = ds.features.select_rows(&map);
            let labels = ds.labels.select(&map);
            let mut mode = Mode::train(tc.dropout, derive_seed(tc.seed, &[epoch as u64, b as u64]));
            let (loss, grads) =
                loss_and_gradients(&params, cfg, &adj, &x, &labels, &rows, &mut mode)?;
            adam_step(&mut params, &grads, &mut state, &tc.adam())?;
            loss_sum += loss * rows.len() as f64;
            labeled += rows.len();
        }
        if epoch % tc.eval_every == 0 || epoch == tc.epochs {
            let loss = if labeled > 0 {
                loss_sum / labeled as f64
            } else {
                f64::NAN
            };
            let row = eval.row(&params, cfg, epoch, Some(loss), start)?;
            best.offer(&row, &params);
            metrics.push(row);
        }
    }
    Ok(TrainOutcome {
        metric: eval.metric,
        metrics,
        best_params: best.params,
        best_epoch: best.epoch,
        final_params: params,
        skipped_batches: skipped,
    })
}

/// Full-graph or mini-batch training depending on `batch_nodes`.
pub fn train(ds: &Dataset, cfg: &ModelConfig, tc: &TrainConfig) -> Result<TrainOutcome> {
    match tc.batch_nodes {
        None => train_full_graph(ds, cfg, tc),
        Some(_) => train_mini_batch(ds, cfg, tc),
    }
}
