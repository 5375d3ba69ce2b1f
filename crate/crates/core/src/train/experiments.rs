use crate::error::{Error, Result};
use crate::graph::{
    make_synthetic, normalize_adjacency, EnergyTrace, SbmParams, SelfLoopPolicy, Synthetic,
    SyntheticKind,
};
use crate::io::{mean_std, Cell, ExperimentReport};
use crate::model::{infer, ModelConfig, Variant};

use super::{train, Dataset, Labels, SplitSpec, TrainConfig};

/// The seeded stochastic-block-model node classification task used by the
/// experiment drivers. Its hyperparameters are our own choice: 1000 nodes in
/// 4 blocks, and features whose class means carry a random sign per node, so
/// that the node-wise feedforward sublayer has something to contribute.
#[derive(Clone, Debug, PartialEq)]
pub struct DeskTask {
    pub sbm: SbmParams,
    pub feature_dim: usize,
    pub train_frac: f64,
    pub val_frac: f64,
    pub policy: SelfLoopPolicy,
    pub seed: u64,
}

impl Default for DeskTask {
    fn default() -> Self {
        Self {
            sbm: SbmParams {
                blocks: 4,
                block_size: 250,
                p_in: 0.04,
                p_out: 0.005,
                separation: 1.5,
                signed_means: true,
            },
            feature_dim: 8,
            train_frac: 0.3,
            val_frac: 0.2,
            policy: SelfLoopPolicy::Add,
            seed: 0,
        }
    }
}

impl DeskTask {
    /// Hidden width used by the desk experiments.
    pub const HIDDEN_DIM: usize = 16;
    /// Depths compared by the depth sweep.
    pub const SWEEP_DEPTHS: [usize; 2] = [2, 12];
    /// Depth of the ablation: deep enough that removing the convolution
    /// residual hurts, shallow enough to stay cheap.
    pub const ABLATION_DEPTH: usize = 8;
    pub const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

    /// Training settings of the desk experiments.
    pub fn train_config() -> TrainConfig {
        TrainConfig {
            epochs: 200,
            lr: 0.01,
            eval_every: 5,
            ..TrainConfig::default()
        }
    }

    pub fn describe(&self) -> String {
        format!(
            "{},feature_dim={},train_frac={},val_frac={},self_loops={},seed={}",
            SyntheticKind::Sbm(self.sbm.clone()).describe(),
            self.feature_dim,
            self.train_frac,
            self.val_frac,
            self.policy.as_str(),
            self.seed
        )
    }
}

/// The generated graph and split of the task, before any self-loop policy;
/// what [`desk_dataset`] assembles and what gets written to disk.
pub fn desk_synthetic(task: &DeskTask) -> Result<(Synthetic, SplitSpec)> {
    let s = make_synthetic(
        &SyntheticKind::Sbm(task.sbm.clone()),
        task.feature_dim,
        task.seed,
    )?;
    let split = SplitSpec::random(
        s.num_nodes,
        task.train_frac,
        task.val_frac,
        task.seed.wrapping_add(1),
    )?;
    Ok((s, split))
}

pub fn desk_dataset(task: &DeskTask) -> Result<Dataset> {
    let (s, split) = desk_synthetic(task)?;
    let graph = s.graph(task.policy)?;
    Dataset::new(
        graph,
        s.features,
        Labels::classes(s.labels, s.num_classes)?,
        split,
    )
}

/// Result of one training run inside a sweep.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub variant: Variant,
    pub depth: usize,
    pub seed: u64,
    /// Test metric at the best validation epoch.
    pub test_metric: f64,
    pub val_metric: f64,
    pub best_epoch: usize,
    /// Per-layer energies of the selected model on the full graph.
    pub energy: EnergyTrace,
}

/// Trains one `(variant, depth, seed)` combination.
pub fn run_variant(
    ds: &Dataset,
    base: &ModelConfig,
    tc: &TrainConfig,
    variant: Variant,
    depth: usize,
    seed: u64,
) -> Result<RunSummary> {
    let cfg = ModelConfig {
        depth,
        block: variant.block_config(),
        ..base.clone()
    };
    let tc = TrainConfig { seed, ..tc.clone() };
    let outcome = train(ds, &cfg, &tc)?;
    let best = outcome.best_row().clone();
    let adj = normalize_adjacency(&ds.graph)?;
    let hidden = infer(&ds.features, &adj, &outcome.best_params, &cfg)?.hidden;
    let energy = EnergyTrace::from_layers(&ds.graph, &hidden)?;
    Ok(RunSummary {
        variant,
        depth,
        seed,
        test_metric: best.test_metric,
        val_metric: best.val_metric,
        best_epoch: outcome.best_epoch,
        energy,
    })
}

const SWEEP_COLUMNS: [&str; 9] = [
    "variant",
    "depth",
    "runs",
    "test_mean",
    "test_std",
    "val_mean",
    "val_std",
    "energy_first_mean",
    "energy_last_mean",
];

fn summarize(report: &mut ExperimentReport, runs: &[RunSummary]) -> Result<()> {
    let v = runs[0].variant;
    let d = runs[0].depth;
    let tests: Vec<f64> = runs.iter().map(|r| r.test_metric).collect();
    let vals: Vec<f64> = runs.iter().map(|r| r.val_metric).collect();
    let first: Vec<f64> = runs
        .iter()
        .map(|r| r.energy.per_layer_normalized[0])
        .collect();
    let last: Vec<f64> = runs
        .iter()
        .map(|r| {
            *r.energy
                .per_layer_normalized
                .last()
                .expect("at least the input layer")
        })
        .collect();
    let (tm, ts) = mean_std(&tests);
    let (vm, vs) = mean_std(&vals);
    report.push_row(vec![
        v.as_str().into(),
        d.into(),
        runs.len().into(),
        tm.into(),
        ts.into(),
        vm.into(),
        vs.into(),
        mean_std(&first).0.into(),
        mean_std(&last).0.into(),
    ])?;
    report.add_series(format!("test/{}/depth{d}", v.as_str()), tests);
    for r in runs {
        report.add_series(
            format!("energy_normalized/{}/depth{d}/seed{}", v.as_str(), r.seed),
            r.energy.per_layer_normalized.clone(),
        );
    }
    Ok(())
}

fn annotate(
    report: &mut ExperimentReport,
    ds: &Dataset,
    base: &ModelConfig,
    tc: &TrainConfig,
    seeds: &[u64],
) {
    report.note("metric", ds.metric().as_str());
    report.note("hidden_dim", base.hidden_dim);
    report.note("epochs", tc.epochs);
    report.note("lr", tc.lr);
    report.note("dropout", tc.dropout);
    report.note("seeds", format!("{seeds:?}"));
    report.note(
        "self_loops",
        if ds.graph.has_self_loops() {
            "add"
        } else {
            "keep_as_given"
        },
    );
    report.note("desk_hparams", "own");
    report.note("selection", "best validation epoch, later epoch wins ties");
}

/// Mean and standard deviation of the test metric for every
/// `(variant, depth)` pair over `seeds`, plus the per-layer normalized
/// Dirichlet energy of every trained model.
pub fn depth_sweep(
    ds: &Dataset,
    base: &ModelConfig,
    tc: &TrainConfig,
    depths: &[usize],
    variants: &[Variant],
    seeds: &[u64],
) -> Result<ExperimentReport> {
    if depths.is_empty() || variants.is_empty() || seeds.is_empty() {
        return Err(Error::invalid(
            "depth sweep needs at least one depth, variant and seed",
        ));
    }
    let mut report = ExperimentReport::new("depth_sweep", &SWEEP_COLUMNS);
    annotate(&mut report, ds, base, tc, seeds);
    for &variant in variants {
        for &depth in depths {
            let runs = seeds
                .iter()
                .map(|&s| run_variant(ds, base, tc, variant, depth, s))
                .collect::<Result<Vec<_>>>()?;
            summarize(&mut report, &runs)?;
        }
    }
    Ok(report)
}

/// One row per variant at the depth of `base`.
pub fn ablation(
    ds: &Dataset,
    base: &ModelConfig,
    tc: &TrainConfig,
    variants: &[Variant],
    seeds: &[u64],
) -> Result<ExperimentReport> {
    if variants.is_empty() || seeds.is_empty() {
        return Err(Error::invalid(
            "ablation needs at least one variant and seed",
        ));
    }
    let mut report = ExperimentReport::new("ablation", &SWEEP_COLUMNS);
    annotate(&mut report, ds, base, tc, seeds);
    for &variant in variants {
        let runs = seeds
            .iter()
            .map(|&s| run_variant(ds, base, tc, variant, base.depth, s))
            .collect::<Result<Vec<_>>>()?;
        summarize(&mut report, &runs)?;
    }
    Ok(report)
}

/// Mean test metric of a summary row, by variant and depth.
pub fn sweep_mean(report: &ExperimentReport, variant: Variant, depth: usize) -> Option<f64> {
    let (vc, dc, tc) = (
        report.column("variant")?,
        report.column("depth")?,
        report.column("test_mean")?,
    );
    report
        .rows
        .iter()
        .find(|r| r[vc].as_str() == Some(variant.as_str()) && r[dc] == Cell::Int(depth as i64))
        .and_then(|r| r[tc].as_f64())
}
