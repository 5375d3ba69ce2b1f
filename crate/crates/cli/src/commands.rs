//! The subcommands: their configuration keys and what they run.
//!
//! Every key doubles as a `--key` flag and as a `key = value` line of a
//! configuration file. Every command writes its CSV outputs together with
//! one `<name>.manifest.json` into the output directory and prints a short
//! `key=value` summary to stdout.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use smpnn::autodiff::{GradCheckOptions, Stencil};
use smpnn::graph::{build_graph, gnm_edges, normalize_adjacency, Edge, SbmParams, SelfLoopPolicy};
use smpnn::io::{
    fingerprint_files, fingerprint_text, load_dataset, save_dataset, scale_bench,
    write_report_with_manifest, BenchConfig, Cell, DatasetPaths, ExperimentReport, ResolvedConfig,
    RunManifest,
};
use smpnn::model::{
    check_model_gradients, infer, load_checkpoint, save_checkpoint, ModelCheck, ModelConfig,
    Variant,
};
use smpnn::theory::{
    classify_frequency, gordon_bound_trial, kernel_sweep, oversmoothing_trace,
    residual_injectivity_trial, InjectivityTrialConfig, OversmoothingMode,
};
use smpnn::train::{
    ablation, depth_sweep, desk_dataset, desk_synthetic, evaluate, loss_of_logits, metrics_csv,
    train, Dataset, DeskTask, Labels, TrainConfig,
};
use smpnn::{Error, Tensor};

use crate::error::{CliError, CliResult};

/// A subcommand and its keys as `(key, default, help)`; an empty default
/// means "unset".
pub struct CommandSpec {
    pub name: &'static str,
    pub about: &'static str,
    pub keys: &'static [(&'static str, &'static str, &'static str)],
    pub run: fn(&Context) -> CliResult<()>,
}

/// What a command runs with.
pub struct Context {
    pub command: &'static str,
    pub out_dir: PathBuf,
    pub config: ResolvedConfig,
}

const DATA_KEYS: [(&str, &str, &str); 2] = [
    ("data", "", "dataset directory (edges.txt, features.txt, labels.txt, train/val/test.txt); default: the built-in SBM task"),
    ("self_loops", "add", "self-loop policy when building the graph: add or keep_as_given"),
];

macro_rules! keys {
    ($($k:expr),* $(,)?) => { &[$($k),*] };
}

pub const COMMANDS: &[CommandSpec] = &[
    CommandSpec {
        name: "gen-data",
        about: "Generate a stochastic-block-model dataset and write it as text files",
        keys: keys![
            ("blocks", "4", "number of blocks (classes)"),
            ("block_size", "250", "nodes per block"),
            ("p_in", "0.04", "edge probability inside a block"),
            ("p_out", "0.005", "edge probability across blocks"),
            (
                "separation",
                "1.5",
                "distance of each class mean from the origin"
            ),
            (
                "signed_means",
                "true",
                "flip each node's class mean by a random sign"
            ),
            ("feature_dim", "8", "feature columns"),
            (
                "train_frac",
                "0.3",
                "fraction of nodes in the training split"
            ),
            (
                "val_frac",
                "0.2",
                "fraction of nodes in the validation split"
            ),
            ("seed", "0", "generator seed"),
        ],
        run: gen_data,
    },
    CommandSpec {
        name: "train",
        about: "Train a model; writes metrics.csv and a checkpoint of the best validation epoch",
        keys: keys![
            DATA_KEYS[0],
            DATA_KEYS[1],
            (
                "variant",
                "standard",
                "standard, no_residual, fixed_alpha, no_feedforward, no_gcn_layernorm or attention"
            ),
            ("depth", "4", "number of blocks"),
            ("hidden", "16", "hidden width"),
            ("epochs", "200", "training epochs"),
            ("lr", "0.01", "Adam learning rate"),
            ("weight_decay", "0", "L2 penalty added to the gradient"),
            ("dropout", "0", "dropout rate inside the blocks"),
            ("eval_every", "5", "evaluate every this many epochs"),
            (
                "batch_nodes",
                "",
                "mini-batch size in nodes; unset trains on the full graph"
            ),
            ("seed", "0", "initialization, dropout and batching seed"),
            (
                "checkpoint",
                "model.ckpt",
                "checkpoint path, relative to the output directory"
            ),
        ],
        run: train_cmd,
    },
    CommandSpec {
        name: "eval",
        about: "Evaluate a checkpoint on every split of a dataset",
        keys: keys![
            DATA_KEYS[0],
            DATA_KEYS[1],
            ("checkpoint", "", "checkpoint file to evaluate (required)"),
        ],
        run: eval_cmd,
    },
    CommandSpec {
        name: "grad-check",
        about: "Compare reverse-mode and finite-difference gradients of a random model",
        keys: keys![
            ("variant", "standard", "model variant"),
            ("depth", "3", "number of blocks"),
            ("nodes", "12", "nodes of the random graph"),
            ("dim", "4", "input and hidden width"),
            ("classes", "3", "output classes"),
            (
                "alpha",
                "0.5",
                "value of every residual scale during the check"
            ),
            ("seed", "0", "problem seed"),
            (
                "h",
                "1e-3",
                "finite-difference step (largest step for ridders)"
            ),
            ("stencil", "ridders", "ridders or three_point"),
            ("tolerance", "1e-5", "maximum accepted relative error"),
            (
                "max_coords",
                "1000",
                "coordinates beyond this count are subsampled"
            ),
        ],
        run: grad_check_cmd,
    },
    CommandSpec {
        name: "theory-injectivity",
        about: "Random trials of the invertibility of the residual convolution operator",
        keys: keys![
            ("nodes", "8", "nodes of the complete graph"),
            ("dim", "4", "feature width D"),
            ("trials", "2000", "number of random weight matrices"),
            ("seed", "0", "trial seed"),
            ("varsigma", "", "weight scale; default 0.9 / (9 D^1.5)"),
            (
                "singular_threshold",
                "1e-9",
                "invertible means s_min > threshold * s_max"
            ),
        ],
        run: injectivity_cmd,
    },
    CommandSpec {
        name: "theory-kernel",
        about: "Kernel witnesses of the residual-free convolution on complete graphs",
        keys: keys![
            ("nodes", "2,4,8,16,64", "comma-separated graph sizes"),
            ("dim", "4", "feature width D"),
            ("seeds", "100", "random weight matrices per size"),
            ("seed", "0", "base seed"),
        ],
        run: kernel_cmd,
    },
    CommandSpec {
        name: "theory-gordon",
        about: "Singular values of Gaussian matrices against the interval [-t, 2 sqrt(D) + t]",
        keys: keys![
            ("dim", "64", "matrix size D"),
            ("t", "8", "interval margin"),
            ("trials", "1000", "number of samples"),
            ("seed", "0", "sampling seed"),
        ],
        run: gordon_cmd,
    },
    CommandSpec {
        name: "energy-trace",
        about: "Per-layer Dirichlet energy of deep stacks on a random connected graph",
        keys: keys![
            (
                "mode",
                "all",
                "linear_no_residual, smpnn_default, smpnn_no_residual or all"
            ),
            ("layers", "500", "number of layers"),
            (
                "nodes",
                "40",
                "nodes of the ring that keeps the graph connected"
            ),
            ("edges", "60", "random extra edges"),
            ("dim", "4", "feature width"),
            ("seed", "0", "graph, feature and weight seed"),
            (
                "tolerance",
                "1e-8",
                "tolerance of the low/high-frequency classification"
            ),
        ],
        run: energy_cmd,
    },
    CommandSpec {
        name: "depth-sweep",
        about: "Test metric of several variants across depths and seeds",
        keys: keys![
            DATA_KEYS[0],
            DATA_KEYS[1],
            ("depths", "2,12", "comma-separated depths"),
            (
                "variants",
                "standard,no_residual",
                "comma-separated variants"
            ),
            ("seeds", "0,1,2,3,4", "comma-separated seeds"),
            ("hidden", "16", "hidden width"),
            ("epochs", "200", "training epochs"),
            ("lr", "0.01", "Adam learning rate"),
            ("weight_decay", "0", "L2 penalty added to the gradient"),
            ("dropout", "0", "dropout rate inside the blocks"),
            ("eval_every", "5", "evaluate every this many epochs"),
            (
                "batch_nodes",
                "",
                "mini-batch size in nodes; unset trains on the full graph"
            ),
        ],
        run: depth_sweep_cmd,
    },
    CommandSpec {
        name: "ablate",
        about: "Test metric of every variant at one depth",
        keys: keys![
            DATA_KEYS[0],
            DATA_KEYS[1],
            ("depth", "8", "number of blocks"),
            (
                "variants",
                "standard,no_residual,fixed_alpha,no_feedforward,no_gcn_layernorm,attention",
                "comma-separated variants"
            ),
            ("seeds", "0,1,2,3,4", "comma-separated seeds"),
            ("hidden", "16", "hidden width"),
            ("epochs", "200", "training epochs"),
            ("lr", "0.01", "Adam learning rate"),
            ("weight_decay", "0", "L2 penalty added to the gradient"),
            ("dropout", "0", "dropout rate inside the blocks"),
            ("eval_every", "5", "evaluate every this many epochs"),
            (
                "batch_nodes",
                "",
                "mini-batch size in nodes; unset trains on the full graph"
            ),
        ],
        run: ablate_cmd,
    },
    CommandSpec {
        name: "scale-bench",
        about: "Counted flops and median forward time against the number of edges",
        keys: keys![
            ("nodes", "10000", "nodes of every graph"),
            (
                "edges",
                "100000,200000,300000,400000,500000,600000,700000,800000,900000,1000000",
                "comma-separated undirected edge counts"
            ),
            ("depth", "1", "number of blocks"),
            ("dim", "8", "hidden width"),
            ("repeats", "201", "timed passes per size (median reported)"),
            ("warmup", "1", "untimed passes per size"),
            ("seed", "0", "graph and weight seed"),
            (
                "max_bytes",
                "4294967296",
                "skip sizes whose estimated working set exceeds this"
            ),
        ],
        run: scale_bench_cmd,
    },
];

impl Context {
    fn get<T: std::str::FromStr>(&self, key: &str) -> CliResult<T> {
        Ok(self.config.get(key)?)
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> CliResult<Vec<T>> {
        let v = self.config.get_list(key)?;
        if v.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "config key `{key}` needs at least one value"
            ))
            .into());
        }
        Ok(v)
    }

    fn seed(&self) -> CliResult<u64> {
        match self.config.get_opt("seed")? {
            Some(s) => Ok(s),
            None => Ok(0),
        }
    }

    fn manifest(&self, seed: u64, fingerprint: String) -> RunManifest {
        RunManifest::new(self.command, self.config.snapshot(), seed, fingerprint)
    }

    /// Writes a report with its manifest and prints the paths and notes.
    fn emit(&self, report: &ExperimentReport, seed: u64, fingerprint: String) -> CliResult<()> {
        let paths =
            write_report_with_manifest(report, &self.out_dir, &self.manifest(seed, fingerprint))?;
        for p in paths {
            println!("wrote={}", p.display());
        }
        for (k, v) in &report.notes {
            println!("{k}={v}");
        }
        Ok(())
    }

    fn out_path(&self, name: &str) -> CliResult<PathBuf> {
        fs::create_dir_all(&self.out_dir).map_err(|e| Error::Io {
            path: self.out_dir.clone(),
            source: e,
        })?;
        Ok(self.out_dir.join(name))
    }

    /// The dataset named by `data`, or the built-in task, with its
    /// fingerprint.
    fn dataset(&self) -> CliResult<(Dataset, String)> {
        let policy: SelfLoopPolicy = self.get("self_loops")?;
        match self.config.raw("data") {
            Some(dir) => {
                let paths = DatasetPaths::in_dir(dir);
                let ds = load_dataset(&paths, policy)?;
                Ok((ds, fingerprint_files(&paths.all())?))
            }
            None => {
                let task = DeskTask {
                    policy,
                    ..DeskTask::default()
                };
                Ok((desk_dataset(&task)?, fingerprint_text(&task.describe())))
            }
        }
    }

    fn train_config(&self, seed: u64) -> CliResult<TrainConfig> {
        let tc = TrainConfig {
            lr: self.get("lr")?,
            weight_decay: self.get("weight_decay")?,
            epochs: self.get("epochs")?,
            dropout: self.get("dropout")?,
            eval_every: self.get("eval_every")?,
            batch_nodes: self.config.get_opt("batch_nodes")?,
            seed,
            ..TrainConfig::default()
        };
        tc.validate()?;
        Ok(tc)
    }
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| {
        Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

fn gen_data(ctx: &Context) -> CliResult<()> {
    let task = DeskTask {
        sbm: SbmParams {
            blocks: ctx.get("blocks")?,
            block_size: ctx.get("block_size")?,
            p_in: ctx.get("p_in")?,
            p_out: ctx.get("p_out")?,
            separation: ctx.get("separation")?,
            signed_means: ctx.get("signed_means")?,
        },
        feature_dim: ctx.get("feature_dim")?,
        train_frac: ctx.get("train_frac")?,
        val_frac: ctx.get("val_frac")?,
        seed: ctx.seed()?,
        ..DeskTask::default()
    };
    let (s, split) = desk_synthetic(&task)?;
    let labels = Labels::classes(s.labels, s.num_classes)?;
    ctx.out_path("")?;
    let paths = DatasetPaths::in_dir(&ctx.out_dir);
    save_dataset(&paths, &s.edges, &s.features, &labels, &split)?;
    let mut manifest = ctx.manifest(task.seed, fingerprint_text(&task.describe()));
    manifest.outputs = paths
        .all()
        .iter()
        .map(|p| {
            p.file_name()
                .expect("dataset files have names")
                .to_string_lossy()
                .into_owned()
        })
        .collect();
    let mpath = ctx.out_dir.join("gen_data.manifest.json");
    manifest.write(&mpath)?;
    println!("wrote={}", mpath.display());
    println!("nodes={}", s.num_nodes);
    println!("edges={}", s.edges.len());
    println!("classes={}", s.num_classes);
    println!(
        "split={}/{}/{}",
        split.train.len(),
        split.val.len(),
        split.test.len()
    );
    Ok(())
}

fn train_cmd(ctx: &Context) -> CliResult<()> {
    let seed = ctx.seed()?;
    let (ds, fingerprint) = ctx.dataset()?;
    let variant: Variant = ctx.get("variant")?;
    let cfg = ds
        .model_config(ctx.get("hidden")?, ctx.get("depth")?)
        .with_block(variant.block_config());
    let tc = ctx.train_config(seed)?;
    let out = train(&ds, &cfg, &tc)?;

    let metrics = ctx.out_path("metrics.csv")?;
    write_file(&metrics, &metrics_csv(&out.metrics))?;
    let ckpt_name: String = ctx.get("checkpoint")?;
    let ckpt = ctx.out_path(&ckpt_name)?;
    save_checkpoint(&ckpt, &cfg, &out.best_params)?;
    let mut manifest = ctx.manifest(seed, fingerprint);
    manifest.outputs = vec!["metrics.csv".into(), ckpt_name];
    let mpath = ctx.out_path("train.manifest.json")?;
    manifest.write(&mpath)?;

    let best = out.best_row();
    for p in [&metrics, &ckpt, &mpath] {
        println!("wrote={}", p.display());
    }
    println!("metric={}", out.metric.as_str());
    println!("best_epoch={}", out.best_epoch);
    println!("val_metric={}", best.val_metric);
    println!("test_metric={}", best.test_metric);
    Ok(())
}

fn eval_cmd(ctx: &Context) -> CliResult<()> {
    let ckpt: String = ctx.get("checkpoint")?;
    let (cfg, params) = load_checkpoint(&ckpt)?;
    let (ds, fingerprint) = ctx.dataset()?;
    if cfg.input_dim != ds.features.cols() || cfg.num_classes != ds.labels.num_outputs() {
        return Err(Error::Inconsistent(format!(
            "checkpoint expects {} features and {} outputs, dataset has {} and {}",
            cfg.input_dim,
            cfg.num_classes,
            ds.features.cols(),
            ds.labels.num_outputs()
        ))
        .into());
    }
    let adj = normalize_adjacency(&ds.graph)?;
    let logits = infer(&ds.features, &adj, &params, &cfg)?.logits;
    let metric = ds.metric();
    let mut report = ExperimentReport::new("eval", &["split", "nodes", "loss", "metric", "value"]);
    for (name, rows) in [
        ("train", &ds.split.train),
        ("val", &ds.split.val),
        ("test", &ds.split.test),
    ] {
        let (loss, value) = if rows.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            (
                loss_of_logits(&logits, &ds.labels, rows)?,
                evaluate(&logits, &ds.labels, rows, metric)?,
            )
        };
        report.push_row(vec![
            name.into(),
            rows.len().into(),
            loss.into(),
            metric.as_str().into(),
            value.into(),
        ])?;
        report.note(format!("{name}_{}", metric.as_str()), value);
    }
    report.note("checkpoint", &ckpt);
    ctx.emit(&report, 0, fingerprint)
}

fn grad_check_cmd(ctx: &Context) -> CliResult<()> {
    let seed = ctx.seed()?;
    let check = ModelCheck {
        variant: ctx.get("variant")?,
        depth: ctx.get("depth")?,
        nodes: ctx.get("nodes")?,
        dim: ctx.get("dim")?,
        classes: ctx.get("classes")?,
        alpha: ctx.get("alpha")?,
        seed,
    };
    let stencil = match ctx.get::<String>("stencil")?.as_str() {
        "ridders" => Stencil::Ridders,
        "three_point" => Stencil::ThreePoint,
        other => return Err(Error::InvalidArgument(format!("unknown stencil `{other}`")).into()),
    };
    let opts = GradCheckOptions {
        h: ctx.get("h")?,
        stencil,
        tolerance: ctx.get("tolerance")?,
        max_coords: ctx.get("max_coords")?,
        seed,
    };
    if !(opts.h > 0.0 && opts.tolerance > 0.0) {
        return Err(Error::InvalidArgument("h and tolerance must be positive".into()).into());
    }
    let r = check_model_gradients(&check, &opts)?;
    let mut report = ExperimentReport::new(
        "grad_check",
        &["coordinate", "analytic", "numeric", "rel_err"],
    );
    for e in &r.entries {
        report.push_row(vec![
            format!("{}:{}", e.param, e.index).into(),
            e.analytic.into(),
            e.numeric.into(),
            e.rel_err.into(),
        ])?;
    }
    report.note("coordinates", r.entries.len());
    report.note("max_rel_err", r.max_rel_err);
    report.note("tolerance", r.tolerance);
    report.note("passed", r.passed());
    ctx.emit(&report, seed, fingerprint_text(&format!("{check:?}")))?;
    if !r.passed() {
        return Err(CliError::CheckFailed(format!(
            "max relative error {:e} is not below {:e}",
            r.max_rel_err, r.tolerance
        )));
    }
    Ok(())
}

fn injectivity_cmd(ctx: &Context) -> CliResult<()> {
    let seed = ctx.seed()?;
    let mut cfg =
        InjectivityTrialConfig::new(ctx.get("nodes")?, ctx.get("dim")?, ctx.get("trials")?, seed);
    if let Some(v) = ctx.config.get_opt("varsigma")? {
        cfg.varsigma = v;
    }
    cfg.singular_threshold = ctx.get("singular_threshold")?;
    cfg.validate()?;
    let report = residual_injectivity_trial(&cfg)?;
    ctx.emit(
        &report,
        seed,
        fingerprint_text(&format!("complete(n={})", cfg.n)),
    )
}

fn kernel_cmd(ctx: &Context) -> CliResult<()> {
    let seed = ctx.seed()?;
    let sizes: Vec<usize> = ctx.list("nodes")?;
    let mut report = kernel_sweep(&sizes, ctx.get("dim")?, ctx.get("seeds")?, seed)?;
    let col = report
        .column("max_residual")
        .expect("kernel sweep reports residuals");
    let worst = report
        .rows
        .iter()
        .filter_map(|r| r[col].as_f64())
        .fold(0.0, f64::max);
    report.note("max_residual", worst);
    ctx.emit(
        &report,
        seed,
        fingerprint_text(&format!("complete(n in {sizes:?})")),
    )
}

fn gordon_cmd(ctx: &Context) -> CliResult<()> {
    let seed = ctx.seed()?;
    let report = gordon_bound_trial(ctx.get("dim")?, ctx.get("trials")?, ctx.get("t")?, seed)?;
    ctx.emit(&report, seed, fingerprint_text("gaussian matrices"))
}

fn energy_cmd(ctx: &Context) -> CliResult<()> {
    let seed = ctx.seed()?;
    let (n, extra, dim, layers): (usize, usize, usize, usize) = (
        ctx.get("nodes")?,
        ctx.get("edges")?,
        ctx.get("dim")?,
        ctx.get("layers")?,
    );
    let tol: f64 = ctx.get("tolerance")?;
    let modes = match ctx.get::<String>("mode")?.as_str() {
        "all" => OversmoothingMode::ALL.to_vec(),
        one => vec![one.parse::<OversmoothingMode>()?],
    };
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "energy trace needs at least 3 nodes, got {n}"
        ))
        .into());
    }
    let mut edges: Vec<Edge> = (0..n).map(|i| Edge::new(i, (i + 1) % n)).collect();
    edges.extend(gnm_edges(n, extra, seed)?);
    let g = build_graph(&edges, n, SelfLoopPolicy::Add)?;
    let x0 = Tensor::randn(n, dim, 1.0, &mut ChaCha8Rng::seed_from_u64(seed));

    let mut report = ExperimentReport::new(
        "energy_trace",
        &["mode", "layer", "energy", "normalized_energy"],
    );
    for mode in modes {
        let t = oversmoothing_trace(&g, &x0, layers, mode, seed)?;
        for (l, (e, ne)) in t
            .per_layer_energy
            .iter()
            .zip(&t.per_layer_normalized)
            .enumerate()
        {
            report.push_row(vec![
                mode.as_str().into(),
                l.into(),
                (*e).into(),
                (*ne).into(),
            ])?;
        }
        report.note(
            format!("{}_final_normalized", mode.as_str()),
            t.per_layer_normalized[layers],
        );
        report.note(
            format!("{}_class", mode.as_str()),
            classify_frequency(&t, tol).as_str(),
        );
        report.note("lambda_max", t.lambda_max);
    }
    report.note(
        "classification",
        "heuristic: last normalized energy within tolerance of 0 or lambda_max",
    );
    let describe = format!("ring({n})+gnm({n},{extra},seed={seed})");
    ctx.emit(&report, seed, fingerprint_text(&describe))
}

fn sweep_inputs(
    ctx: &Context,
) -> CliResult<(Dataset, String, TrainConfig, Vec<Variant>, Vec<u64>)> {
    let (ds, fingerprint) = ctx.dataset()?;
    let seeds: Vec<u64> = ctx.list("seeds")?;
    let tc = ctx.train_config(seeds[0])?;
    Ok((ds, fingerprint, tc, ctx.list("variants")?, seeds))
}

fn depth_sweep_cmd(ctx: &Context) -> CliResult<()> {
    let (ds, fingerprint, tc, variants, seeds) = sweep_inputs(ctx)?;
    let depths: Vec<usize> = ctx.list("depths")?;
    let base = ds.model_config(ctx.get("hidden")?, depths[0]);
    let report = depth_sweep(&ds, &base, &tc, &depths, &variants, &seeds)?;
    print_means(&report);
    ctx.emit(&report, seeds[0], fingerprint)
}

fn ablate_cmd(ctx: &Context) -> CliResult<()> {
    let (ds, fingerprint, tc, variants, seeds) = sweep_inputs(ctx)?;
    let base: ModelConfig = ds.model_config(ctx.get("hidden")?, ctx.get("depth")?);
    let report = ablation(&ds, &base, &tc, &variants, &seeds)?;
    print_means(&report);
    ctx.emit(&report, seeds[0], fingerprint)
}

/// `mean.<variant>.<depth>=<test mean>` for every summary row.
fn print_means(report: &ExperimentReport) {
    let cols = ["variant", "depth", "test_mean"].map(|c| report.column(c).expect("sweep column"));
    for row in &report.rows {
        if let [Cell::Text(v), d, m] = cols.map(|c| &row[c]) {
            println!("mean.{v}.{d}={m}");
        }
    }
}

fn scale_bench_cmd(ctx: &Context) -> CliResult<()> {
    let seed = ctx.seed()?;
    let n: usize = ctx.get("nodes")?;
    let cfg = BenchConfig {
        sizes: ctx
            .list::<usize>("edges")?
            .into_iter()
            .map(|e| (n, e))
            .collect(),
        depth: ctx.get("depth")?,
        dim: ctx.get("dim")?,
        repeats: ctx.get("repeats")?,
        warmup: ctx.get("warmup")?,
        seed,
        max_bytes: ctx.get("max_bytes")?,
    };
    cfg.validate()?;
    let report = scale_bench(&cfg)?;
    ctx.emit(
        &report,
        seed,
        fingerprint_text(&format!("gnm sizes {:?} seed {seed}", cfg.sizes)),
    )
}
