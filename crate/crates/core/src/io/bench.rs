//! Forward-pass cost against graph size.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::report::{Cell, ExperimentReport};
use crate::error::{Error, Result};
use crate::graph::{
    build_graph, gnm_edges, normalize_adjacency, FlopCounter, NormalizedAdjacency, SelfLoopPolicy,
};
use crate::model::{apply_block, init_params, ModelConfig};
use crate::seed::derive_seed;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    /// `(nodes, undirected edges)` per measured graph.
    pub sizes: Vec<(usize, usize)>,
    pub depth: usize,
    pub dim: usize,
    /// Timed repeats per size; the median is reported.
    pub repeats: usize,
    /// Untimed passes per size before timing starts; at least one.
    pub warmup: usize,
    pub seed: u64,
    /// Sizes whose estimated working set exceeds this are skipped.
    pub max_bytes: u64,
}

impl BenchConfig {
    /// `N = 10⁴` with `E` from `10⁵` to `10⁶` in ten steps.
    ///
    /// Timing on shared machines drifts between fast and slow phases lasting
    /// a few passes, so a median over few repeats can land between the two
    /// for some sizes and not others. Many short passes (one block, eight
    /// features) keep each pass inside one phase and the medians consistent;
    /// the whole sweep takes about half a minute.
    pub fn edge_sweep() -> Self {
        Self {
            sizes: (1..=10).map(|k| (10_000, k * 100_000)).collect(),
            depth: 1,
            dim: 8,
            repeats: 201,
            warmup: 1,
            seed: 0,
            max_bytes: 4 << 30,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.depth == 0 || self.dim == 0 {
            return Err(Error::invalid(
                "scale bench needs sizes, depth >= 1 and dim >= 1",
            ));
        }
        if self.warmup == 0 {
            return Err(Error::invalid("scale bench needs at least one warmup pass"));
        }
        if self.repeats < 5 {
            return Err(Error::invalid(format!(
                "scale bench needs at least 5 repeats, got {}",
                self.repeats
            )));
        }
        Ok(())
    }
}

/// `Ã (H W)` with both products counted: `2·nnz·D` message flops and
/// `2·N·D_in·D_out` dense flops.
pub fn gcn_sublayer_counted(
    h: &Tensor,
    adj: &NormalizedAdjacency,
    w: &Tensor,
    counter: &FlopCounter,
) -> Result<Tensor> {
    let hw = h.matmul(w)?;
    counter.add_dense(2 * (h.rows() * h.cols() * w.cols()) as u64);
    adj.spmm_counted(&hw, counter)
}

/// Estimated peak bytes of one forward pass: CSR storage plus the per-block
/// intermediates of the forward pass, with room to spare.
pub fn estimated_bytes(n: usize, nnz: usize, dim: usize, depth: usize) -> u64 {
    let csr = nnz as u64 * 16 + n as u64 * 24;
    let activations = (12 * depth as u64 + 2) * n as u64 * dim as u64 * 8;
    csr + activations
}

fn resident_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmRSS:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

/// Least-squares fit of `y` on the columns of `x` plus an intercept.
/// Returns the coefficients (intercept last) and `R²`.
pub fn linear_fit(x: &[Vec<f64>], y: &[f64]) -> Result<(Vec<f64>, f64)> {
    let k = y.len();
    let p = x.first().map_or(0, Vec::len) + 1;
    if k < p {
        return Err(Error::invalid(format!(
            "{k} points cannot fit {p} coefficients"
        )));
    }
    let a = DMatrix::from_fn(k, p, |i, j| if j + 1 == p { 1.0 } else { x[i][j] });
    let b = DVector::from_column_slice(y);
    let coef = a
        .clone()
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::invalid(format!("least squares failed: {e}")))?;
    let pred = &a * &coef;
    let mean = y.iter().sum::<f64>() / k as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = y
        .iter()
        .zip(pred.iter())
        .map(|(v, p)| (v - p).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    Ok((coef.iter().copied().collect(), r2))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// For every size: counted GCN-sublayer flops over the whole stack and the
/// median wall time of a full evaluation-mode forward pass through `depth`
/// freshly initialized blocks. The report notes hold a least-squares fit
/// `time = a·E + b·N + c` over the measured sizes; when every size has the
/// same `N`, the `N` term is collinear with the intercept and is dropped.
pub fn scale_bench(cfg: &BenchConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut report = ExperimentReport::new(
        "scale_bench",
        &[
            "n",
            "e",
            "nnz",
            "depth",
            "dim",
            "message_flops",
            "dense_flops",
            "gcn_flops",
            "analytic_gcn_flops",
            "median_ms",
            "rss_delta_kb",
            "status",
        ],
    );
    let model = ModelConfig::new(cfg.dim, cfg.dim, cfg.dim, cfg.depth);
    let params = init_params(&model, cfg.seed)?;
    let blank = || Cell::Text(String::new());

    // Build every graph first so that timing is not interleaved with large
    // allocations and frees from graph generation.
    struct Case {
        n: usize,
        e: usize,
        adj: NormalizedAdjacency,
        x: Tensor,
        counter: FlopCounter,
        analytic: u64,
        rss: Cell,
        times: Vec<f64>,
    }
    let mut cases: Vec<Option<Case>> = Vec::with_capacity(cfg.sizes.len());
    for (idx, &(n, e)) in cfg.sizes.iter().enumerate() {
        let est = estimated_bytes(n, 2 * e + n, cfg.dim, cfg.depth);
        if est > cfg.max_bytes {
            cases.push(None);
            continue;
        }
        let s = derive_seed(cfg.seed, &[idx as u64]);
        let adj = normalize_adjacency(&build_graph(&gnm_edges(n, e, s)?, n, SelfLoopPolicy::Add)?)?;
        let x = Tensor::randn(
            n,
            cfg.dim,
            1.0,
            &mut ChaCha8Rng::seed_from_u64(derive_seed(s, &[1])),
        );
        let counter = FlopCounter::new();
        for layer in &params.layers {
            gcn_sublayer_counted(&x, &adj, &layer.w1, &counter)?;
        }
        let d = cfg.dim as u64;
        let analytic = cfg.depth as u64 * (2 * adj.nnz() as u64 * d + 2 * n as u64 * d * d);
        cases.push(Some(Case {
            n,
            e,
            adj,
            x,
            counter,
            analytic,
            rss: blank(),
            times: Vec::with_capacity(cfg.repeats),
        }));
    }

    let forward = |c: &Case| -> Result<Tensor> {
        let mut h = c.x.clone();
        for layer in &params.layers {
            h = apply_block(&h, &c.adj, layer, &model)?;
        }
        Ok(h)
    };
    for c in cases.iter_mut().flatten() {
        let before = resident_kb();
        std::hint::black_box(forward(c)?);
        if let (Some(a), Some(b)) = (before, resident_kb()) {
            c.rss = Cell::Int(b as i64 - a as i64);
        }
    }
    for _ in 1..cfg.warmup {
        for c in cases.iter().flatten() {
            std::hint::black_box(forward(c)?);
        }
    }
    // Every repeat visits all sizes in a fresh random order, so slow drifts
    // of the machine spread evenly over sizes instead of favoring some.
    let mut order: Vec<usize> = (0..cases.len()).filter(|&i| cases[i].is_some()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[u64::MAX]));
    for _ in 0..cfg.repeats {
        order.shuffle(&mut rng);
        for &i in &order {
            let c = cases[i].as_mut().expect("only measured sizes are ordered");
            let t = Instant::now();
            std::hint::black_box(forward(c)?);
            c.times.push(t.elapsed().as_secs_f64() * 1e3);
        }
    }

    let mut points = Vec::new();
    for (case, &(n, e)) in cases.into_iter().zip(&cfg.sizes) {
        let Some(c) = case else {
            let nnz_est = 2 * e + n;
            let est = estimated_bytes(n, nnz_est, cfg.dim, cfg.depth);
            report.push_row(vec![
                n.into(),
                e.into(),
                nnz_est.into(),
                cfg.depth.into(),
                cfg.dim.into(),
                blank(),
                blank(),
                blank(),
                blank(),
                blank(),
                blank(),
                format!("skipped: estimated {est} bytes > {}", cfg.max_bytes).into(),
            ])?;
            continue;
        };
        report.add_series(format!("times_ms/n{}/e{}", c.n, c.e), c.times.clone());
        let ms = median(c.times);
        report.push_row(vec![
            c.n.into(),
            c.e.into(),
            c.adj.nnz().into(),
            cfg.depth.into(),
            cfg.dim.into(),
            c.counter.message().into(),
            c.counter.dense().into(),
            c.counter.total().into(),
            c.analytic.into(),
            ms.into(),
            c.rss,
            "ok".into(),
        ])?;
        points.push((c.n as f64, c.e as f64, ms));
    }
    report.note("depth", cfg.depth);
    report.note("dim", cfg.dim);
    report.note("repeats", cfg.repeats);
    report.note("warmup", cfg.warmup);
    report.note("order", "each repeat visits all sizes in a shuffled order");
    report.note("seed", cfg.seed);
    report.note("graph", "G(n, m) with self-loops added");
    report.note("timed", "evaluation forward pass through all blocks");
    report.note(
        "memory",
        "resident-set delta of the warmup pass where /proc is available",
    );
    let same_n = points.windows(2).all(|w| w[0].0 == w[1].0);
    let (xs, terms): (Vec<Vec<f64>>, &str) = if same_n {
        (points.iter().map(|p| vec![p.1]).collect(), "time = a*E + c")
    } else {
        (
            points.iter().map(|p| vec![p.1, p.0]).collect(),
            "time = a*E + b*N + c",
        )
    };
    let ys: Vec<f64> = points.iter().map(|p| p.2).collect();
    report.note("fit", terms);
    match linear_fit(&xs, &ys) {
        Ok((coef, r2)) => {
            report.note("fit_a_ms_per_edge", coef[0]);
            if !same_n {
                report.note("fit_b_ms_per_node", coef[1]);
            }
            report.note("fit_c_ms", *coef.last().expect("intercept"));
            report.note("fit_r2", r2);
        }
        Err(e) => report.note("fit_error", e),
    }
    Ok(report)
}
