//! Seeded synthetic graphs with node features and labels.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{build_graph, Edge, SelfLoopPolicy, SparseGraph};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Stochastic block model with Gaussian class-mean features.
#[derive(Clone, Debug, PartialEq)]
pub struct SbmParams {
    pub blocks: usize,
    pub block_size: usize,
    pub p_in: f64,
    pub p_out: f64,
    /// Distance of each class mean from the origin; features get unit noise.
    pub separation: f64,
    /// Multiply each node's class mean by an independent random sign. Class
    /// information then survives only in even functions of the features, so
    /// averaging raw features over neighbors cancels it.
    pub signed_means: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SyntheticKind {
    Complete { n: usize },
    Path { n: usize },
    Cycle { n: usize },
    Sbm(SbmParams),
    ErdosRenyi { n: usize, p: f64 },
}

impl SyntheticKind {
    pub fn describe(&self) -> String {
        match self {
            SyntheticKind::Complete { n } => format!("complete(n={n})"),
            SyntheticKind::Path { n } => format!("path(n={n})"),
            SyntheticKind::Cycle { n } => format!("cycle(n={n})"),
            SyntheticKind::Sbm(p) => format!(
                "sbm(blocks={},block_size={},p_in={},p_out={},separation={},signed_means={})",
                p.blocks, p.block_size, p.p_in, p.p_out, p.separation, p.signed_means
            ),
            SyntheticKind::ErdosRenyi { n, p } => format!("erdos_renyi(n={n},p={p})"),
        }
    }
}

/// Generated graph before any self-loop policy, plus features and labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Synthetic {
    pub num_nodes: usize,
    /// Undirected edges, each listed once with `src < dst`.
    pub edges: Vec<Edge>,
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Synthetic {
    pub fn graph(&self, policy: SelfLoopPolicy) -> Result<SparseGraph> {
        build_graph(&self.edges, self.num_nodes, policy)
    }
}

fn check_prob(p: f64, name: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(Error::invalid(format!("{name}={p} is not a probability")));
    }
    Ok(())
}

/// Generates a graph of the given kind. Features are `feature_dim` columns:
/// class-mean Gaussians for SBM, standard Gaussians otherwise (single class).
pub fn make_synthetic(kind: &SyntheticKind, feature_dim: usize, seed: u64) -> Result<Synthetic> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pair = |i: usize, j: usize| Edge::new(i, j);
    let (n, edges, labels, num_classes) = match kind {
        SyntheticKind::Complete { n } => {
            let edges = (0..*n)
                .flat_map(|i| (i + 1..*n).map(move |j| pair(i, j)))
                .collect();
            (*n, edges, vec![0; *n], 1)
        }
        SyntheticKind::Path { n } => {
            let edges = (1..*n).map(|i| pair(i - 1, i)).collect();
            (*n, edges, vec![0; *n], 1)
        }
        SyntheticKind::Cycle { n } => {
            if *n < 3 {
                return Err(Error::invalid("cycle needs at least 3 nodes"));
            }
            let mut edges: Vec<Edge> = (1..*n).map(|i| pair(i - 1, i)).collect();
            edges.push(pair(0, n - 1));
            (*n, edges, vec![0; *n], 1)
        }
        SyntheticKind::ErdosRenyi { n, p } => {
            check_prob(*p, "p")?;
            let mut edges = Vec::new();
            for i in 0..*n {
                for j in i + 1..*n {
                    if rng.gen::<f64>() < *p {
                        edges.push(pair(i, j));
                    }
                }
            }
            (*n, edges, vec![0; *n], 1)
        }
        SyntheticKind::Sbm(params) => {
            check_prob(params.p_in, "p_in")?;
            check_prob(params.p_out, "p_out")?;
            if params.p_in <= params.p_out {
                return Err(Error::invalid(format!(
                    "sbm needs p_in > p_out (got {} <= {})",
                    params.p_in, params.p_out
                )));
            }
            if params.blocks == 0 || params.block_size == 0 {
                return Err(Error::invalid("sbm needs at least one non-empty block"));
            }
            let n = params.blocks * params.block_size;
            let labels: Vec<usize> = (0..n).map(|i| i / params.block_size).collect();
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    let p = if labels[i] == labels[j] {
                        params.p_in
                    } else {
                        params.p_out
                    };
                    if rng.gen::<f64>() < p {
                        edges.push(pair(i, j));
                    }
                }
            }
            (n, edges, labels, params.blocks)
        }
    };

    let features = match kind {
        SyntheticKind::Sbm(params) => {
            let means = class_means(params.blocks, feature_dim, params.separation, &mut rng);
            let signs: Vec<f64> = (0..n)
                .map(|_| {
                    if params.signed_means && rng.gen::<bool>() {
                        -1.0
                    } else {
                        1.0
                    }
                })
                .collect();
            Tensor::from_fn(n, feature_dim, |i, j| {
                let z: f64 = StandardNormal.sample(&mut rng);
                signs[i] * means.get(labels[i], j) + z
            })
        }
        _ => Tensor::randn(n, feature_dim, 1.0, &mut rng),
    };
    Ok(Synthetic {
        num_nodes: n,
        edges,
        features,
        labels,
        num_classes,
    })
}

/// One-hot directions when there is room, otherwise random unit directions,
/// scaled to `separation`.
fn class_means(classes: usize, dim: usize, separation: f64, rng: &mut ChaCha8Rng) -> Tensor {
    if dim >= classes {
        return Tensor::from_fn(classes, dim, |c, j| if c == j { separation } else { 0.0 });
    }
    let mut means = Tensor::randn(classes, dim, 1.0, rng);
    for c in 0..classes {
        let norm = means
            .row(c)
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
            .max(1e-12);
        for v in means.row_mut(c) {
            *v *= separation / norm;
        }
    }
    means
}

/// Uniformly random simple graph with exactly `m` undirected edges (G(n, m)).
pub fn gnm_edges(n: usize, m: usize, seed: u64) -> Result<Vec<Edge>> {
    let max_edges = n.saturating_mul(n.saturating_sub(1)) / 2;
    if m > max_edges {
        return Err(Error::invalid(format!(
            "{m} edges do not fit in a simple graph on {n} nodes"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(m);
    let mut edges = Vec::with_capacity(m);
    while edges.len() < m {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a == b {
            continue;
        }
        let key = (a.min(b), a.max(b));
        if seen.insert(key) {
            edges.push(Edge::new(key.0, key.1));
        }
    }
    Ok(edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complete_edge_count() {
        let s = make_synthetic(&SyntheticKind::Complete { n: 4 }, 2, 0).unwrap();
        assert_eq!(s.edges.len(), 6);
        assert_eq!(s.features.shape(), (4, 2));
    }

    #[test]
    fn cycle_and_path() {
        let c = make_synthetic(&SyntheticKind::Cycle { n: 5 }, 1, 0).unwrap();
        assert_eq!(c.edges.len(), 5);
        let p = make_synthetic(&SyntheticKind::Path { n: 5 }, 1, 0).unwrap();
        assert_eq!(p.edges.len(), 4);
    }

    #[test]
    fn sbm_without_cross_edges() {
        let params = SbmParams {
            blocks: 3,
            block_size: 40,
            p_in: 0.3,
            p_out: 0.0,
            separation: 2.0,
            signed_means: false,
        };
        let s = make_synthetic(&SyntheticKind::Sbm(params), 4, 9).unwrap();
        assert!(s.edges.iter().all(|e| s.labels[e.src] == s.labels[e.dst]));
        let g = s.graph(SelfLoopPolicy::Add).unwrap();
        assert_eq!(g.components().1, 3);
    }

    #[test]
    fn sbm_is_seeded() {
        let params = SbmParams {
            blocks: 2,
            block_size: 10,
            p_in: 0.5,
            p_out: 0.1,
            separation: 1.0,
            signed_means: false,
        };
        let a = make_synthetic(&SyntheticKind::Sbm(params.clone()), 3, 4).unwrap();
        let b = make_synthetic(&SyntheticKind::Sbm(params), 3, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_probabilities() {
        let bad = SbmParams {
            blocks: 2,
            block_size: 10,
            p_in: 0.1,
            p_out: 0.2,
            separation: 1.0,
            signed_means: false,
        };
        assert!(make_synthetic(&SyntheticKind::Sbm(bad), 2, 0).is_err());
        assert!(make_synthetic(&SyntheticKind::ErdosRenyi { n: 5, p: 1.5 }, 2, 0).is_err());
    }

    #[test]
    fn erdos_renyi_edge_count_matches_expectation() {
        // Monte-Carlo oracle: mean edge count over 100 seeds vs N(N-1)p/2
        let (n, p) = (200usize, 0.1);
        let expected = (n * (n - 1)) as f64 * p / 2.0;
        let mean = (0..100)
            .map(|seed| {
                make_synthetic(&SyntheticKind::ErdosRenyi { n, p }, 1, seed)
                    .unwrap()
                    .edges
                    .len() as f64
            })
            .sum::<f64>()
            / 100.0;
        assert!(
            (mean - expected).abs() / expected < 0.05,
            "mean {mean} vs {expected}"
        );
    }

    #[test]
    fn gnm_exact_count() {
        let e = gnm_edges(100, 300, 3).unwrap();
        assert_eq!(e.len(), 300);
        let g = build_graph(&e, 100, SelfLoopPolicy::KeepAsGiven).unwrap();
        assert_eq!(g.num_undirected_edges(), 300);
        assert!(gnm_edges(3, 4, 0).is_err());
    }
}
