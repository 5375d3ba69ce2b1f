use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SparseGraph;
use crate::error::{Error, Result};

/// Subgraph over the listed nodes, relabeled `0..k` in list order.
///
/// Keeps exactly the stored entries whose endpoints are both selected,
/// self-loops included. Returns the graph and the original id of every new
/// node.
pub fn induced_subgraph(g: &SparseGraph, nodes: &[usize]) -> Result<(SparseGraph, Vec<usize>)> {
    let n = g.num_nodes();
    let mut new_id = vec![usize::MAX; n];
    for (k, &v) in nodes.iter().enumerate() {
        if v >= n {
            return Err(Error::NodeOutOfRange {
                index: v,
                num_nodes: n,
            });
        }
        if new_id[v] != usize::MAX {
            return Err(Error::DuplicateNode(v));
        }
        new_id[v] = k;
    }
    let mut triplets = Vec::new();
    for (k, &v) in nodes.iter().enumerate() {
        for (u, w) in g.row(v) {
            let mapped = new_id[u];
            if mapped != usize::MAX {
                triplets.push((k, mapped, w));
            }
        }
    }
    let sub = SparseGraph::from_triplets(nodes.len(), triplets)?;
    Ok((sub, nodes.to_vec()))
}

/// Multi-hop uniform neighbor sampling followed by subgraph induction.
///
/// At hop `h` every frontier node draws `min(fanouts[h], deg)` distinct
/// neighbors uniformly without replacement; newly reached nodes form the next
/// frontier. The result is the subgraph induced on seeds plus every reached
/// node, with seeds first. Deterministic for a given `rng_seed`.
pub fn neighbor_sample(
    g: &SparseGraph,
    seeds: &[usize],
    fanouts: &[usize],
    rng_seed: u64,
) -> Result<(SparseGraph, Vec<usize>)> {
    if seeds.is_empty() {
        return Err(Error::invalid("neighbor_sample needs at least one seed"));
    }
    if fanouts.is_empty() {
        return Err(Error::invalid("neighbor_sample needs at least one fanout"));
    }
    let n = g.num_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut visited = vec![false; n];
    let mut order = Vec::new();
    for &s in seeds {
        if s >= n {
            return Err(Error::NodeOutOfRange {
                index: s,
                num_nodes: n,
            });
        }
        if !visited[s] {
            visited[s] = true;
            order.push(s);
        }
    }
    let mut frontier = order.clone();
    let mut neigh = Vec::new();
    for &fanout in fanouts {
        let mut next = Vec::new();
        for &u in &frontier {
            neigh.clear();
            neigh.extend(g.neighbors(u));
            let take = fanout.min(neigh.len());
            for k in index::sample(&mut rng, neigh.len(), take).into_iter() {
                let v = neigh[k];
                if !visited[v] {
                    visited[v] = true;
                    order.push(v);
                    next.push(v);
                }
            }
        }
        frontier = next;
    }
    induced_subgraph(g, &order)
}
