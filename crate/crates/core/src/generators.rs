//! Growth-model network generators.
//!
//! Both models are driven by a [`SimRng`](crate::SimRng) seeded from a
//! 64-bit seed, so a given `(parameters, seed)` always yields the same graph.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::seeded_rng;

/// Attempts per preferential-attachment edge before the edge is dropped.
pub const MAX_ATTACH_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HkParams {
    pub n: usize,
    /// Edges added by each arriving node.
    pub m: usize,
    /// Probability that a follow-up edge closes a triangle.
    pub triad_prob: f64,
}

impl Default for HkParams {
    fn default() -> Self {
        HkParams {
            n: 10_000,
            m: 4,
            triad_prob: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CnnParams {
    pub n: usize,
    /// Probability that a step converts a potential link instead of adding a node.
    pub conversion_prob: f64,
}

impl Default for CnnParams {
    fn default() -> Self {
        CnnParams {
            n: 10_000,
            conversion_prob: 0.75,
        }
    }
}

/// Holme–Kim growth: preferential attachment with triad formation.
///
/// Starts from a clique on `m + 1` nodes. Every arriving node makes its first
/// link by degree-preferential attachment. Each further link, with
/// probability `triad_prob`, goes to a random neighbor of the most recent
/// preferential target that is not yet linked to the newcomer; otherwise (or
/// when no such neighbor exists) it is another preferential attachment.
pub fn generate_hk(params: &HkParams, seed: u64) -> Result<Graph> {
    let HkParams { n, m, triad_prob } = *params;
    if m < 1 || n <= m {
        return Err(Error::InvalidParameter(format!(
            "HK model needs n > m >= 1 (got n={n}, m={m})"
        )));
    }
    if !(0.0..=1.0).contains(&triad_prob) {
        return Err(Error::InvalidParameter(format!(
            "triad probability {triad_prob} outside [0, 1]"
        )));
    }

    let mut rng = seeded_rng(seed);
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    // Each edge contributes both endpoints, so a uniform draw is degree-proportional.
    let mut endpoints: Vec<usize> = Vec::with_capacity(2 * m * n);

    for u in 0..=m {
        for v in (u + 1)..=m {
            adjacency[u].push(v);
            adjacency[v].push(u);
            endpoints.push(u);
            endpoints.push(v);
        }
    }

    let mut targets: Vec<usize> = Vec::with_capacity(m);
    let mut candidates: Vec<usize> = Vec::new();
    for source in (m + 1)..n {
        targets.clear();
        // Draws only see edges that existed before this arrival.
        let pool_len = endpoints.len();
        let mut anchor: Option<usize> = None;

        for step in 0..m {
            let mut chosen = None;
            if step > 0 && rng.gen::<f64>() < triad_prob {
                if let Some(a) = anchor {
                    candidates.clear();
                    candidates.extend(
                        adjacency[a]
                            .iter()
                            .copied()
                            .filter(|c| *c != source && !targets.contains(c)),
                    );
                    if !candidates.is_empty() {
                        chosen = Some(candidates[rng.gen_range(0..candidates.len())]);
                    }
                }
            }
            if chosen.is_none() {
                for _ in 0..MAX_ATTACH_ATTEMPTS {
                    let t = endpoints[rng.gen_range(0..pool_len)];
                    if !targets.contains(&t) {
                        chosen = Some(t);
                        anchor = Some(t);
                        break;
                    }
                }
            }
            if let Some(t) = chosen {
                targets.push(t);
                adjacency[t].push(source);
                adjacency[source].push(t);
            }
        }
        for &t in &targets {
            endpoints.push(t);
            endpoints.push(source);
        }
    }

    for list in &mut adjacency {
        list.sort_unstable();
    }
    Ok(Graph::from_sorted_adjacency(adjacency))
}

/// Connecting-nearest-neighbor growth.
///
/// Starts from one node. Each step, with probability `1 - u` a new node joins,
/// links to a uniformly random existing node, and records a potential link to
/// each of that node's neighbors; with probability `u` one uniformly random
/// pending potential link is realized. Conversions are skipped when nothing is
/// pending; a drawn pair that is already linked is discarded.
pub fn generate_cnn(params: &CnnParams, seed: u64) -> Result<Graph> {
    generate_cnn_with_stats(params, seed).map(|(g, _)| g)
}

/// Counters from one CNN growth run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CnnGrowthStats {
    pub nodes_added: usize,
    pub conversions: usize,
    pub discarded_conversions: usize,
    pub skipped_conversions: usize,
}

/// [`generate_cnn`] that also reports how the growth steps went.
pub fn generate_cnn_with_stats(params: &CnnParams, seed: u64) -> Result<(Graph, CnnGrowthStats)> {
    let CnnParams {
        n,
        conversion_prob: u,
    } = *params;
    if n < 1 {
        return Err(Error::InvalidParameter("CNN model needs n >= 1".into()));
    }
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "conversion probability {u} outside (0, 1)"
        )));
    }

    let mut rng = seeded_rng(seed);
    let mut adjacency: Vec<Vec<usize>> = Vec::with_capacity(n);
    adjacency.push(Vec::new());
    let mut pending: Vec<(usize, usize)> = Vec::new();
    let mut stats = CnnGrowthStats {
        nodes_added: 1,
        ..Default::default()
    };

    while adjacency.len() < n {
        if rng.gen::<f64>() < u {
            if pending.is_empty() {
                stats.skipped_conversions += 1;
                continue;
            }
            let (a, b) = pending.swap_remove(rng.gen_range(0..pending.len()));
            if adjacency[a].contains(&b) {
                stats.discarded_conversions += 1;
            } else {
                adjacency[a].push(b);
                adjacency[b].push(a);
                stats.conversions += 1;
            }
        } else {
            let new = adjacency.len();
            let target = rng.gen_range(0..new);
            pending.extend(adjacency[target].iter().map(|&nb| (new, nb)));
            adjacency.push(vec![target]);
            adjacency[target].push(new);
            stats.nodes_added += 1;
        }
    }

    for list in &mut adjacency {
        list.sort_unstable();
    }
    Ok((Graph::from_sorted_adjacency(adjacency), stats))
}
