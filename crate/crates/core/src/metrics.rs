//! Per-node structural features `(k, k_nn, b, L, C)`.
//!
//! All quantities are exact. Betweenness and path lengths come from one
//! breadth-first search per source node; the per-source passes run in
//! parallel over a fixed partition of the sources and are reduced in source
//! order, so results do not depend on the number of worker threads.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Graph;

pub const FEATURE_COUNT: usize = 5;
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = ["k", "k_nn", "b", "L", "C"];

/// Sources are split into at most this many contiguous blocks for the
/// parallel passes. Fixed so the floating-point reduction order is too.
const SOURCE_BLOCKS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatures {
    pub degree: Vec<usize>,
    pub avg_neighbor_degree: Vec<f64>,
    pub betweenness: Vec<f64>,
    pub avg_path_length: Vec<f64>,
    pub clustering: Vec<f64>,
}

impl NodeFeatures {
    pub fn len(&self) -> usize {
        self.degree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degree.is_empty()
    }

    /// Feature vector of one node in [`FEATURE_NAMES`] order.
    pub fn row(&self, node: usize) -> [f64; FEATURE_COUNT] {
        [
            self.degree[node] as f64,
            self.avg_neighbor_degree[node],
            self.betweenness[node],
            self.avg_path_length[node],
            self.clustering[node],
        ]
    }

    pub fn rows(&self) -> Vec<[f64; FEATURE_COUNT]> {
        (0..self.len()).map(|i| self.row(i)).collect()
    }

    pub fn column(&self, feature: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.row(i)[feature]).collect()
    }

    /// CSV with header `node,k,k_nn,b,L,C`. Floats use the shortest
    /// representation that parses back to the identical value.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["node", "k", "k_nn", "b", "L", "C"])?;
        for i in 0..self.len() {
            w.write_record([
                i.to_string(),
                self.degree[i].to_string(),
                self.avg_neighbor_degree[i].to_string(),
                self.betweenness[i].to_string(),
                self.avg_path_length[i].to_string(),
                self.clustering[i].to_string(),
            ])?;
        }
        crate::error::finish_csv(w)
    }

    pub fn from_csv(text: &str, origin: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
        if header != ["node", "k", "k_nn", "b", "L", "C"] {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line: 1,
                msg: format!("unexpected feature header {header:?}"),
            });
        }
        let mut features = NodeFeatures {
            degree: Vec::new(),
            avg_neighbor_degree: Vec::new(),
            betweenness: Vec::new(),
            avg_path_length: Vec::new(),
            clustering: Vec::new(),
        };
        for (idx, record) in reader.records().enumerate() {
            let record = record?;
            let line = idx + 2;
            let bad = |msg: String| Error::Parse {
                path: origin.to_path_buf(),
                line,
                msg,
            };
            let field = |col: usize| record.get(col).ok_or_else(|| bad("missing column".into()));
            let node: usize = field(0)?
                .parse()
                .map_err(|_| bad(format!("bad node id {:?}", &record[0])))?;
            if node != idx {
                return Err(bad(format!(
                    "rows must be in node order, found node {node}"
                )));
            }
            features.degree.push(
                field(1)?
                    .parse()
                    .map_err(|_| bad(format!("bad degree {:?}", &record[1])))?,
            );
            let float = |col: usize| -> Result<f64> {
                field(col)?
                    .parse()
                    .map_err(|_| bad(format!("bad value {:?}", &record[col])))
            };
            let values = [float(2)?, float(3)?, float(4)?, float(5)?];
            features.avg_neighbor_degree.push(values[0]);
            features.betweenness.push(values[1]);
            features.avg_path_length.push(values[2]);
            features.clustering.push(values[3]);
        }
        Ok(features)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text, path)
    }
}

/// Mean degree of each node's neighbors; 0 for isolated nodes.
pub fn avg_neighbor_degree(graph: &Graph) -> Vec<f64> {
    (0..graph.node_count())
        .map(|i| {
            let nbrs = graph.neighbors(i);
            if nbrs.is_empty() {
                0.0
            } else {
                let total: usize = nbrs.iter().map(|&j| graph.degree(j)).sum();
                total as f64 / nbrs.len() as f64
            }
        })
        .collect()
}

/// Local clustering coefficient; 0 for nodes with fewer than two neighbors.
pub fn clustering(graph: &Graph) -> Vec<f64> {
    let n = graph.node_count();
    let mut mark = vec![usize::MAX; n];
    (0..n)
        .map(|i| {
            let nbrs = graph.neighbors(i);
            let k = nbrs.len();
            if k < 2 {
                return 0.0;
            }
            for &j in nbrs {
                mark[j] = i;
            }
            // Each neighbor-neighbor link is seen from both ends.
            let twice_links: usize = nbrs
                .iter()
                .map(|&j| graph.neighbors(j).iter().filter(|&&w| mark[w] == i).count())
                .sum();
            (twice_links / 2) as f64 / (k * (k - 1) / 2) as f64
        })
        .collect()
}

/// Normalized betweenness: for each node, the sum over unordered pairs of
/// other nodes of the fraction of their shortest paths through it, divided
/// by `(N-1)(N-2)/2`. Unconnected pairs contribute nothing.
pub fn betweenness(graph: &Graph) -> Result<Vec<f64>> {
    let n = graph.node_count();
    if n < 3 {
        return Err(Error::TooSmall(format!(
            "betweenness needs at least 3 nodes, got {n}"
        )));
    }
    let (dependency, _) = all_sources(graph);
    Ok(normalize_dependency(dependency, n))
}

/// Mean hop distance from each node to every other node.
pub fn avg_path_length(graph: &Graph) -> Result<Vec<f64>> {
    let n = graph.node_count();
    if n < 2 {
        return Err(Error::TooSmall(format!(
            "path length needs at least 2 nodes, got {n}"
        )));
    }
    let (_, distances) = all_sources(graph);
    path_lengths(graph, distances)
}

/// All five features. Requires a connected graph with at least 3 nodes.
pub fn compute_all(graph: &Graph) -> Result<NodeFeatures> {
    let n = graph.node_count();
    if n < 3 {
        return Err(Error::TooSmall(format!(
            "feature computation needs at least 3 nodes, got {n}"
        )));
    }
    let (dependency, distances) = all_sources(graph);
    let avg_path_length = path_lengths(graph, distances)?;
    Ok(NodeFeatures {
        degree: (0..n).map(|i| graph.degree(i)).collect(),
        avg_neighbor_degree: avg_neighbor_degree(graph),
        betweenness: normalize_dependency(dependency, n),
        avg_path_length,
        clustering: clustering(graph),
    })
}

/// Newman's degree assortativity coefficient (Pearson correlation of the
/// degrees at either end of an edge). `None` when undefined.
pub fn degree_assortativity(graph: &Graph) -> Option<f64> {
    let m = graph.edge_count() as f64;
    if m == 0.0 {
        return None;
    }
    let (mut prod, mut sum, mut sq) = (0.0, 0.0, 0.0);
    for (u, v) in graph.edges() {
        let (a, b) = (graph.degree(u) as f64, graph.degree(v) as f64);
        prod += a * b;
        sum += 0.5 * (a + b);
        sq += 0.5 * (a * a + b * b);
    }
    let mean = sum / m;
    let denom = sq / m - mean * mean;
    if denom.abs() < 1e-15 {
        return None;
    }
    Some((prod / m - mean * mean) / denom)
}

/// Per-source BFS summary: distance sum and number of reached nodes.
#[derive(Debug, Clone, Copy)]
struct Reach {
    distance_sum: u64,
    reached: usize,
    first_unreached: Option<usize>,
}

/// Flat adjacency for cache-friendly repeated traversal.
struct Csr {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl Csr {
    fn new(graph: &Graph) -> Self {
        let mut offsets = Vec::with_capacity(graph.node_count() + 1);
        let mut targets = Vec::with_capacity(2 * graph.edge_count());
        offsets.push(0);
        for v in 0..graph.node_count() {
            targets.extend(graph.neighbors(v).iter().map(|&w| w as u32));
            offsets.push(targets.len());
        }
        Csr { offsets, targets }
    }

    fn neighbors(&self, v: usize) -> &[u32] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }
}

const UNSEEN: u32 = u32::MAX;

struct Workspace {
    dist: Vec<u32>,
    sigma: Vec<f64>,
    delta: Vec<f64>,
    /// BFS visiting order; doubles as the queue.
    order: Vec<u32>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Workspace {
            dist: vec![UNSEEN; n],
            sigma: vec![0.0; n],
            delta: vec![0.0; n],
            order: Vec::with_capacity(n),
        }
    }

    /// One Brandes pass from `source`: accumulates pair dependencies into
    /// `acc` and returns reachability data.
    fn pass(&mut self, csr: &Csr, source: usize, acc: &mut [f64]) -> Reach {
        let Workspace {
            dist,
            sigma,
            delta,
            order,
        } = self;
        for &v in order.iter() {
            dist[v as usize] = UNSEEN;
            sigma[v as usize] = 0.0;
            delta[v as usize] = 0.0;
        }
        order.clear();

        dist[source] = 0;
        sigma[source] = 1.0;
        order.push(source as u32);
        let mut head = 0;
        let mut distance_sum = 0u64;
        while head < order.len() {
            let v = order[head] as usize;
            head += 1;
            let dv = dist[v];
            distance_sum += dv as u64;
            let sv = sigma[v];
            for &w in csr.neighbors(v) {
                let w = w as usize;
                if dist[w] == UNSEEN {
                    dist[w] = dv + 1;
                    order.push(w as u32);
                }
                if dist[w] == dv + 1 {
                    sigma[w] += sv;
                }
            }
        }

        for &w in order.iter().rev() {
            let w = w as usize;
            let dw = dist[w];
            let coeff = (1.0 + delta[w]) / sigma[w];
            for &v in csr.neighbors(w) {
                let v = v as usize;
                if dist[v].wrapping_add(1) == dw {
                    delta[v] += sigma[v] * coeff;
                }
            }
            if w != source {
                acc[w] += delta[w];
            }
        }

        let reached = order.len();
        let first_unreached = if reached < dist.len() {
            dist.iter().position(|&d| d == UNSEEN)
        } else {
            None
        };
        Reach {
            distance_sum,
            reached,
            first_unreached,
        }
    }
}

/// Runs a Brandes pass from every source. Returns summed (ordered-pair)
/// dependencies and per-source reach data in source order.
fn all_sources(graph: &Graph) -> (Vec<f64>, Vec<Reach>) {
    let n = graph.node_count();
    let block = n.div_ceil(SOURCE_BLOCKS).max(1);
    let csr = Csr::new(graph);
    let partials: Vec<(Vec<f64>, Vec<Reach>)> = (0..n)
        .step_by(block)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let end = (start + block).min(n);
            let mut ws = Workspace::new(n);
            let mut acc = vec![0.0; n];
            let reach = (start..end).map(|s| ws.pass(&csr, s, &mut acc)).collect();
            (acc, reach)
        })
        .collect();

    let mut dependency = vec![0.0; n];
    let mut reach = Vec::with_capacity(n);
    for (acc, r) in partials {
        for (total, part) in dependency.iter_mut().zip(acc) {
            *total += part;
        }
        reach.extend(r);
    }
    (dependency, reach)
}

fn normalize_dependency(dependency: Vec<f64>, n: usize) -> Vec<f64> {
    // Each unordered pair was counted once from each endpoint.
    let pairs = ((n - 1) * (n - 2)) as f64 / 2.0;
    dependency.into_iter().map(|d| d / 2.0 / pairs).collect()
}

fn path_lengths(graph: &Graph, reach: Vec<Reach>) -> Result<Vec<f64>> {
    let n = graph.node_count();
    reach
        .into_iter()
        .enumerate()
        .map(|(source, r)| {
            if r.reached < n {
                return Err(Error::Disconnected {
                    from: source,
                    to: r.first_unreached.unwrap_or(source),
                });
            }
            Ok(r.distance_sum as f64 / (n - 1) as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k3() -> Graph {
        Graph::new(3, [(0, 1), (1, 2), (0, 2)]).unwrap()
    }
    fn p3() -> Graph {
        Graph::new(3, [(0, 1), (1, 2)]).unwrap()
    }
    fn star4() -> Graph {
        Graph::new(5, [(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap()
    }

    #[test]
    fn neighbor_degree_fixtures() {
        assert_eq!(avg_neighbor_degree(&k3()), vec![2.0; 3]);
        assert_eq!(avg_neighbor_degree(&star4()), vec![1.0, 4.0, 4.0, 4.0, 4.0]);
        assert_eq!(avg_neighbor_degree(&p3()), vec![2.0, 1.0, 2.0]);
        let isolated = Graph::new(3, [(0, 1)]).unwrap();
        assert_eq!(avg_neighbor_degree(&isolated)[2], 0.0);
    }

    #[test]
    fn betweenness_fixtures() {
        assert_eq!(betweenness(&p3()).unwrap(), vec![0.0, 1.0, 0.0]);
        assert_eq!(betweenness(&k3()).unwrap(), vec![0.0; 3]);
        // Center of a 4-star lies on all 6 leaf pairs; denominator 4*3/2.
        assert_eq!(betweenness(&star4()).unwrap()[0], 1.0);
        assert!(matches!(
            betweenness(&Graph::new(2, [(0, 1)]).unwrap()),
            Err(Error::TooSmall(_))
        ));
    }

    #[test]
    fn betweenness_disconnected_pairs_contribute_zero() {
        // P3 plus an isolated node: only pair (0,2) routes through 1.
        let g = Graph::new(4, [(0, 1), (1, 2)]).unwrap();
        let b = betweenness(&g).unwrap();
        assert!((b[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(b[3], 0.0);
    }

    #[test]
    fn path_length_fixtures() {
        assert_eq!(avg_path_length(&k3()).unwrap(), vec![1.0; 3]);
        assert_eq!(avg_path_length(&p3()).unwrap(), vec![1.5, 1.0, 1.5]);
        assert_eq!(
            avg_path_length(&star4()).unwrap(),
            vec![1.0, 1.75, 1.75, 1.75, 1.75]
        );
    }

    #[test]
    fn path_length_rejects_disconnected() {
        let g = Graph::new(4, [(0, 1), (2, 3)]).unwrap();
        match avg_path_length(&g) {
            Err(Error::Disconnected { from: 0, to: 2 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn clustering_fixtures() {
        assert_eq!(clustering(&k3()), vec![1.0; 3]);
        assert_eq!(clustering(&star4()), vec![0.0; 5]);
        // K4 minus edge 2-3: node 0 sees neighbors {1,2,3} with links 1-2, 1-3.
        let g = Graph::new(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3)]).unwrap();
        assert!((clustering(&g)[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn compute_all_fixtures() {
        let f = compute_all(&k3()).unwrap();
        for i in 0..3 {
            assert_eq!(f.row(i), [2.0, 2.0, 0.0, 1.0, 1.0]);
        }
        let f = compute_all(&p3()).unwrap();
        assert_eq!(f.row(1), [2.0, 1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let g = Graph::new(
            6,
            [
                (0, 1),
                (1, 2),
                (2, 3),
                (3, 4),
                (4, 5),
                (5, 0),
                (0, 3),
                (1, 4),
            ],
        )
        .unwrap();
        let f = compute_all(&g).unwrap();
        let text = f.to_csv().unwrap();
        assert!(text.starts_with("node,k,k_nn,b,L,C\n"));
        assert_eq!(NodeFeatures::from_csv(&text, Path::new("x")).unwrap(), f);
    }

    #[test]
    fn csv_rejects_bad_header() {
        assert!(NodeFeatures::from_csv("a,b\n1,2\n", Path::new("x")).is_err());
    }

    #[test]
    fn assortativity_star_is_negative() {
        assert!(degree_assortativity(&star4()).is_none_or(|r| r < 0.0));
        let g = Graph::new(5, [(0, 1), (0, 2), (0, 3), (0, 4), (1, 2)]).unwrap();
        assert!(degree_assortativity(&g).unwrap() < 0.0);
    }
}
