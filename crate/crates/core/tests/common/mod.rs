//! Shared fixtures and brute-force oracles for the integration tests.

#![allow(dead_code)]

use netsom_core::Graph;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random connected graph: a random spanning tree plus each remaining pair
/// with probability `extra`.
pub fn random_connected(n: usize, extra: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((rng.gen_range(0..v), v));
    }
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(extra) {
                edges.push((u, v));
            }
        }
    }
    Graph::new(n, edges).unwrap()
}

/// All-pairs hop distances by Floyd-Warshall; `usize::MAX` when unreachable.
pub fn distances(g: &Graph) -> Vec<Vec<usize>> {
    let n = g.node_count();
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for (u, row) in d.iter_mut().enumerate() {
        row[u] = 0;
        for &v in g.neighbors(u) {
            row[v] = 1;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

/// Every shortest path from `s` to `t`, as node sequences.
pub fn shortest_paths(g: &Graph, d: &[Vec<usize>], s: usize, t: usize) -> Vec<Vec<usize>> {
    fn walk(
        g: &Graph,
        d: &[Vec<usize>],
        t: usize,
        path: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        let u = *path.last().unwrap();
        if u == t {
            out.push(path.clone());
            return;
        }
        for &v in g.neighbors(u) {
            if d[v][t] + 1 == d[u][t] {
                path.push(v);
                walk(g, d, t, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(g, d, t, &mut vec![s], &mut out);
    out
}

pub fn brute_betweenness(g: &Graph) -> Vec<f64> {
    let n = g.node_count();
    let d = distances(g);
    let mut b = vec![0.0; n];
    for s in 0..n {
        for t in s + 1..n {
            let paths = shortest_paths(g, &d, s, t);
            if paths.is_empty() {
                continue;
            }
            for (v, bv) in b.iter_mut().enumerate() {
                if v == s || v == t {
                    continue;
                }
                let through = paths.iter().filter(|p| p.contains(&v)).count();
                *bv += through as f64 / paths.len() as f64;
            }
        }
    }
    let norm = ((n - 1) * (n - 2)) as f64 / 2.0;
    b.iter().map(|x| x / norm).collect()
}

pub fn brute_path_length(g: &Graph) -> Vec<f64> {
    let n = g.node_count();
    let d = distances(g);
    (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| d[i][j] as f64)
                .sum::<f64>()
                / (n - 1) as f64
        })
        .collect()
}

pub fn brute_clustering(g: &Graph) -> Vec<f64> {
    (0..g.node_count())
        .map(|i| {
            let nb = g.neighbors(i);
            let k = nb.len();
            if k < 2 {
                return 0.0;
            }
            let mut links = 0;
            for a in 0..k {
                for b in a + 1..k {
                    if g.has_edge(nb[a], nb[b]) {
                        links += 1;
                    }
                }
            }
            links as f64 / (k * (k - 1) / 2) as f64
        })
        .collect()
}

/// Parses an SVG document, panicking with the parser message if it is not
/// well-formed XML with an `svg` root.
pub fn assert_valid_svg(svg: &str) {
    let doc = roxmltree::Document::parse(svg).unwrap_or_else(|e| panic!("invalid SVG: {e}"));
    assert_eq!(doc.root_element().tag_name().name(), "svg");
}

pub fn sector_angle_sums(svg: &str) -> Vec<f64> {
    let doc = roxmltree::Document::parse(svg).unwrap();
    let mut sums = Vec::new();
    for pie in doc
        .descendants()
        .filter(|n| n.attribute("class") == Some("pie"))
    {
        let total: f64 = pie
            .descendants()
            .filter(|n| n.attribute("class") == Some("sector"))
            .map(|n| n.attribute("data-angle").unwrap().parse::<f64>().unwrap())
            .sum();
        sums.push(total);
    }
    sums
}
