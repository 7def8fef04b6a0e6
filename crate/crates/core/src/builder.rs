//! Graph construction from point clouds: farthest-point clustering into at
//! most `M` nodes, random edge sampling at `n·ln n` or `n^(3/2)` density, and
//! greedy bridging of leftover components.

use std::collections::HashSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::{Error, Result};
use crate::graph::{Edge, Graph, NodeId};

/// Edge-count regime for sampled cluster graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Density {
    /// ⌈n·ln n⌉ sampled edges.
    Log,
    /// ⌈n^(3/2)⌉ sampled edges.
    Sqrt,
}

impl Density {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "log" => Ok(Density::Log),
            "sqrt" => Ok(Density::Sqrt),
            other => Err(Error::invalid(format!("unknown density {other:?} (expected log|sqrt)"))),
        }
    }

    fn edge_target(&self, n: usize) -> usize {
        let nf = n as f64;
        match self {
            Density::Log => (nf * nf.ln()).ceil() as usize,
            Density::Sqrt => nf.powf(1.5).ceil() as usize,
        }
    }
}

impl std::fmt::Display for Density {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Density::Log => "log",
            Density::Sqrt => "sqrt",
        })
    }
}

/// How farthest-point clustering picks its first center.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirstCenter {
    /// The point with lexicographically smallest coordinates; makes the
    /// clustering independent of the seed.
    Lexicographic,
    /// Seeded random start.
    Random,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Farthest-point clustering into at most `m` clusters.
///
/// Returns the chosen center point indices and the cluster index of every
/// point. Stops early once every point coincides with a center.
pub fn farthest_point_clustering(
    points: &[Vec<f64>],
    m: usize,
    first: FirstCenter,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if points.is_empty() {
        return Err(Error::invalid("clustering needs at least one point"));
    }
    if m == 0 {
        return Err(Error::invalid("cluster budget must be positive"));
    }
    let start = match first {
        FirstCenter::Lexicographic => {
            let mut best = 0;
            for i in 1..points.len() {
                if points[i] < points[best] {
                    best = i;
                }
            }
            best
        }
        FirstCenter::Random => ChaCha8Rng::seed_from_u64(seed).gen_range(0..points.len()),
    };
    let mut centers = vec![start];
    let mut assign = vec![0usize; points.len()];
    let mut d_to_center: Vec<f64> = points.iter().map(|p| euclid(p, &points[start])).collect();
    while centers.len() < m {
        let mut far = 0;
        for i in 1..points.len() {
            if d_to_center[i] > d_to_center[far] {
                far = i;
            }
        }
        if d_to_center[far] == 0.0 {
            break; // every point already sits on a center
        }
        let c = centers.len();
        centers.push(far);
        for i in 0..points.len() {
            let d = euclid(&points[i], &points[far]);
            if d < d_to_center[i] {
                d_to_center[i] = d;
                assign[i] = c;
            }
        }
    }
    Ok((centers, assign))
}

/// Builds a connected graph over cluster centroids with randomly sampled
/// edges, plus the cluster assignment of every input point.
///
/// Centroids (cluster means) become nodes; `target` random distinct node
/// pairs get edges weighted by Euclidean length, capped at the complete
/// graph; remaining components are bridged greedily by their closest
/// centroid pairs. The root defaults to node 0; re-root afterwards if
/// needed. Deterministic for a fixed seed.
pub fn build_cluster_graph(
    points: &[Vec<f64>],
    m: usize,
    density: Density,
    seed: u64,
) -> Result<(Graph, Vec<NodeId>)> {
    if points.len() < 2 {
        return Err(Error::invalid("need at least 2 points"));
    }
    if m < 2 {
        return Err(Error::invalid("cluster budget M must be at least 2"));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::invalid("inconsistent point dimensions"));
    }
    let (_, assign) = farthest_point_clustering(points, m, FirstCenter::Lexicographic, seed)?;
    let n = assign.iter().max().unwrap() + 1;
    if n < 2 {
        return Err(Error::invalid(
            "all points collapse into a single cluster; cannot build a graph",
        ));
    }

    // cluster means
    let mut centroids = vec![vec![0.0f64; dim]; n];
    let mut counts = vec![0usize; n];
    for (p, &c) in points.iter().zip(&assign) {
        counts[c] += 1;
        for (acc, x) in centroids[c].iter_mut().zip(p) {
            *acc += x;
        }
    }
    for (c, cnt) in centroids.iter_mut().zip(&counts) {
        for x in c.iter_mut() {
            *x /= *cnt as f64;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all_pairs = n * (n - 1) / 2;
    let target = density.edge_target(n).min(all_pairs);
    let sampled = sample_pairs(n, target, &centroids, &mut rng);

    // bridge remaining components through their closest positive-length pairs
    let mut dsu = Dsu::new(n);
    for &(u, v) in &sampled {
        dsu.union(u, v);
    }
    let mut edges: Vec<Edge> = sampled
        .iter()
        .map(|&(u, v)| Edge {
            u,
            v,
            w: euclid(&centroids[u], &centroids[v]),
        })
        .collect();
    let sampled_count = edges.len();
    let mut bridges = 0usize;
    loop {
        let mut best: Option<(f64, NodeId, NodeId)> = None;
        for u in 0..n {
            for v in (u + 1)..n {
                if dsu.find(u) == dsu.find(v) {
                    continue;
                }
                let d = euclid(&centroids[u], &centroids[v]);
                if d <= 0.0 {
                    continue;
                }
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, u, v));
                }
            }
        }
        match best {
            Some((d, u, v)) => {
                edges.push(Edge { u, v, w: d });
                dsu.union(u, v);
                bridges += 1;
            }
            None => break,
        }
    }
    if (0..n).any(|v| dsu.find(v) != dsu.find(0)) {
        return Err(Error::invalid(
            "could not connect cluster graph: coincident centroids leave zero-length gaps",
        ));
    }

    let mut graph = Graph::new(centroids, edges, 0)?;
    let meta = graph.meta_mut();
    meta.insert("builder".into(), json!("cluster"));
    meta.insert("density".into(), json!(density.to_string()));
    meta.insert("cluster_budget".into(), json!(m));
    meta.insert("seed".into(), json!(seed));
    meta.insert("sampled_edges".into(), json!(sampled_count));
    meta.insert("bridge_edges".into(), json!(bridges));
    meta.insert("bridge_policy".into(), json!("closest-pair"));
    Ok((graph, assign))
}

/// `target` distinct unordered pairs with positive centroid distance,
/// uniformly without replacement.
fn sample_pairs(
    n: usize,
    target: usize,
    centroids: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> Vec<(NodeId, NodeId)> {
    let positive = |u: usize, v: usize| euclid(&centroids[u], &centroids[v]) > 0.0;
    let all_pairs = n * (n - 1) / 2;
    if target * 2 >= all_pairs {
        // dense regime: enumerate and partially shuffle
        let mut pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| ((u + 1)..n).map(move |v| (u, v)))
            .filter(|&(u, v)| positive(u, v))
            .collect();
        let take = target.min(pairs.len());
        for i in 0..take {
            let j = rng.gen_range(i..pairs.len());
            pairs.swap(i, j);
        }
        pairs.truncate(take);
        pairs
    } else {
        let mut seen = HashSet::with_capacity(target * 2);
        let mut pairs = Vec::with_capacity(target);
        let mut stall = 0usize;
        while pairs.len() < target && stall < 1000 * (target + 16) {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if a == b {
                stall += 1;
                continue;
            }
            let key = (a.min(b), a.max(b));
            if !positive(key.0, key.1) || !seen.insert(key) {
                stall += 1;
                continue;
            }
            pairs.push(key);
        }
        pairs
    }
}

/// Multiplies every edge weight by `1 + u` with `u` uniform in
/// `[-epsilon, epsilon]`, making shortest-path ties vanish almost surely.
pub fn perturb_for_uniqueness(graph: &Graph, epsilon: f64, seed: u64) -> Result<Graph> {
    if !(epsilon > 0.0 && epsilon <= 1e-3) {
        return Err(Error::invalid(format!(
            "epsilon must be in (0, 1e-3], got {epsilon}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges: Vec<Edge> = graph
        .edges()
        .iter()
        .map(|e| Edge {
            u: e.u,
            v: e.v,
            w: e.w * (1.0 + rng.gen_range(-epsilon..=epsilon)),
        })
        .collect();
    let mut out = Graph::new(graph.nodes().to_vec(), edges, graph.root())?;
    *out.meta_mut() = graph.meta().clone();
    out.meta_mut().insert("perturb_epsilon".into(), json!(epsilon));
    out.meta_mut().insert("perturb_seed".into(), json!(seed));
    Ok(out)
}

struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let r = self.find(self.parent[x]);
            self.parent[x] = r;
        }
        self.parent[x]
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}
