//! Shared generators and independent oracles for the integration suites.
//!
//! The oracles deliberately avoid the library's own code paths: Bellman-Ford
//! instead of Dijkstra, Floyd-Warshall instead of per-source searches,
//! exhaustive path enumeration instead of the path index, and
//! transportation-polytope vertex enumeration instead of the flow solver.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sobolev_transport::builder::{build_cluster_graph, perturb_for_uniqueness, Density};
use sobolev_transport::graph::{build_path_index, Edge, EdgeId, Graph, NodeId, PathIndex};
use sobolev_transport::measure::Measure;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect())
        .collect()
}

/// Connected random graph over ~`m` cluster nodes, weights perturbed so
/// shortest paths are unique.
pub fn random_graph(rng: &mut ChaCha8Rng, m: usize) -> Graph {
    let points = random_points(rng, m * 3, 2);
    let (g, _) = build_cluster_graph(&points, m, Density::Log, rng.gen()).unwrap();
    perturb_for_uniqueness(&g, 1e-4, rng.gen()).unwrap()
}

pub fn random_indexed_graph(rng: &mut ChaCha8Rng, m: usize) -> (Graph, PathIndex) {
    let g = random_graph(rng, m);
    let idx = build_path_index(&g).unwrap();
    (g, idx)
}

/// Random tree: each node links to a random earlier node with a random
/// positive weight.
pub fn random_tree(rng: &mut ChaCha8Rng, n: usize) -> Graph {
    assert!(n >= 2);
    let nodes: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
    let edges: Vec<Edge> = (1..n)
        .map(|v| Edge {
            u: rng.gen_range(0..v),
            v,
            w: rng.gen_range(0.3..1.7),
        })
        .collect();
    Graph::new(nodes, edges, 0).unwrap()
}

/// Random measure over `k` distinct nodes with masses bounded away from 0.
pub fn random_measure(rng: &mut ChaCha8Rng, n_nodes: usize, k: usize) -> Measure {
    let k = k.min(n_nodes).max(1);
    let mut ids: Vec<NodeId> = (0..n_nodes).collect();
    ids.shuffle(rng);
    ids.truncate(k);
    let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
    Measure::normalized(ids, weights).unwrap()
}

// ---------------------------------------------------------------------------
// oracles

/// Bellman-Ford single-source distances.
pub fn bellman_ford(graph: &Graph, source: NodeId) -> Vec<f64> {
    let n = graph.n_nodes();
    let mut dist = vec![f64::INFINITY; n];
    dist[source] = 0.0;
    for _ in 0..n {
        let mut changed = false;
        for e in graph.edges() {
            if dist[e.u] + e.w < dist[e.v] {
                dist[e.v] = dist[e.u] + e.w;
                changed = true;
            }
            if dist[e.v] + e.w < dist[e.u] {
                dist[e.u] = dist[e.v] + e.w;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    dist
}

/// Floyd-Warshall all-pairs distances.
pub fn floyd_warshall(graph: &Graph) -> Vec<Vec<f64>> {
    let n = graph.n_nodes();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (v, row) in d.iter_mut().enumerate() {
        row[v] = 0.0;
    }
    for e in graph.edges() {
        d[e.u][e.v] = d[e.u][e.v].min(e.w);
        d[e.v][e.u] = d[e.v][e.u].min(e.w);
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

/// Every simple path between two nodes as (edge ids, total length).
/// Exponential; only for small graphs.
pub fn all_simple_paths(graph: &Graph, from: NodeId, to: NodeId) -> Vec<(Vec<EdgeId>, f64)> {
    let mut out = Vec::new();
    let mut visited = vec![false; graph.n_nodes()];
    let mut stack: Vec<EdgeId> = Vec::new();
    fn dfs(
        graph: &Graph,
        at: NodeId,
        to: NodeId,
        visited: &mut Vec<bool>,
        stack: &mut Vec<EdgeId>,
        len: f64,
        out: &mut Vec<(Vec<EdgeId>, f64)>,
    ) {
        if at == to {
            out.push((stack.clone(), len));
            return;
        }
        visited[at] = true;
        for &(next, e) in graph.neighbors(at) {
            if !visited[next] {
                stack.push(e);
                dfs(graph, next, to, visited, stack, len + graph.edges()[e].w, out);
                stack.pop();
            }
        }
        visited[at] = false;
    }
    dfs(graph, from, to, &mut visited, &mut stack, 0.0, &mut out);
    out
}

/// Exact transport value by enumerating the basic feasible solutions of the
/// transportation polytope: every vertex is supported on a spanning tree of
/// the complete bipartite graph, whose flows the marginals determine
/// uniquely. Only for n·m ≤ 20.
pub fn brute_force_ot(a: &[f64], b: &[f64], cost: &[Vec<f64>]) -> f64 {
    let (n, m) = (a.len(), b.len());
    let arcs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .collect();
    assert!(arcs.len() <= 20, "brute force limited to 20 arcs");
    let need = n + m - 1;
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << arcs.len()) {
        if mask.count_ones() as usize != need {
            continue;
        }
        let chosen: Vec<(usize, usize)> = arcs
            .iter()
            .enumerate()
            .filter(|(k, _)| mask & (1 << k) != 0)
            .map(|(_, &ij)| ij)
            .collect();
        // must form a spanning tree over the n + m nodes
        let mut parent: Vec<usize> = (0..n + m).collect();
        fn find(parent: &mut Vec<usize>, x: usize) -> usize {
            if parent[x] != x {
                let r = find(parent, parent[x]);
                parent[x] = r;
            }
            parent[x]
        }
        let mut acyclic = true;
        for &(i, j) in &chosen {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, n + j));
            if ri == rj {
                acyclic = false;
                break;
            }
            parent[ri.max(rj)] = ri.min(rj);
        }
        if !acyclic {
            continue;
        }

        // leaf elimination determines the flows
        let mut residual: Vec<f64> = a.iter().copied().chain(b.iter().copied()).collect();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n + m];
        for (k, &(i, j)) in chosen.iter().enumerate() {
            adj[i].push(k);
            adj[n + j].push(k);
        }
        let mut degree: Vec<usize> = adj.iter().map(|l| l.len()).collect();
        let mut used = vec![false; chosen.len()];
        let mut flows = vec![0.0f64; chosen.len()];
        let mut queue: Vec<usize> = (0..n + m).filter(|&v| degree[v] == 1).collect();
        let mut feasible = true;
        while let Some(v) = queue.pop() {
            let Some(&k) = adj[v].iter().find(|&&k| !used[k]) else {
                continue;
            };
            used[k] = true;
            let (i, j) = chosen[k];
            let other = if v == i { n + j } else { i };
            let f = residual[v];
            if f < -1e-9 {
                feasible = false;
                break;
            }
            flows[k] = f.max(0.0);
            residual[v] = 0.0;
            residual[other] -= flows[k];
            degree[v] -= 1;
            degree[other] -= 1;
            if degree[other] == 1 {
                queue.push(other);
            }
        }
        if !feasible {
            continue;
        }
        let total: f64 = flows
            .iter()
            .zip(&chosen)
            .map(|(f, &(i, j))| f * cost[i][j])
            .sum();
        best = best.min(total);
    }
    best
}
