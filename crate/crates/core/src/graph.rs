//! Rooted graph metric space: storage, the shortest-path index from the root,
//! and pairwise graph distances.
//!
//! Every downstream distance reads the graph only through [`PathIndex`]: the
//! per-node ordered list of edges on the unique shortest path from the root.
//! Node `x` lies in the cone of edge `e` (mass aggregated across `e`) exactly
//! when `e` appears on the root-to-`x` path, so the index materializes those
//! memberships once per graph, independent of the input measures.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rayon::prelude::*;

use crate::error::{Error, Result};

pub type NodeId = usize;
pub type EdgeId = usize;

/// Undirected weighted edge; `w` is a positive length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: NodeId,
    pub v: NodeId,
    pub w: f64,
}

/// Connected undirected graph with node coordinates, positive edge lengths,
/// and a designated root node. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Graph {
    nodes: Vec<Vec<f64>>,
    edges: Vec<Edge>,
    root: NodeId,
    meta: serde_json::Map<String, serde_json::Value>,
    adj: Vec<Vec<(NodeId, EdgeId)>>,
}

impl Graph {
    /// Validates ids, weights, self-loops, and duplicate pairs. Connectivity
    /// is checked by [`build_path_index`] and by the file loader, so that a
    /// deliberately disconnected graph can still be constructed in memory.
    pub fn new(nodes: Vec<Vec<f64>>, edges: Vec<Edge>, root: NodeId) -> Result<Self> {
        let n = nodes.len();
        if n == 0 {
            return Err(Error::invalid("graph needs at least one node"));
        }
        if root >= n {
            return Err(Error::UnknownNode(root));
        }
        let dim = nodes[0].len();
        if nodes.iter().any(|c| c.len() != dim) {
            return Err(Error::invalid("inconsistent node coordinate dimensions"));
        }
        let mut seen = HashMap::with_capacity(edges.len());
        for (id, e) in edges.iter().enumerate() {
            if e.u >= n {
                return Err(Error::UnknownNode(e.u));
            }
            if e.v >= n {
                return Err(Error::UnknownNode(e.v));
            }
            if e.u == e.v {
                return Err(Error::invalid(format!("self-loop at node {}", e.u)));
            }
            if !(e.w > 0.0 && e.w.is_finite()) {
                return Err(Error::invalid(format!(
                    "edge ({}, {}) has nonpositive or non-finite weight {}",
                    e.u, e.v, e.w
                )));
            }
            let key = (e.u.min(e.v), e.u.max(e.v));
            if seen.insert(key, id).is_some() {
                return Err(Error::invalid(format!(
                    "duplicate edge between nodes {} and {}",
                    key.0, key.1
                )));
            }
        }
        let mut adj = vec![Vec::new(); n];
        for (id, e) in edges.iter().enumerate() {
            adj[e.u].push((e.v, id));
            adj[e.v].push((e.u, id));
        }
        Ok(Graph {
            nodes,
            edges,
            root,
            meta: serde_json::Map::new(),
            adj,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, node: NodeId) -> &[(NodeId, EdgeId)] {
        &self.adj[node]
    }

    pub fn meta(&self) -> &serde_json::Map<String, serde_json::Value> {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut serde_json::Map<String, serde_json::Value> {
        &mut self.meta
    }

    /// Same graph re-rooted at `root`.
    pub fn with_root(&self, root: NodeId) -> Result<Graph> {
        if root >= self.n_nodes() {
            return Err(Error::UnknownNode(root));
        }
        let mut g = self.clone();
        g.root = root;
        Ok(g)
    }

    /// Errors with an unreachable node if the graph is disconnected.
    pub fn validate_connected(&self) -> Result<()> {
        let mut seen = vec![false; self.n_nodes()];
        let mut stack = vec![self.root];
        seen[self.root] = true;
        while let Some(u) = stack.pop() {
            for &(v, _) in &self.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(node) => Err(Error::Disconnected {
                root: self.root,
                node,
            }),
            None => Ok(()),
        }
    }

    /// True when the graph is a connected tree.
    pub fn is_tree(&self) -> bool {
        self.n_edges() + 1 == self.n_nodes() && self.validate_connected().is_ok()
    }
}

/// Shortest-path tree from the root: per-node predecessor, the ordered edge
/// list of the root-to-node path, and the distance from the root.
///
/// Carries a copy of the edge weights so that distance computations need only
/// the index. Immutable and freely shareable across threads.
#[derive(Debug, Clone)]
pub struct PathIndex {
    root: NodeId,
    parent: Vec<Option<(NodeId, EdgeId)>>,
    path_edges: Vec<Vec<EdgeId>>,
    dist_from_root: Vec<f64>,
    edge_weights: Vec<f64>,
}

impl PathIndex {
    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn n_nodes(&self) -> usize {
        self.path_edges.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edge_weights.len()
    }

    /// Predecessor node and connecting edge on the path from the root;
    /// `None` for the root itself.
    pub fn parent(&self, node: NodeId) -> Option<(NodeId, EdgeId)> {
        self.parent[node]
    }

    /// Ordered edge ids of the shortest path from the root to `node`.
    pub fn path_edges(&self, node: NodeId) -> &[EdgeId] {
        &self.path_edges[node]
    }

    pub fn dist_from_root(&self, node: NodeId) -> f64 {
        self.dist_from_root[node]
    }

    pub fn edge_weight(&self, edge: EdgeId) -> f64 {
        self.edge_weights[edge]
    }

    pub fn contains_node(&self, node: NodeId) -> bool {
        node < self.path_edges.len()
    }
}

/// Builds the single-source shortest-path tree rooted at the graph root.
///
/// Ties between equal-length paths are broken deterministically by preferring
/// the lexicographically smallest predecessor id, so two runs on the same
/// graph produce identical indices.
pub fn build_path_index(graph: &Graph) -> Result<PathIndex> {
    let n = graph.n_nodes();
    let root = graph.root();
    let (dist, parent) = dijkstra_with_parents(graph, root)?;

    // Fill path edge lists in order of increasing distance so every parent is
    // complete before its children.
    let mut order: Vec<NodeId> = (0..n).collect();
    order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
    let mut path_edges: Vec<Vec<EdgeId>> = vec![Vec::new(); n];
    for &v in &order {
        if let Some((u, e)) = parent[v] {
            let mut p = path_edges[u].clone();
            p.push(e);
            path_edges[v] = p;
        }
    }

    Ok(PathIndex {
        root,
        parent,
        path_edges,
        dist_from_root: dist,
        edge_weights: graph.edges().iter().map(|e| e.w).collect(),
    })
}

/// Edge ids `e` whose cone contains `node`, i.e. the edges on the
/// root-to-`node` shortest path.
pub fn gamma_membership(index: &PathIndex, node: NodeId) -> Result<&[EdgeId]> {
    if !index.contains_node(node) {
        return Err(Error::UnknownNode(node));
    }
    Ok(index.path_edges(node))
}

/// Symmetric matrix of graph distances restricted to a node subset.
#[derive(Debug, Clone)]
pub struct DistanceCache {
    ids: Vec<NodeId>,
    index_of: HashMap<NodeId, usize>,
    d: Vec<f64>,
}

impl DistanceCache {
    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Distance between two cached nodes, by node id.
    pub fn get(&self, a: NodeId, b: NodeId) -> Result<f64> {
        let i = *self.index_of.get(&a).ok_or(Error::UnknownNode(a))?;
        let j = *self.index_of.get(&b).ok_or(Error::UnknownNode(b))?;
        Ok(self.d[i * self.ids.len() + j])
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.index_of.contains_key(&node)
    }

    /// Distance by position within the cached subset.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.ids.len() + j]
    }
}

/// Graph distances between all pairs of `subset`, via one single-source
/// search per subset node. Sources run concurrently; the result is
/// symmetrized exactly by mirroring the row of the smaller node.
pub fn pairwise_distances(graph: &Graph, subset: &[NodeId]) -> Result<DistanceCache> {
    if subset.is_empty() {
        return Err(Error::invalid("pairwise_distances needs a nonempty subset"));
    }
    for &s in subset {
        if s >= graph.n_nodes() {
            return Err(Error::UnknownNode(s));
        }
    }
    graph.validate_connected()?;
    let k = subset.len();
    let rows: Vec<Vec<f64>> = subset
        .par_iter()
        .map(|&s| {
            let dist = dijkstra_distances(graph, s);
            subset.iter().map(|&t| dist[t]).collect()
        })
        .collect();
    let mut d = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            // mirror the earlier source's row for exact symmetry
            d[i * k + j] = if i <= j { rows[i][j] } else { rows[j][i] };
        }
    }
    let mut index_of = HashMap::with_capacity(k);
    for (i, &id) in subset.iter().enumerate() {
        if index_of.insert(id, i).is_some() {
            return Err(Error::invalid(format!("duplicate node {id} in subset")));
        }
    }
    Ok(DistanceCache {
        ids: subset.to_vec(),
        index_of,
        d,
    })
}

#[derive(Copy, Clone, PartialEq)]
struct HeapState {
    dist: f64,
    node: NodeId,
}

impl Eq for HeapState {}

impl Ord for HeapState {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (dist, node)
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapState {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

type SearchTree = (Vec<f64>, Vec<Option<(NodeId, EdgeId)>>);

fn dijkstra_with_parents(graph: &Graph, source: NodeId) -> Result<SearchTree> {
    let n = graph.n_nodes();
    let mut dist = vec![f64::INFINITY; n];
    let mut parent: Vec<Option<(NodeId, EdgeId)>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(HeapState {
        dist: 0.0,
        node: source,
    });
    while let Some(HeapState { dist: d, node: u }) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        for &(v, e) in graph.neighbors(u) {
            let nd = d + graph.edges()[e].w;
            if nd < dist[v] {
                dist[v] = nd;
                parent[v] = Some((u, e));
                heap.push(HeapState { dist: nd, node: v });
            } else if nd == dist[v] {
                // equal-length alternative: keep the smaller predecessor id
                if let Some((pu, _)) = parent[v] {
                    if u < pu {
                        parent[v] = Some((u, e));
                    }
                }
            }
        }
    }
    if let Some(node) = dist.iter().position(|d| !d.is_finite()) {
        return Err(Error::Disconnected {
            root: source,
            node,
        });
    }
    Ok((dist, parent))
}

fn dijkstra_distances(graph: &Graph, source: NodeId) -> Vec<f64> {
    let n = graph.n_nodes();
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(HeapState {
        dist: 0.0,
        node: source,
    });
    while let Some(HeapState { dist: d, node: u }) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        for &(v, e) in graph.neighbors(u) {
            let nd = d + graph.edges()[e].w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(HeapState { dist: nd, node: v });
            }
        }
    }
    dist
}
