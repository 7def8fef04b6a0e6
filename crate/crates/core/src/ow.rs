//! Reference Orlicz-Wasserstein solver and exact-transport baselines.
//!
//! The Orlicz-Wasserstein distance is the smallest scale `t > 0` admitting a
//! coupling `π` with `Σ π_ij·Φ(d_ij/t) ≤ 1`. The inner minimum over
//! couplings, `v(t) = min_π Σ π_ij·Φ(d_ij/t)`, is nonincreasing in `t`, so
//! the outer level is a bisection; each inner problem is an exact discrete
//! optimal-transport solve. This two-level structure is deliberately the
//! slow, correctness-first baseline that the univariate transport solver is
//! benchmarked against.
//!
//! The exact solver is a successive-shortest-paths min-cost flow on the
//! bipartite supply/demand graph, with node potentials keeping reduced costs
//! nonnegative so each augmentation is a plain Dijkstra.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::{Error, Result};
use crate::graph::{DistanceCache, Edge, Graph, PathIndex};
use crate::measure::Measure;
use crate::nfunc::NFunction;
use crate::transport::{edge_masses, ZERO_MASS_TOL};

/// Largest support size accepted by the exact solver.
pub const MAX_EXACT_SUPPORT: usize = 2000;

/// Marginal imbalance tolerated by [`CouplingProblem::new`].
pub const BALANCE_TOL: f64 = 1e-12;

/// Default relative bracket tolerance of the outer bisection.
pub const DEFAULT_OW_TOL: f64 = 1e-6;

const MAX_BISECT_ITERS: u32 = 300;

/// Balanced discrete transport instance: source masses, target masses, and a
/// nonnegative cost matrix.
#[derive(Debug, Clone)]
pub struct CouplingProblem {
    a: Vec<f64>,
    b: Vec<f64>,
    cost: Vec<f64>, // row-major n×m
}

impl CouplingProblem {
    pub fn new(a: Vec<f64>, b: Vec<f64>, cost: Vec<Vec<f64>>) -> Result<Self> {
        let (n, m) = (a.len(), b.len());
        if n == 0 || m == 0 {
            return Err(Error::invalid("empty marginal"));
        }
        if n > MAX_EXACT_SUPPORT || m > MAX_EXACT_SUPPORT {
            return Err(Error::TooLarge(format!(
                "support sizes {n}×{m} exceed the exact solver limit {MAX_EXACT_SUPPORT}"
            )));
        }
        if a.iter().chain(b.iter()).any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::invalid("negative or non-finite marginal mass"));
        }
        let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
        if (sa - 1.0).abs() > BALANCE_TOL || (sb - 1.0).abs() > BALANCE_TOL {
            return Err(Error::invalid(format!(
                "unbalanced masses: sums {sa} and {sb}, expected 1 within {BALANCE_TOL:e}"
            )));
        }
        if cost.len() != n || cost.iter().any(|r| r.len() != m) {
            return Err(Error::invalid("cost matrix shape mismatch"));
        }
        let mut flat = Vec::with_capacity(n * m);
        for row in &cost {
            for &c in row {
                if !c.is_finite() {
                    return Err(Error::invalid("non-finite cost entry"));
                }
                if c < 0.0 {
                    return Err(Error::invalid(format!("negative cost entry {c}")));
                }
                flat.push(c);
            }
        }
        Ok(CouplingProblem { a, b, cost: flat })
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }
}

/// Exact optimal transport value and an optimal coupling.
pub fn exact_ot(problem: &CouplingProblem) -> Result<(f64, Vec<Vec<f64>>)> {
    let (n, m) = (problem.n(), problem.m());
    let total = n + m; // sources 0..n, sinks n..n+m
    let cost = |i: usize, j: usize| problem.cost[i * m + j];

    // Marginals only balance to BALANCE_TOL and running subtractions shed
    // ulps, so residues below this count as exhausted; they stay far inside
    // the 1e-9 marginal feasibility contract.
    const DUST: f64 = 1e-11;

    let mut flow = vec![0.0f64; n * m];
    let mut potential = vec![0.0f64; total];
    let mut supply = problem.a.clone();
    let mut demand = problem.b.clone();
    let mut active_sources = supply.iter().filter(|&&s| s > DUST).count();

    let mut dist = vec![f64::INFINITY; total];
    let mut prev: Vec<Option<usize>> = vec![None; total];
    let mut done = vec![false; total];

    let max_augmentations = 50 * total + 1000;
    let mut augmentations = 0usize;
    while active_sources > 0 {
        augmentations += 1;
        if augmentations > max_augmentations {
            return Err(Error::NonConvergence(format!(
                "transport solver stalled after {max_augmentations} augmentations"
            )));
        }

        // Multi-source Dijkstra over the residual graph with reduced costs.
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        prev.iter_mut().for_each(|p| *p = None);
        done.iter_mut().for_each(|d| *d = false);
        let mut heap = BinaryHeap::new();
        for (i, &s) in supply.iter().enumerate() {
            if s > DUST {
                dist[i] = 0.0;
                heap.push(FlowState { dist: 0.0, node: i });
            }
        }
        while let Some(FlowState { dist: d, node: x }) = heap.pop() {
            if done[x] {
                continue;
            }
            done[x] = true;
            if x < n {
                for j in 0..m {
                    let y = n + j;
                    let rc = (cost(x, j) + potential[x] - potential[y]).max(0.0);
                    if d + rc < dist[y] {
                        dist[y] = d + rc;
                        prev[y] = Some(x);
                        heap.push(FlowState { dist: dist[y], node: y });
                    }
                }
            } else {
                let j = x - n;
                for i in 0..n {
                    if flow[i * m + j] > 0.0 {
                        let rc = (-cost(i, j) + potential[x] - potential[i]).max(0.0);
                        if d + rc < dist[i] {
                            dist[i] = d + rc;
                            prev[i] = Some(x);
                            heap.push(FlowState { dist: dist[i], node: i });
                        }
                    }
                }
            }
        }

        // Nearest sink that still needs mass.
        let mut target: Option<usize> = None;
        for (j, &need) in demand.iter().enumerate() {
            let reachable = need > DUST && dist[n + j].is_finite();
            if reachable && target.is_none_or(|t| dist[n + j] < dist[t]) {
                target = Some(n + j);
            }
        }
        let target = target.ok_or_else(|| {
            Error::NonConvergence("no augmenting path to any unmet sink".into())
        })?;
        let d_target = dist[target];
        for x in 0..total {
            potential[x] += dist[x].min(d_target);
        }

        // Trace the path back to its source, find the bottleneck, augment.
        let mut path = Vec::new();
        let mut x = target;
        while let Some(p) = prev[x] {
            path.push((p, x));
            x = p;
        }
        let source = x;
        let mut delta = supply[source].min(demand[target - n]);
        for &(from, to) in &path {
            if from >= n {
                // backward arc: sink `from` returning mass to source `to`
                delta = delta.min(flow[to * m + (from - n)]);
            }
        }
        for &(from, to) in &path {
            if from < n {
                flow[from * m + (to - n)] += delta;
            } else {
                let slot = &mut flow[to * m + (from - n)];
                *slot = if *slot <= delta { 0.0 } else { *slot - delta };
            }
        }
        supply[source] = if supply[source] - delta <= DUST {
            0.0
        } else {
            supply[source] - delta
        };
        demand[target - n] = if demand[target - n] - delta <= DUST {
            0.0
        } else {
            demand[target - n] - delta
        };
        if supply[source] == 0.0 {
            active_sources -= 1;
        }
    }

    let mut value = 0.0;
    let mut plan = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let f = flow[i * m + j];
            plan[i][j] = f;
            value += f * cost(i, j);
        }
    }
    Ok((value, plan))
}

#[derive(Copy, Clone, PartialEq)]
struct FlowState {
    dist: f64,
    node: usize,
}

impl Eq for FlowState {}

impl Ord for FlowState {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for FlowState {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Outcome of an Orlicz-Wasserstein evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct OwResult {
    /// The distance: smallest feasible scale `t`.
    pub value: f64,
    /// Inner transport value `min_π Σ π·Φ(d/t)` at the returned scale;
    /// at most `1 + 1e-8`.
    pub inner_value_at_t: f64,
    pub bisection_iters: u32,
}

/// Orlicz-Wasserstein distance by bisection over the scale, with an exact
/// transport solve per trial scale.
///
/// Arguments are ordered canonically before solving so the result is exactly
/// symmetric. The upper bracket `d_max/Φ⁻¹(1)` is feasible for every
/// coupling; bisection keeps the returned scale on the feasible side.
pub fn orlicz_wasserstein(
    dist: &DistanceCache,
    mu: &Measure,
    nu: &Measure,
    phi: &NFunction,
    tol: f64,
) -> Result<OwResult> {
    if phi.is_linear() {
        return Err(Error::invalid(
            "the linear limit has no Orlicz scale; use the first-order Wasserstein fast path",
        ));
    }
    if !(tol > 0.0 && tol <= 1e-3) {
        return Err(Error::invalid(format!("tolerance must be in (0, 1e-3], got {tol}")));
    }
    // canonical argument order for exact symmetry
    let swap = (nu.support(), nu.masses()) < (mu.support(), mu.masses());
    let (mu, nu) = if swap { (nu, mu) } else { (mu, nu) };

    let costs = sub_costs(dist, mu, nu)?;
    let n = mu.len();
    let m = nu.len();

    // Perfect zero-cost coupling (e.g. identical measures) short-circuits.
    let indicator: Vec<Vec<f64>> = costs
        .iter()
        .map(|row| row.iter().map(|&d| if d == 0.0 { 0.0 } else { 1.0 }).collect())
        .collect();
    let zero_problem =
        CouplingProblem::new(mu.masses().to_vec(), nu.masses().to_vec(), indicator)?;
    let (zero_cost, _) = exact_ot(&zero_problem)?;
    if zero_cost <= 1e-12 {
        return Ok(OwResult {
            value: 0.0,
            inner_value_at_t: 0.0,
            bisection_iters: 0,
        });
    }

    let inner = |t: f64| -> Result<f64> {
        let scaled: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..m).map(|j| phi.eval(costs[i][j] / t)).collect())
            .collect();
        let p = CouplingProblem::new(mu.masses().to_vec(), nu.masses().to_vec(), scaled)?;
        Ok(exact_ot(&p)?.0)
    };

    let d_max = costs
        .iter()
        .flatten()
        .fold(0.0f64, |acc, &d| acc.max(d));
    let d_min_pos = costs
        .iter()
        .flatten()
        .filter(|&&d| d > 0.0)
        .fold(f64::INFINITY, |acc, &d| acc.min(d));
    let phi_inv_one = phi.inverse(1.0)?;
    let hi0 = d_max / phi_inv_one;
    let min_mass_product = mu.min_positive_mass().unwrap_or(1.0) * nu.min_positive_mass().unwrap_or(1.0);
    let mut lo = (d_min_pos / phi.inverse(1.0 / min_mass_product)?).max(1e-12);
    if lo >= hi0 {
        lo = hi0 * 0.5;
    }
    let mut hi = hi0;
    let mut v_hi = inner(hi)?;
    let mut v_lo = inner(lo)?;
    let mut iters = 0u32;
    // shrink further if the heuristic lower bound is already feasible
    while v_lo <= 1.0 && lo > 1e-300 {
        hi = lo;
        v_hi = v_lo;
        lo *= 0.5;
        v_lo = inner(lo)?;
        iters += 1;
        if iters > MAX_BISECT_ITERS {
            return Err(Error::NonConvergence("lower bracket search stalled".into()));
        }
    }
    while (hi - lo) > tol * hi || v_hi < 1.0 - 1e-6 {
        iters += 1;
        if iters > MAX_BISECT_ITERS {
            return Err(Error::NonConvergence(format!(
                "bisection exceeded {MAX_BISECT_ITERS} iterations (bracket [{lo:e}, {hi:e}])"
            )));
        }
        let mid = 0.5 * (lo + hi);
        let v_mid = inner(mid)?;
        // inner values are nonincreasing in the scale
        debug_assert!(v_mid <= v_lo + 1e-9 && v_mid >= v_hi - 1e-9);
        if v_mid <= 1.0 {
            hi = mid;
            v_hi = v_mid;
        } else {
            lo = mid;
            v_lo = v_mid;
        }
    }
    Ok(OwResult {
        value: hi,
        inner_value_at_t: v_hi,
        bisection_iters: iters,
    })
}

/// `p`-order Wasserstein distance with graph-metric cost: the exact transport
/// value on `d^p`, taken to the `1/p`-th power.
pub fn wasserstein_p(dist: &DistanceCache, mu: &Measure, nu: &Measure, p: f64) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::invalid(format!("order p must satisfy p >= 1, got {p}")));
    }
    let swap = (nu.support(), nu.masses()) < (mu.support(), mu.masses());
    let (mu, nu) = if swap { (nu, mu) } else { (mu, nu) };
    let costs = sub_costs(dist, mu, nu)?;
    let powered: Vec<Vec<f64>> = costs
        .iter()
        .map(|row| row.iter().map(|&d| if p == 1.0 { d } else { d.powf(p) }).collect())
        .collect();
    let problem = CouplingProblem::new(mu.masses().to_vec(), nu.masses().to_vec(), powered)?;
    let (value, _) = exact_ot(&problem)?;
    Ok(if p == 1.0 { value } else { value.powf(1.0 / p) })
}

/// Closed-form first-order Wasserstein on a tree: `Σ_e w_e·|μ(γ_e) − ν(γ_e)|`.
pub fn tree_wasserstein(tree_index: &PathIndex, mu: &Measure, nu: &Measure) -> Result<f64> {
    if tree_index.n_edges() + 1 != tree_index.n_nodes() {
        return Err(Error::invalid(format!(
            "graph is not a tree: {} edges on {} nodes",
            tree_index.n_edges(),
            tree_index.n_nodes()
        )));
    }
    let masses = edge_masses(tree_index, mu, nu)?;
    if masses.max_abs() <= ZERO_MASS_TOL {
        return Ok(0.0);
    }
    Ok(masses
        .entries()
        .iter()
        .fold(0.0, |acc, &(e, h)| acc + tree_index.edge_weight(e) * h.abs()))
}

/// Random spanning tree of a connected graph: a minimum spanning tree under
/// seeded random edge keys. Kept edges preserve their original weights; the
/// root carries over.
pub fn random_spanning_tree(graph: &Graph, seed: u64) -> Result<Graph> {
    graph.validate_connected()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keyed: Vec<(f64, usize)> = graph
        .edges()
        .iter()
        .enumerate()
        .map(|(id, _)| (rng.gen::<f64>(), id))
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let n = graph.n_nodes();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let r = find(parent, parent[x]);
            parent[x] = r;
        }
        parent[x]
    }
    let mut kept: Vec<Edge> = Vec::with_capacity(n - 1);
    for (_, id) in keyed {
        let e = graph.edges()[id];
        let (ru, rv) = (find(&mut parent, e.u), find(&mut parent, e.v));
        if ru != rv {
            parent[ru.max(rv)] = ru.min(rv);
            kept.push(e);
            if kept.len() == n - 1 {
                break;
            }
        }
    }
    let mut tree = Graph::new(graph.nodes().to_vec(), kept, graph.root())?;
    *tree.meta_mut() = graph.meta().clone();
    tree.meta_mut().insert("spanning_tree_seed".into(), json!(seed));
    Ok(tree)
}

fn sub_costs(dist: &DistanceCache, mu: &Measure, nu: &Measure) -> Result<Vec<Vec<f64>>> {
    let mut costs = Vec::with_capacity(mu.len());
    for &x in mu.support() {
        let mut row = Vec::with_capacity(nu.len());
        for &z in nu.support() {
            row.push(dist.get(x, z)?);
        }
        costs.push(row);
    }
    Ok(costs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_path_index, pairwise_distances};

    fn line_graph(weights: &[f64]) -> Graph {
        let n = weights.len() + 1;
        let nodes = (0..n).map(|i| vec![i as f64]).collect();
        let edges = weights
            .iter()
            .enumerate()
            .map(|(i, &w)| Edge { u: i, v: i + 1, w })
            .collect();
        Graph::new(nodes, edges, 0).unwrap()
    }

    #[test]
    fn exact_ot_singletons_and_identity() {
        let p = CouplingProblem::new(vec![1.0], vec![1.0], vec![vec![2.5]]).unwrap();
        let (v, plan) = exact_ot(&p).unwrap();
        assert_eq!(v, 2.5);
        assert_eq!(plan, vec![vec![1.0]]);

        let p = CouplingProblem::new(
            vec![0.5, 0.5],
            vec![0.5, 0.5],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        )
        .unwrap();
        let (v, _) = exact_ot(&p).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn exact_ot_rejects_bad_instances() {
        assert!(CouplingProblem::new(vec![0.6], vec![1.0], vec![vec![1.0]]).is_err());
        assert!(CouplingProblem::new(vec![1.0], vec![1.0], vec![vec![-1.0]]).is_err());
    }

    #[test]
    fn plan_marginals_match() {
        let a = vec![0.2, 0.3, 0.5];
        let b = vec![0.4, 0.1, 0.25, 0.25];
        let cost: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..4).map(|j| ((i * 7 + j * 3) % 5) as f64 + 0.5).collect())
            .collect();
        let p = CouplingProblem::new(a.clone(), b.clone(), cost).unwrap();
        let (_, plan) = exact_ot(&p).unwrap();
        for i in 0..3 {
            let row: f64 = plan[i].iter().sum();
            assert!((row - a[i]).abs() < 1e-12);
        }
        for j in 0..4 {
            let col: f64 = plan.iter().map(|r| r[j]).sum();
            assert!((col - b[j]).abs() < 1e-12);
        }
        assert!(plan.iter().flatten().all(|&f| f >= -1e-12));
    }

    #[test]
    fn ow_dirac_pair_scales_by_phi_inverse() {
        let g = line_graph(&[2.0]);
        let dist = pairwise_distances(&g, &[0, 1]).unwrap();
        let phi = NFunction::ExpMinus;
        let r = orlicz_wasserstein(&dist, &Measure::dirac(0), &Measure::dirac(1), &phi, 1e-9)
            .unwrap();
        let expect = 2.0 / phi.inverse(1.0).unwrap();
        assert!((r.value - expect).abs() <= 1e-6 * expect, "{} vs {expect}", r.value);
        assert!((r.value - 2.0 / 1.1462).abs() < 1e-3);
        assert!(r.inner_value_at_t <= 1.0 + 1e-8);
    }

    #[test]
    fn ow_identical_measures_zero() {
        let g = line_graph(&[1.0, 1.0]);
        let dist = pairwise_distances(&g, &[0, 1, 2]).unwrap();
        let mu = Measure::new(vec![0, 2], vec![0.5, 0.5]).unwrap();
        let r = orlicz_wasserstein(&dist, &mu, &mu, &NFunction::ExpMinus, 1e-8).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.bisection_iters, 0);
    }

    #[test]
    fn ow_rejects_linear() {
        let g = line_graph(&[1.0]);
        let dist = pairwise_distances(&g, &[0, 1]).unwrap();
        assert!(orlicz_wasserstein(
            &dist,
            &Measure::dirac(0),
            &Measure::dirac(1),
            &NFunction::Linear,
            1e-8
        )
        .is_err());
    }

    #[test]
    fn tree_wasserstein_cases() {
        let g = line_graph(&[1.0]);
        let idx = build_path_index(&g).unwrap();
        assert_eq!(
            tree_wasserstein(&idx, &Measure::dirac(0), &Measure::dirac(1)).unwrap(),
            1.0
        );
        let mu = Measure::new(vec![0, 1], vec![0.5, 0.5]).unwrap();
        assert_eq!(tree_wasserstein(&idx, &mu, &mu).unwrap(), 0.0);
    }

    #[test]
    fn tree_wasserstein_rejects_cycles() {
        let g = Graph::new(
            vec![vec![0.0], vec![1.0], vec![2.0]],
            vec![
                Edge { u: 0, v: 1, w: 1.0 },
                Edge { u: 1, v: 2, w: 1.0 },
                Edge { u: 2, v: 0, w: 1.0 },
            ],
            0,
        )
        .unwrap();
        let idx = build_path_index(&g).unwrap();
        assert!(tree_wasserstein(&idx, &Measure::dirac(0), &Measure::dirac(1)).is_err());
    }

    #[test]
    fn spanning_tree_of_cycle_keeps_two_edges() {
        let g = Graph::new(
            vec![vec![0.0], vec![1.0], vec![2.0]],
            vec![
                Edge { u: 0, v: 1, w: 1.0 },
                Edge { u: 1, v: 2, w: 2.0 },
                Edge { u: 2, v: 0, w: 3.0 },
            ],
            0,
        )
        .unwrap();
        let t = random_spanning_tree(&g, 9).unwrap();
        assert_eq!(t.n_edges(), 2);
        t.validate_connected().unwrap();
        // determinism
        let t2 = random_spanning_tree(&g, 9).unwrap();
        let pairs = |g: &Graph| g.edges().iter().map(|e| (e.u, e.v)).collect::<Vec<_>>();
        assert_eq!(pairs(&t), pairs(&t2));
    }

    #[test]
    fn spanning_tree_of_tree_is_identity() {
        let g = line_graph(&[1.0, 2.0, 3.0]);
        let t = random_spanning_tree(&g, 1234).unwrap();
        assert_eq!(t.n_edges(), 3);
        let w = |g: &Graph| {
            let mut ws: Vec<(usize, usize, u64)> = g
                .edges()
                .iter()
                .map(|e| (e.u, e.v, e.w.to_bits()))
                .collect();
            ws.sort();
            ws
        };
        assert_eq!(w(&g), w(&t));
    }

    #[test]
    fn ow_is_exactly_symmetric() {
        let g = line_graph(&[0.7, 1.3, 0.4]);
        let dist = pairwise_distances(&g, &[0, 1, 2, 3]).unwrap();
        let mu = Measure::new(vec![0, 2], vec![0.3, 0.7]).unwrap();
        let nu = Measure::new(vec![1, 3], vec![0.6, 0.4]).unwrap();
        let phi = NFunction::exp_power(2.0).unwrap();
        let a = orlicz_wasserstein(&dist, &mu, &nu, &phi, 1e-8).unwrap();
        let b = orlicz_wasserstein(&dist, &nu, &mu, &phi, 1e-8).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }
}
