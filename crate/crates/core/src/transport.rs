//! Graph transport distances through root-cone mass aggregation.
//!
//! For measures supported on nodes, the net mass crossing edge `e` is
//! `h̄(e) = μ(γ_e) − ν(γ_e)`, where `γ_e` collects the nodes whose
//! root path traverses `e`. Every distance here is a function of the
//! sparse vector `h̄`:
//!
//! * the generalized transport distance minimizes
//!   `F(k) = (1/k)·(1 + Σ_e w_e·Φ(k·|h̄(e)|))` over `k > 0`, a single
//!   univariate convex problem solved by a safeguarded Newton root-find
//!   on its stationarity condition;
//! * the `p`-order transport distance is the closed form
//!   `(Σ_e w_e·|h̄(e)|^p)^(1/p)`, which the generalized distance reduces
//!   to when `Φ(t) = (p−1)^(p−1)/p^p · t^p`.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{EdgeId, PathIndex};
use crate::measure::Measure;
use crate::nfunc::{NFunction, OrliczFunction};

/// Below this, the aggregated edge-mass vector counts as identically zero and
/// the distance is 0 without touching the solver.
pub const ZERO_MASS_TOL: f64 = 1e-15;

/// Bracket-expansion cap for the univariate solver; hitting it signals a
/// malformed (sublinear-growth) objective.
const MAX_BRACKET_K: f64 = 1e9;

const MAX_SOLVER_ITERS: u32 = 200;

/// Default relative tolerance of the univariate solve.
pub const DEFAULT_GST_TOL: f64 = 1e-10;

/// Net mass per edge restricted to the active set: the edges lying on some
/// root-to-support path of either measure. Entries are sorted by edge id, so
/// summation order is reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMassVector {
    entries: Vec<(EdgeId, f64)>,
}

impl EdgeMassVector {
    /// Entries as (edge id, h̄) pairs in ascending edge-id order. Edges in
    /// the active set keep their entry even when the masses cancel exactly.
    pub fn entries(&self) -> &[(EdgeId, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, &(_, h)| m.max(h.abs()))
    }

    /// Assembles a vector from explicit per-edge values (ascending edge id
    /// enforced). Lets callers evaluate the objective over any edge set, e.g.
    /// the full edge set instead of the active one.
    pub fn from_entries(mut entries: Vec<(EdgeId, f64)>) -> Result<Self> {
        entries.sort_by_key(|&(e, _)| e);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::invalid(format!("duplicate edge id {}", w[0].0)));
            }
        }
        Ok(EdgeMassVector { entries })
    }
}

/// Aggregates `μ(γ_e)` and `ν(γ_e)` over the active edge set and subtracts
/// them once per edge, so swapping the arguments negates `h̄(e)` exactly.
pub fn edge_masses(index: &PathIndex, mu: &Measure, nu: &Measure) -> Result<EdgeMassVector> {
    let mut acc: BTreeMap<EdgeId, (f64, f64)> = BTreeMap::new();
    for (node, mass) in mu.iter() {
        if !index.contains_node(node) {
            return Err(Error::UnknownNode(node));
        }
        for &e in index.path_edges(node) {
            acc.entry(e).or_insert((0.0, 0.0)).0 += mass;
        }
    }
    for (node, mass) in nu.iter() {
        if !index.contains_node(node) {
            return Err(Error::UnknownNode(node));
        }
        for &e in index.path_edges(node) {
            acc.entry(e).or_insert((0.0, 0.0)).1 += mass;
        }
    }
    Ok(EdgeMassVector {
        entries: acc.into_iter().map(|(e, (a, b))| (e, a - b)).collect(),
    })
}

/// Which route produced a [`GstResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    ClosedForm,
    Newton,
    Bisection,
}

/// Outcome of a generalized transport evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct GstResult {
    /// Distance value, in summed edge-length units.
    pub value: f64,
    /// Minimizing scalar of the univariate objective; `None` on closed-form
    /// and zero paths.
    pub k_star: Option<f64>,
    pub iterations: u32,
    pub solver: SolverKind,
}

/// Generalized transport distance between two node-supported measures.
///
/// Dispatches to the closed form for the scaled power family and the linear
/// limit; otherwise runs the univariate solve at relative tolerance `tol`
/// (at most 1e-3; see [`DEFAULT_GST_TOL`]).
pub fn gst(
    index: &PathIndex,
    mu: &Measure,
    nu: &Measure,
    phi: &NFunction,
    tol: f64,
) -> Result<GstResult> {
    let masses = edge_masses(index, mu, nu)?;
    gst_from_edge_masses(index, &masses, phi, tol)
}

/// Generalized transport distance from a prebuilt edge-mass vector.
pub fn gst_from_edge_masses(
    index: &PathIndex,
    masses: &EdgeMassVector,
    phi: &NFunction,
    tol: f64,
) -> Result<GstResult> {
    check_tol(tol)?;
    if masses.max_abs() <= ZERO_MASS_TOL {
        return Ok(GstResult {
            value: 0.0,
            k_star: None,
            iterations: 0,
            solver: SolverKind::ClosedForm,
        });
    }
    match *phi {
        NFunction::PowerScaled { p } => Ok(GstResult {
            value: power_sum(index, masses, p),
            k_star: None,
            iterations: 0,
            solver: SolverKind::ClosedForm,
        }),
        NFunction::Linear => Ok(GstResult {
            value: first_order_sum(index, masses),
            k_star: None,
            iterations: 0,
            solver: SolverKind::ClosedForm,
        }),
        _ => solve_univariate(index, masses, phi, tol),
    }
}

/// Generalized transport with a caller-supplied convex curve; no closed-form
/// dispatch, always the univariate solve.
pub fn gst_with_phi<O: OrliczFunction>(
    index: &PathIndex,
    mu: &Measure,
    nu: &Measure,
    phi: &O,
    tol: f64,
) -> Result<GstResult> {
    check_tol(tol)?;
    let masses = edge_masses(index, mu, nu)?;
    if masses.max_abs() <= ZERO_MASS_TOL {
        return Ok(GstResult {
            value: 0.0,
            k_star: None,
            iterations: 0,
            solver: SolverKind::ClosedForm,
        });
    }
    solve_univariate(index, &masses, phi, tol)
}

/// Closed-form `p`-order transport distance, `p ≥ 1`. `p = 1` is the linear
/// limit fast path: a plain weighted sum of |h̄|.
pub fn sobolev_transport(index: &PathIndex, mu: &Measure, nu: &Measure, p: f64) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::invalid(format!("order p must satisfy p >= 1, got {p}")));
    }
    let masses = edge_masses(index, mu, nu)?;
    if p == 1.0 {
        Ok(first_order_sum(index, &masses))
    } else {
        Ok(power_sum(index, &masses, p))
    }
}

/// Evaluates a batch of pairs against one shared index. Results keep the
/// input order and match sequential calls bit for bit regardless of the
/// worker count; per-pair failures land in their own slots.
pub fn gst_batch(
    index: &PathIndex,
    pairs: &[(Measure, Measure)],
    phi: &NFunction,
    tol: f64,
) -> Vec<Result<GstResult>> {
    pairs
        .par_iter()
        .map(|(mu, nu)| gst(index, mu, nu, phi, tol))
        .collect()
}

/// A failed Gram entry: the pair indices and what went wrong.
pub type PairFailure = (usize, usize, Error);

/// Symmetric zero-diagonal matrix of pairwise distances over a measure set,
/// one evaluation per unordered pair, pairs running in parallel.
///
/// Failed pairs get NaN in both mirrored slots and a `(i, j, error)` record;
/// the matrix itself is always returned. Output is independent of the worker
/// count: pair results land in preassigned slots.
pub fn gram_matrix<F>(measures: &[Measure], eval: F) -> (Vec<Vec<f64>>, Vec<PairFailure>)
where
    F: Fn(&Measure, &Measure) -> Result<f64> + Sync,
{
    let n = measures.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let results: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| eval(&measures[i], &measures[j]))
        .collect();
    let mut matrix = vec![vec![0.0; n]; n];
    let mut failures = Vec::new();
    for (&(i, j), result) in pairs.iter().zip(results) {
        match result {
            Ok(d) => {
                matrix[i][j] = d;
                matrix[j][i] = d;
            }
            Err(e) => {
                matrix[i][j] = f64::NAN;
                matrix[j][i] = f64::NAN;
                failures.push((i, j, e));
            }
        }
    }
    (matrix, failures)
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0 && tol <= 1e-3) {
        return Err(Error::invalid(format!("tolerance must be in (0, 1e-3], got {tol}")));
    }
    Ok(())
}

fn first_order_sum(index: &PathIndex, masses: &EdgeMassVector) -> f64 {
    masses
        .entries()
        .iter()
        .fold(0.0, |acc, &(e, h)| acc + index.edge_weight(e) * h.abs())
}

fn power_sum(index: &PathIndex, masses: &EdgeMassVector, p: f64) -> f64 {
    masses
        .entries()
        .iter()
        .fold(0.0, |acc, &(e, h)| {
            acc + index.edge_weight(e) * h.abs().powf(p)
        })
        .powf(1.0 / p)
}

/// Minimizes `F(k) = (1/k)(1 + S(k))` with `S(k) = Σ w_e·Φ(k|h̄_e|)`.
///
/// The stationarity function `G(k) = k·S′(k) − S(k) − 1` is nondecreasing
/// (its derivative is `k·S″(k) ≥ 0` by convexity) with `G(0⁺) = −1`, so the
/// minimizer is the unique sign change of `G`: bracket it by doubling, then
/// polish with Newton falling back to bisection.
fn solve_univariate<O: OrliczFunction + ?Sized>(
    index: &PathIndex,
    masses: &EdgeMassVector,
    phi: &O,
    tol: f64,
) -> Result<GstResult> {
    let terms: Vec<(f64, f64)> = masses
        .entries()
        .iter()
        .map(|&(e, h)| (index.edge_weight(e), h.abs()))
        .collect();

    // G(k) summed per edge as w·(t·Φ′(t) − Φ(t)) with t = k·|h̄|; each term is
    // nonnegative, so exponent saturation can push G to +inf but never NaN.
    // G′(k) = k·Σ w·h̄²·Φ″(k|h̄|) shares the per-edge transcendentals.
    let g_and_slope = |k: f64| -> (f64, f64) {
        let mut g = 0.0;
        let mut curv = 0.0;
        for &(w, h) in &terms {
            let t = k * h;
            let (phi_t, dphi_t, d2phi_t) = phi.eval_all(t);
            g += w * (t * dphi_t - phi_t);
            curv += w * h * h * d2phi_t;
        }
        (g - 1.0, k * curv)
    };
    let stationarity = |k: f64| g_and_slope(k).0;
    let objective = |k: f64| -> f64 {
        let mut s = 0.0;
        for &(w, h) in &terms {
            s += w * phi.eval(k * h);
        }
        (1.0 + s) / k
    };

    // Bracket the root of G.
    let mut iterations = 0u32;
    let mut lo;
    let mut hi;
    let g1 = stationarity(1.0);
    if g1 > 0.0 {
        hi = 1.0;
        lo = 0.5;
        while stationarity(lo) > 0.0 {
            hi = lo;
            lo *= 0.5;
            iterations += 1;
            if lo < 1e-300 {
                return Err(Error::NonConvergence(
                    "stationarity stays positive down to k ~ 1e-300".into(),
                ));
            }
        }
    } else if g1 < 0.0 {
        lo = 1.0;
        hi = 2.0;
        while stationarity(hi) <= 0.0 {
            lo = hi;
            hi *= 2.0;
            iterations += 1;
            if hi > MAX_BRACKET_K {
                return Err(Error::NonConvergence(format!(
                    "bracket expansion exceeded k = {MAX_BRACKET_K:e} \
                     (final bracket [{lo:e}, {hi:e}]; Φ may not grow superlinearly)"
                )));
            }
        }
    } else {
        return Ok(GstResult {
            value: objective(1.0),
            k_star: Some(1.0),
            iterations: 0,
            solver: SolverKind::Newton,
        });
    }

    let mut k = 0.5 * (lo + hi);
    let mut used_newton = false;
    loop {
        debug_assert!(
            stationarity(lo) <= 0.0 && stationarity(hi) >= 0.0,
            "bracket no longer straddles the stationarity root"
        );
        let (g, d) = g_and_slope(k);
        if g > 0.0 {
            hi = k;
        } else {
            lo = k;
        }
        if g.abs() <= tol && (hi - lo) <= tol * k {
            return Ok(GstResult {
                value: objective(k),
                k_star: Some(k),
                iterations,
                solver: if used_newton {
                    SolverKind::Newton
                } else {
                    SolverKind::Bisection
                },
            });
        }
        iterations += 1;
        if iterations > MAX_SOLVER_ITERS {
            return Err(Error::NonConvergence(format!(
                "no convergence after {MAX_SOLVER_ITERS} iterations \
                 (final bracket [{lo:e}, {hi:e}], G = {g:e})"
            )));
        }
        let newton = k - g / d;
        if d > 0.0 && newton.is_finite() && newton > lo && newton < hi {
            k = newton;
            used_newton = true;
        } else {
            k = 0.5 * (lo + hi);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_path_index, Edge, Graph};

    fn two_node_index(w: f64) -> PathIndex {
        let g = Graph::new(
            vec![vec![0.0], vec![1.0]],
            vec![Edge { u: 0, v: 1, w }],
            0,
        )
        .unwrap();
        build_path_index(&g).unwrap()
    }

    #[test]
    fn identical_measures_zero_everywhere() {
        let idx = two_node_index(1.0);
        let mu = Measure::new(vec![0, 1], vec![0.4, 0.6]).unwrap();
        let masses = edge_masses(&idx, &mu, &mu).unwrap();
        assert_eq!(masses.len(), 1, "active set stays nonempty");
        assert_eq!(masses.entries()[0].1, 0.0);
        for phi in [
            NFunction::power_scaled(2.0).unwrap(),
            NFunction::ExpMinus,
            NFunction::Linear,
        ] {
            let r = gst(&idx, &mu, &mu, &phi, 1e-10).unwrap();
            assert_eq!(r.value, 0.0);
            assert_eq!(r.k_star, None);
        }
    }

    #[test]
    fn dirac_pair_on_single_edge() {
        let idx = two_node_index(1.0);
        let mu = Measure::dirac(0);
        let nu = Measure::dirac(1);
        // γ_e = {node 1}: μ contributes nothing, ν contributes 1
        let masses = edge_masses(&idx, &mu, &nu).unwrap();
        assert_eq!(masses.entries(), &[(0, -1.0)]);

        // Φ = (1/4)t²: inf_k (1/k)(1 + k²/4) = 1 at k* = 2, equals S₂ = 1
        let r = gst(&idx, &mu, &nu, &NFunction::power_scaled(2.0).unwrap(), 1e-10).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
        assert_eq!(r.solver, SolverKind::ClosedForm);
        let s2 = sobolev_transport(&idx, &mu, &nu, 2.0).unwrap();
        assert!((s2 - 1.0).abs() < 1e-12);

        // Φ = e^t − t − 1: inf_k (e^k − k)/k = e − 1 at k* = 1
        let r = gst(&idx, &mu, &nu, &NFunction::ExpMinus, 1e-12).unwrap();
        assert!((r.value - (1f64.exp() - 1.0)).abs() < 1e-10, "value {}", r.value);
        assert!((r.k_star.unwrap() - 1.0).abs() < 1e-6);

        // the solver route recovers the closed-form minimizer k* = 2
        let r = gst_with_phi(&idx, &mu, &nu, &NFunction::power_scaled(2.0).unwrap(), 1e-12)
            .unwrap();
        assert!((r.value - 1.0).abs() < 1e-10);
        assert!((r.k_star.unwrap() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn exp_minus_matches_grid_scan_oracle() {
        let idx = two_node_index(1.0);
        let r = gst(
            &idx,
            &Measure::dirac(0),
            &Measure::dirac(1),
            &NFunction::ExpMinus,
            1e-12,
        )
        .unwrap();
        let mut best = f64::INFINITY;
        let mut k = 1e-3f64;
        while k <= 10.0 {
            best = best.min((k.exp() - k) / k);
            k += 1e-4;
        }
        assert!((r.value - best).abs() < 1e-7, "{} vs {}", r.value, best);
    }

    #[test]
    fn any_order_on_unit_edge_diracs() {
        let idx = two_node_index(1.0);
        for p in [1.0, 1.5, 2.0, 3.0, 7.0] {
            let s = sobolev_transport(&idx, &Measure::dirac(0), &Measure::dirac(1), p).unwrap();
            assert!((s - 1.0).abs() < 1e-12);
            let zero = sobolev_transport(&idx, &Measure::dirac(0), &Measure::dirac(0), p).unwrap();
            assert_eq!(zero, 0.0);
        }
        assert!(sobolev_transport(&idx, &Measure::dirac(0), &Measure::dirac(1), 0.5).is_err());
    }

    #[test]
    fn unscaled_power_matches_its_calculus_closed_form() {
        // F(k) = 1/k + k^{p−1}·A minimizes to p·(p−1)^{(1−p)/p}·A^{1/p}
        let idx = two_node_index(0.7);
        let mu = Measure::new(vec![0, 1], vec![0.3, 0.7]).unwrap();
        let nu = Measure::dirac(0);
        for p in [1.5, 2.0, 3.0] {
            let phi = NFunction::power(p).unwrap();
            let r = gst(&idx, &mu, &nu, &phi, 1e-12).unwrap();
            let a: f64 = 0.7 * 0.7f64.powf(p);
            let expect = p * (p - 1.0).powf((1.0 - p) / p) * a.powf(1.0 / p);
            assert!(
                (r.value - expect).abs() <= 1e-9 * expect,
                "p={p}: {} vs {expect}",
                r.value
            );
        }
    }

    #[test]
    fn swapped_arguments_give_bitwise_equal_values() {
        let idx = two_node_index(1.3);
        let mu = Measure::new(vec![0, 1], vec![0.25, 0.75]).unwrap();
        let nu = Measure::new(vec![0, 1], vec![0.6, 0.4]).unwrap();
        for phi in [NFunction::ExpMinus, NFunction::exp_power(2.0).unwrap()] {
            let a = gst(&idx, &mu, &nu, &phi, 1e-10).unwrap();
            let b = gst(&idx, &nu, &mu, &phi, 1e-10).unwrap();
            assert_eq!(a.value.to_bits(), b.value.to_bits());
        }
    }

    #[test]
    fn batch_matches_sequential_and_isolates_errors() {
        let idx = two_node_index(1.0);
        let mu = Measure::dirac(0);
        let nu = Measure::dirac(1);
        let bad = Measure::dirac(9); // unknown node
        let pairs = vec![
            (mu.clone(), nu.clone()),
            (mu.clone(), mu.clone()),
            (mu.clone(), bad),
        ];
        let out = gst_batch(&idx, &pairs, &NFunction::ExpMinus, 1e-10);
        let single = gst(&idx, &mu, &nu, &NFunction::ExpMinus, 1e-10).unwrap();
        assert_eq!(out[0].as_ref().unwrap().value.to_bits(), single.value.to_bits());
        assert_eq!(out[1].as_ref().unwrap().value, 0.0);
        assert!(matches!(out[2], Err(Error::UnknownNode(9))));
    }

    #[test]
    fn rejects_bad_tolerance() {
        let idx = two_node_index(1.0);
        let err = gst(&idx, &Measure::dirac(0), &Measure::dirac(1), &NFunction::ExpMinus, 0.1);
        assert!(err.is_err());
    }

    #[test]
    fn linear_growth_phi_without_enough_weight_reports_bracket_cap() {
        // Σ w·(slope−1) < 1 keeps G negative forever: the solver must report
        // the bracket cap rather than loop.
        let idx = two_node_index(0.5);
        let r = gst(
            &idx,
            &Measure::dirac(0),
            &Measure::dirac(1),
            &NFunction::huber(2.0).unwrap(),
            1e-10,
        );
        assert!(matches!(r, Err(Error::NonConvergence(_))));
    }

    #[test]
    fn huber_with_enough_weight_converges_and_matches_grid() {
        let idx = two_node_index(4.0);
        let phi = NFunction::huber(2.0).unwrap();
        let r = gst(&idx, &Measure::dirac(0), &Measure::dirac(1), &phi, 1e-12).unwrap();
        let mut best = f64::INFINITY;
        let mut k = 1e-3;
        while k <= 20.0 {
            best = best.min((1.0 + 4.0 * phi.eval(k)) / k);
            k += 1e-4;
        }
        assert!((r.value - best).abs() < 1e-6, "{} vs {best}", r.value);
    }
}
