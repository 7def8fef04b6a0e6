//! Probability measures supported on graph nodes.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::graph::NodeId;

/// Tolerated drift of the total mass from 1 at construction time.
pub const MASS_TOL: f64 = 1e-12;

/// Sparse probability measure: nonnegative masses on distinct graph nodes
/// summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    support: Vec<NodeId>,
    mass: Vec<f64>,
}

impl Measure {
    /// Validates support uniqueness, nonnegativity, and unit total mass
    /// (within `MASS_TOL`).
    pub fn new(support: Vec<NodeId>, mass: Vec<f64>) -> Result<Self> {
        if support.len() != mass.len() {
            return Err(Error::invalid(format!(
                "support/mass length mismatch: {} vs {}",
                support.len(),
                mass.len()
            )));
        }
        if support.is_empty() {
            return Err(Error::invalid("measure needs at least one support node"));
        }
        let mut seen = HashSet::with_capacity(support.len());
        for &s in &support {
            if !seen.insert(s) {
                return Err(Error::invalid(format!("duplicate support node {s}")));
            }
        }
        let mut total = 0.0;
        for &m in &mass {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(Error::invalid(format!("negative or non-finite mass {m}")));
            }
            total += m;
        }
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::invalid(format!(
                "masses sum to {total}, expected 1 within {MASS_TOL:e}"
            )));
        }
        Ok(Measure { support, mass })
    }

    /// Builds a measure by rescaling arbitrary nonnegative weights to total 1.
    pub fn normalized(support: Vec<NodeId>, weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::invalid("negative or non-finite weight"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::invalid("total weight is zero"));
        }
        Self::new(support, weights.iter().map(|w| w / total).collect())
    }

    /// Point mass at a single node.
    pub fn dirac(node: NodeId) -> Self {
        Measure {
            support: vec![node],
            mass: vec![1.0],
        }
    }

    pub fn support(&self) -> &[NodeId] {
        &self.support
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.support.iter().copied().zip(self.mass.iter().copied())
    }

    /// Smallest strictly positive mass, if any.
    pub fn min_positive_mass(&self) -> Option<f64> {
        self.mass
            .iter()
            .copied()
            .filter(|&m| m > 0.0)
            .fold(None, |acc, m| Some(acc.map_or(m, |a: f64| a.min(m))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_inputs() {
        assert!(Measure::new(vec![0, 1], vec![0.5, 0.5]).is_ok());
        assert!(Measure::new(vec![0, 0], vec![0.5, 0.5]).is_err());
        assert!(Measure::new(vec![0, 1], vec![0.7, 0.5]).is_err());
        assert!(Measure::new(vec![0, 1], vec![-0.1, 1.1]).is_err());
        assert!(Measure::new(vec![], vec![]).is_err());
    }

    #[test]
    fn normalizes() {
        let m = Measure::normalized(vec![3, 5], vec![1.0, 3.0]).unwrap();
        assert_eq!(m.masses(), &[0.25, 0.75]);
        assert!(Measure::normalized(vec![0], vec![0.0]).is_err());
    }
}
