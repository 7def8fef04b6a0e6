//! Fast transport distances for probability measures on a graph metric space.
//!
//! The headline distance generalizes the closed-form Sobolev transport to
//! arbitrary Orlicz growth functions: after a one-time shortest-path
//! preprocessing of the graph, every evaluation reduces to a single
//! univariate convex minimization over the aggregated per-edge net masses.
//! A reference Orlicz-Wasserstein solver (bisection over the scale around an
//! exact discrete optimal-transport core) is included for cross-validation
//! and benchmarking, together with the plain `p`-order distances on graphs
//! and trees.
//!
//! Typical flow: build or load a [`graph::Graph`], index it once with
//! [`graph::build_path_index`], then evaluate distances:
//!
//! ```
//! use sobolev_transport::graph::{build_path_index, Edge, Graph};
//! use sobolev_transport::measure::Measure;
//! use sobolev_transport::nfunc::NFunction;
//! use sobolev_transport::transport::{gst, DEFAULT_GST_TOL};
//!
//! let g = Graph::new(
//!     vec![vec![0.0], vec![1.0], vec![3.0]],
//!     vec![Edge { u: 0, v: 1, w: 1.0 }, Edge { u: 1, v: 2, w: 2.0 }],
//!     0,
//! )?;
//! let index = build_path_index(&g)?;
//! let d = gst(
//!     &index,
//!     &Measure::dirac(0),
//!     &Measure::dirac(2),
//!     &NFunction::ExpMinus,
//!     DEFAULT_GST_TOL,
//! )?;
//! assert!(d.value > 0.0);
//! # Ok::<(), sobolev_transport::error::Error>(())
//! ```

pub mod builder;
pub mod error;
pub mod graph;
pub mod io;
pub mod measure;
pub mod nfunc;
pub mod ow;
pub mod transport;

pub use error::{Error, Result};
pub use graph::{build_path_index, gamma_membership, pairwise_distances, Graph, PathIndex};
pub use measure::Measure;
pub use nfunc::NFunction;
pub use transport::{gram_matrix, gst, gst_batch, sobolev_transport, GstResult};
