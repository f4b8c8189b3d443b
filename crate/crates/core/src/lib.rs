//! Domain-decomposition least-squares Petrov-Galerkin model reduction.
//!
//! The crate provides the two benchmark full-order models, an algebraic
//! non-overlapping decomposition with port compatibility constraints, POD
//! subdomain bases, gappy-POD hyper-reduction with a greedy sample mesh, a
//! Gauss-Newton SQP solver for the constrained reduced problem, and a study
//! harness with error metrics, a cost model and CSV reporting.

pub mod error;
pub mod linalg;
pub mod mesh_fom;
pub mod decomp;
pub mod bases;
pub mod hyper;
pub mod sqp;
pub mod training;
pub mod harness;

pub use error::{Error, Result};
