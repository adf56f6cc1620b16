//! Manifold proximal gradient methods for `min f(X) + h(X)` over the Stiefel manifold.
//!
//! - [`manifold`]: points, tangent vectors, retractions, subspace distance.
//! - [`prox`]: nonsmooth terms, their proximal maps and generalized Jacobians.
//! - [`ssn`]: the tangent-space subproblem and its semi-smooth Newton solver.
//! - [`solvers`]: ManPG, ManPG-Ada and the Riemannian subgradient method.
//! - [`soc`]: the SOC splitting baseline.
//! - [`problems`]: sparse PCA, compressed modes, MCP sparse PCA.
//! - [`matio`]: dense matrix CSV import and export.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod manifold;
pub mod matio;
pub mod problems;
pub mod prox;
pub mod soc;
pub mod solvers;
pub mod ssn;

pub use error::{Error, Result};
pub use manifold::{retract, subspace_distance, Mat, RetractionKind, StiefelPoint, TangentVector};
pub use problems::{CmProblem, McpSpcaProblem, ProblemOracle, SpcaProblem};
pub use prox::{McpForm, NonsmoothTerm};
