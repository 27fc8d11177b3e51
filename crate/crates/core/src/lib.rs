//! Low-rank tensor solver for tracking-type optimal control problems
//! constrained by fractional elliptic operators with separable variable
//! coefficients on the unit square and cube.
//!
//! Every operator is kept in an eigenbasis-factored Kronecker form and every
//! grid vector in the canonical (CP) format, so one matrix-vector product costs
//! `O(d R S n^2)` instead of `O(n^{2d})`.
//!
//! Module map:
//!
//! * [`tensor_formats`]: canonical and Tucker tensors, HOSVD, RHOSVD,
//!   multigrid Tucker and rank truncation.
//! * [`discretization`]: 1D Sturm-Liouville assembly, the tridiagonal
//!   eigensolver and the orthonormal sine transform.
//! * [`operator_algebra`]: spectral functions, coefficient tensors, sinc
//!   quadrature and the factored operator apply.
//! * [`preconditioner`]: anisotropic-Laplacian and direct-inverse
//!   preconditioners, condition estimates.
//! * [`pcg`]: the rank-truncated preconditioned conjugate gradient solver.
//! * [`control`]: design functions, the Lagrange equation for the control,
//!   the state recovery and the dense oracle.
//! * [`invariants`]: randomized dense-oracle checks of the algebra.
//! * [`cli`]: the `fraclop` command line front end.

pub mod cli;
pub mod control;
pub mod discretization;
mod error;
pub mod invariants;
pub mod linalg;
pub mod operator_algebra;
pub mod pcg;
pub mod preconditioner;
pub mod tensor_formats;

pub use error::{Error, Result};
