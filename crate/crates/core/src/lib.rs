//! Toolkit for locating, classifying, and continuing high-codimension
//! catastrophe points of vector fields F: R^n x R^p -> R^n.
//!
//! A degenerate critical point of codimension r is characterised by a chain
//! of augmented Jacobian determinants B_1 = ... = B_r = 0 together with
//! non-degeneracy determinants G_{r,I} != 0. The crate provides:
//!
//! - [`expr`]: a hash-consed symbolic expression kernel with exact
//!   differentiation and rational/float evaluation,
//! - [`detkit`]: construction of the B/G determinant family,
//! - [`locate`]: damped-Newton solving of the augmented systems and
//!   codimension classification,
//! - [`trace`]: pseudo-arclength continuation of catastrophe sets with
//!   higher-codimension event detection,
//! - [`oracle`]: an independent brute-force critical-point counter used to
//!   validate the bifurcation geometry.

pub mod detkit;
pub mod expr;
pub mod locate;
pub mod oracle;
pub mod trace;

pub use expr::{Binding, EvalError, Expr, Func, ParseError, Scalar, Symbol, SymbolKind, VectorField};
