//! Forward-backward-forward dynamics for mixed variational inequalities.
//!
//! Given a single-valued operator `T` and a proper convex lsc `h`, find `x̄`
//! with `⟨T x̄, u − x̄⟩ + h(u) − h(x̄) ≥ 0` for all `u`. The crate provides the
//! proximal maps, the continuous-time flow and its discretisations, and
//! sampling-based checks of the monotonicity and stability hypotheses.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod problem;
pub mod prox;
pub mod report;
pub mod solver;

pub use dynamics::{integrate, FlowSpec, Scheme, StopReason, System, TrajectoryRecord};
pub use error::{Error, Result};
pub use problem::{build_example, Example, MviProblem, OperatorSpec};
pub use prox::ProxSpec;
pub use solver::{iterate, IterSpec, IterationRecord, Method};
