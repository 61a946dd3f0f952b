//! Sparse ReQU networks that reproduce tensor-product splines exactly.
//!
//! The pipeline fits a tensor-product spline to a target function
//! ([`quasi`]), assembles explicit network gadgets for B-spline banks,
//! products and constant multiplications ([`gadgets`]), and wires them into a
//! single network whose weights and shifts all lie in `[-1, 1]`
//! ([`compiler`]). [`evaluator`] and [`metrics`] measure how well the
//! resulting network and its derivatives approximate the target, and
//! [`experiment`] holds the sweep and training drivers used by the CLI.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod builder;
pub mod compiler;
pub mod error;
pub mod evaluator;
pub mod experiment;
pub mod gadgets;
pub mod metrics;
pub mod network;
pub mod quasi;
pub mod spline;

pub use compiler::{analytic_order, compile, compile_function, BudgetReport, CompileSpec, CompiledModel};
pub use error::{Error, Result};
pub use gadgets::Gadget;
pub use network::{Architecture, Audit, Network, SparseMatrix};
pub use quasi::{fit_coeffs, TargetFunction, TensorSplineCoeffs};
pub use spline::{BSplineId, KnotVector};
