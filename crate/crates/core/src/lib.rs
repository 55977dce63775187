//! Finite models of Banach–Kantorovich lattices `L_p(∇̂, μ̂)` and the weighted
//! ergodic averages that act on them.
//!
//! A [`Bundle`] is a finite base space `Ω` with masses `λ`, plus one finite
//! atomic measure space per base point. Elements of the lattice are
//! [`BundleFunction`]s, and the lattice norm takes values in [`BaseScalar`]s
//! (one real per base point) rather than in `ℝ`.
//!
//! Operators ([`FiberedOperator`]) act fiber by fiber. The [`engine`] module
//! computes Cesàro, weighted, subsequence and multiparameter averages, their
//! maximal functions, and independent oracles for their limits.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bundle;
pub mod engine;
pub mod error;
pub mod index;
pub mod operators;
pub mod rng;
pub mod weights;

pub use bundle::{
    bundle_inf, bundle_measure, bundle_sup, integral, lp_norm, order_convergence_report,
    rho_metric, BaseScalar, BaseSpace, Bundle, BundleFunction, Fiber, FiberIdempotent,
    OrderConvergenceReport,
};
pub use engine::{
    AverageTrace, CheckInputs, CheckKind, CheckStatus, MaximalMode, OracleConfig, OracleMode, OracleReport,
    Schedule, Verdict,
};
pub use error::{Error, Result};
pub use index::{MultiIndex, Window};
pub use operators::{
    conditional_expectation, generate, Certificate, FiberMatrix, FiberedOperator, OperatorKind,
    Requirement, SubalgebraPartition, ValidationMode, ValidationReport, validate,
};
pub use weights::{
    besicovich_deviation, product_weights, subsequence_to_weights, DeviationReport, Subsequence,
    TrigPolynomial, TrigTerm, WeightSequence, WeightSpec,
};

/// Absolute slack allowed on the row-sum and weighted-column certificates.
pub const CERTIFICATE_TOL: f64 = 1e-12;

/// Conjugate exponent `q = p / (p - 1)`; `None` unless `p > 1`.
pub fn conjugate_exponent(p: f64) -> Option<f64> {
    if p.is_nan() || p <= 1.0 {
        None
    } else if p.is_infinite() {
        Some(1.0)
    } else {
        Some(p / (p - 1.0))
    }
}
