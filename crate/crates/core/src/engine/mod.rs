//! Ergodic averages, their maximal functions, limit oracles and theorem checks.
//!
//! Every average is accumulated as a running sum in increasing exponent order
//! and divided by the horizon once, at the end. All work happens fiber by
//! fiber through [`FiberedOperator::apply`](crate::FiberedOperator::apply), so
//! an average computed on the whole bundle equals the same average computed
//! on each one-point restriction, bit for bit.

mod averages;
mod check;
mod maximal;
mod oracle;

pub use averages::{
    cesaro_average, multiparameter_average, subsequence_average, weighted_average,
    weighted_multiparameter_average, ENUMERATION_BUDGET,
};
pub use check::{theorem_check, CheckInputs, CheckKind, CheckStatus, Verdict, MAXIMAL_SLACK};
pub use maximal::{running_maximal, trace_header, AverageTrace, MaximalMode, Schedule};
pub use oracle::{
    oracle_limit, spectral_gap, FiberOracle, OracleConfig, OracleMethod, OracleMode, OracleReport,
};

pub use crate::index::{MultiIndex, Window};
