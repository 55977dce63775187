use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::averages::check_operators;
use super::maximal::{check_schedule, running_maximal, schedule_averages, AverageTrace, MaximalMode, Pass, Schedule};
use super::oracle::{oracle_limit, OracleConfig, OracleMode, OracleReport};
use crate::bundle::{Bundle, BundleFunction};
use crate::conjugate_exponent;
use crate::error::{Error, Result};
use crate::index::Window;
use crate::operators::{FiberedOperator, Requirement};
use crate::weights::{Subsequence, WeightKind, WeightSequence};

/// Slack allowed on maximal-inequality ratios.
pub const MAXIMAL_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Cesaro,
    Besicovich,
    Subsequence,
    Multiparameter,
    WeightedMultiparameter,
}

impl CheckKind {
    pub const ALL: [CheckKind; 5] =
        [Self::Cesaro, Self::Besicovich, Self::Subsequence, Self::Multiparameter, Self::WeightedMultiparameter];

    pub fn base_name(self) -> &'static str {
        match self {
            Self::Cesaro => "cesaro",
            Self::Besicovich => "besicovich",
            Self::Subsequence => "subsequence",
            Self::Multiparameter => "multi",
            Self::WeightedMultiparameter => "weighted-multi",
        }
    }

    pub fn is_multiparameter(self) -> bool {
        matches!(self, Self::Multiparameter | Self::WeightedMultiparameter)
    }

    /// Verdict name, e.g. `cesaro-p2` or `multi-d2-p1.5`.
    pub fn label(self, p: f64, d: usize) -> String {
        if self.is_multiparameter() {
            format!("{}-d{d}-p{p}", self.base_name())
        } else {
            format!("{}-p{p}", self.base_name())
        }
    }

    /// Splits a verdict-style name into kind, optional `d` and optional `p`.
    pub fn parse_label(s: &str) -> Result<(CheckKind, Option<usize>, Option<f64>)> {
        let bad = || Error::Unsupported(format!("unknown check {s:?}"));
        let kind = Self::ALL
            .iter()
            .copied()
            .filter(|k| s == k.base_name() || s.starts_with(&format!("{}-", k.base_name())))
            .max_by_key(|k| k.base_name().len())
            .ok_or_else(bad)?;
        let mut d = None;
        let mut p = None;
        let rest = &s[kind.base_name().len()..];
        for part in rest.split('-').filter(|x| !x.is_empty()) {
            if let Some(v) = part.strip_prefix('d').filter(|_| kind.is_multiparameter() && d.is_none()) {
                d = Some(v.parse().map_err(|_| bad())?);
            } else if let Some(v) = part.strip_prefix('p').filter(|_| p.is_none()) {
                p = Some(v.parse().map_err(|_| bad())?);
            } else {
                return Err(bad());
            }
        }
        Ok((kind, d, p))
    }
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.base_name())
    }
}

impl FromStr for CheckKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(Self::parse_label(s)?.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Refused,
}

/// Everything a theorem check needs. Single-parameter checks use `operators[0]`.
#[derive(Debug, Clone)]
pub struct CheckInputs<'a> {
    pub bundle: &'a Bundle,
    pub operators: &'a [FiberedOperator],
    pub f: &'a BundleFunction,
    pub weight: Option<&'a WeightSequence>,
    pub p: f64,
    /// Largest horizon on each axis; schedules are dyadic up to it.
    pub horizon_max: u64,
    /// Overrides the default oracle-tail threshold.
    pub tail_tolerance: Option<f64>,
    pub seed: u64,
    pub oracle: OracleConfig,
}

/// Machine-readable outcome of one theorem check.
#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub check: String,
    pub status: CheckStatus,
    pub pass: bool,
    pub max_ratio: Option<f64>,
    pub tail_dev: Option<f64>,
    pub tail_tolerance: Option<f64>,
    pub seed: u64,
    pub detail: String,
    #[serde(skip)]
    pub trace: Option<AverageTrace>,
    #[serde(skip)]
    pub oracle: Option<OracleReport>,
}

impl Verdict {
    fn refused(check: String, seed: u64, e: &Error) -> Self {
        Self {
            check,
            status: CheckStatus::Refused,
            pass: false,
            max_ratio: None,
            tail_dev: None,
            tail_tolerance: None,
            seed,
            detail: e.to_string(),
            trace: None,
            oracle: None,
        }
    }
}

fn arithmetic_subsequence(w: Option<&WeightSequence>, horizon: u64) -> Result<Subsequence> {
    let s = match w.map(WeightSequence::kind) {
        Some(WeightKind::Subsequence(s)) => s,
        _ => return Err(Error::Hypothesis("subsequence check needs a subsequence weight".into())),
    };
    let (step, offset) = s
        .as_arithmetic()
        .ok_or_else(|| Error::Unsupported("subsequence check needs an arithmetic j_k = a·k + b".into()))?;
    let needed = (horizon.saturating_sub(1) as usize).max(s.len());
    Subsequence::arithmetic(step, offset, needed)
}

/// Hypothesis gate, run before any averaging.
fn gate(kind: CheckKind, inp: &CheckInputs<'_>) -> Result<()> {
    conjugate_exponent(inp.p).ok_or(Error::Hypothesis(format!("p = {} but the maximal theorems need p > 1", inp.p)))?;
    if inp.horizon_max < 2 {
        return Err(Error::Shape("horizon_max must be at least 2".into()));
    }
    let ts = operators_for(kind, inp)?;
    let req = match kind {
        CheckKind::Cesaro => Requirement::LpContraction { p: inp.p },
        _ => Requirement::DunfordSchwartz,
    };
    check_operators(ts, inp.f, req)?;
    inp.f.check_shape(inp.bundle)?;
    match kind {
        CheckKind::Cesaro | CheckKind::Multiparameter => Ok(()),
        CheckKind::Besicovich | CheckKind::WeightedMultiparameter => {
            let w = inp.weight.ok_or_else(|| Error::Hypothesis(format!("{kind} check needs a weight")))?;
            if w.dim() != ts.len() {
                return Err(Error::Hypothesis(format!("weight has {} variables, check needs {}", w.dim(), ts.len())));
            }
            Ok(())
        }
        CheckKind::Subsequence => arithmetic_subsequence(inp.weight, inp.horizon_max).map(|_| ()),
    }
}

fn operators_for<'a>(kind: CheckKind, inp: &CheckInputs<'a>) -> Result<&'a [FiberedOperator]> {
    if inp.operators.is_empty() {
        return Err(Error::Hypothesis("no operators given".into()));
    }
    Ok(if kind.is_multiparameter() { inp.operators } else { &inp.operators[..1] })
}

fn schedules(kind: CheckKind, d: usize, h: u64) -> Result<Schedule> {
    match kind {
        CheckKind::Cesaro => Schedule::dyadic(h, true),
        CheckKind::Besicovich | CheckKind::Subsequence => Schedule::dyadic(h, false),
        CheckKind::Multiparameter | CheckKind::WeightedMultiparameter => Schedule::dyadic_grid(&vec![h; d]),
    }
}

/// Default oracle-tail threshold `20·b·d·‖f‖_∞ / (n*·g)`, where `n*` is the
/// first tail horizon and `g` the smallest relevant spectral separation.
fn default_tail_tolerance(kind: CheckKind, inp: &CheckInputs<'_>, oracle: &OracleReport, d: usize, n_star: u64) -> f64 {
    let sup = inp.f.values.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs()));
    let b = match kind {
        CheckKind::Besicovich | CheckKind::WeightedMultiparameter => inp.weight.map_or(1.0, |w| w.bound()),
        _ => 1.0,
    };
    let mut g = oracle.min_spectral_gap().clamp(1.0 / inp.oracle.max_period as f64, 1.0);
    if let Some(poly) = inp.weight.and_then(|w| w.almost_periodic_part()) {
        if matches!(kind, CheckKind::Besicovich | CheckKind::WeightedMultiparameter) {
            for t in poly.terms() {
                for &th in &t.freq {
                    if th != 0.0 {
                        let dist = th.min(1.0 - th);
                        g = g.min(2.0 * (std::f64::consts::PI * dist).sin());
                    }
                }
            }
        }
    }
    20.0 * b * d as f64 * sup / (n_star as f64 * g)
}

fn run(kind: CheckKind, inp: &CheckInputs<'_>) -> Result<Verdict> {
    let ts = operators_for(kind, inp)?;
    let d = ts.len();
    let h = inp.horizon_max;
    let schedule = schedules(kind, d, h)?;
    check_schedule(ts, &schedule, kind.is_multiparameter())?;
    let (mode, oracle) = match kind {
        CheckKind::Cesaro => (MaximalMode::Cesaro, oracle_limit(ts, inp.f, OracleMode::Cesaro, &inp.oracle)?),
        CheckKind::Besicovich => {
            let w = inp.weight.expect("gated");
            (MaximalMode::Weighted(w.clone()), oracle_limit(ts, inp.f, OracleMode::Weighted(w), &inp.oracle)?)
        }
        CheckKind::Subsequence => {
            // j_k = a·k + b: the averages tend to the Cesàro limit of T^a applied to T^b f.
            let s = arithmetic_subsequence(inp.weight, h)?;
            let (step, offset) = s.as_arithmetic().expect("arithmetic");
            let power = ts[0].matrix_power(inp.bundle, step)?;
            let shifted = ts[0].power_apply(inp.f, offset)?;
            (MaximalMode::Subsequence(s), oracle_limit(&[power], &shifted, OracleMode::Cesaro, &inp.oracle)?)
        }
        CheckKind::Multiparameter => {
            (MaximalMode::Multiparameter, oracle_limit(ts, inp.f, OracleMode::Multiparameter, &inp.oracle)?)
        }
        CheckKind::WeightedMultiparameter => {
            let w = inp.weight.expect("gated");
            let oracle = oracle_limit(ts, inp.f, OracleMode::WeightedMultiparameter(w), &inp.oracle)?;
            (MaximalMode::WeightedMultiparameter(w.clone()), oracle)
        }
    };
    let trace = running_maximal(ts, inp.bundle, inp.f, &schedule, &mode, inp.p)?;
    let pass = match &mode {
        MaximalMode::Cesaro => Pass::OneParameter { window: Window::ZeroBased, weight: None },
        MaximalMode::Weighted(w) => Pass::OneParameter { window: Window::SkipZero, weight: Some(w) },
        MaximalMode::Subsequence(s) => Pass::Subsequence(s),
        MaximalMode::Multiparameter => Pass::Grid(None),
        MaximalMode::WeightedMultiparameter(w) => match w.factors() {
            Some(fs) => Pass::Grid(Some(fs)),
            None => Pass::Enumerated(w),
        },
    };
    let signed = schedule_averages(ts, inp.f, &schedule, &pass)?;
    let n_star = h.div_ceil(2);
    let mut tail_dev = 0.0f64;
    for (n, avg) in trace.horizons.iter().zip(&signed) {
        if n.min_component() >= n_star {
            tail_dev = tail_dev.max(avg.max_abs_diff(&oracle.limit)?);
        }
    }
    let tol = inp.tail_tolerance.unwrap_or_else(|| default_tail_tolerance(kind, inp, &oracle, d, n_star));
    let max_ratio = trace.max_ratio();
    let mut problems = Vec::new();
    if !(max_ratio <= 1.0 + MAXIMAL_SLACK) {
        problems.push(format!("maximal ratio {max_ratio} exceeds 1"));
    }
    if !oracle.converged() {
        problems.push("oracle did not converge".to_string());
    }
    if let Some(a) = oracle.max_disagreement() {
        if !(a <= inp.oracle.agree_tol) {
            problems.push(format!("oracles disagree by {a}"));
        }
    }
    if !(tail_dev <= tol) {
        problems.push(format!("tail deviation {tail_dev} exceeds {tol}"));
    }
    let pass = problems.is_empty();
    Ok(Verdict {
        check: kind.label(inp.p, d),
        status: if pass { CheckStatus::Pass } else { CheckStatus::Fail },
        pass,
        max_ratio: Some(max_ratio),
        tail_dev: Some(tail_dev),
        tail_tolerance: Some(tol),
        seed: inp.seed,
        detail: problems.join("; "),
        trace: Some(trace),
        oracle: Some(oracle),
    })
}

/// Runs one named check: maximal-inequality ratios against the theorem's
/// constant, then the tail of the signed averages against the oracle limit.
/// Inputs that miss the theorem's hypotheses are refused before any averaging.
pub fn theorem_check(kind: CheckKind, inputs: &CheckInputs<'_>) -> Verdict {
    let d = if kind.is_multiparameter() { inputs.operators.len().max(1) } else { 1 };
    let label = kind.label(inputs.p, d);
    if let Err(e) = gate(kind, inputs) {
        return Verdict::refused(label, inputs.seed, &e);
    }
    match run(kind, inputs) {
        Ok(v) => v,
        Err(e) => Verdict::refused(label, inputs.seed, &e),
    }
}
