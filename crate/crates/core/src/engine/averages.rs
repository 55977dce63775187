use crate::bundle::BundleFunction;
use crate::error::{Error, Result};
use crate::index::{MultiIndex, Window};
use crate::operators::{FiberedOperator, Requirement};
use crate::weights::{Subsequence, WeightSequence};

/// Largest box volume a non-separable multiparameter weight may enumerate.
pub const ENUMERATION_BUDGET: u128 = 10_000_000;

pub(crate) fn check_operators(ts: &[FiberedOperator], f: &BundleFunction, req: Requirement) -> Result<()> {
    let first = ts.first().ok_or_else(|| Error::Shape("no operators given".into()))?;
    for (i, t) in ts.iter().enumerate() {
        if t.dims() != first.dims() {
            return Err(Error::Shape(format!("operator {i} is shaped differently from operator 0")));
        }
        t.require(req).map_err(|e| match e {
            Error::Hypothesis(msg) => Error::Hypothesis(format!("operator {i}: {msg}")),
            other => other,
        })?;
    }
    first.check_function(f)
}

/// `Σ_{k ∈ [start, end)} w(k) T^k f`, undivided.
pub(crate) fn power_sum(
    t: &FiberedOperator,
    f: &BundleFunction,
    start: u64,
    end: u64,
    mut weight: impl FnMut(u64) -> Result<f64>,
) -> Result<BundleFunction> {
    let mut sum = f.map(|_| 0.0);
    if start >= end {
        return Ok(sum);
    }
    let mut cur = t.power_apply(f, start)?;
    let mut scratch = Vec::new();
    for k in start..end {
        let w = weight(k)?;
        sum.axpy(w, &cur);
        if k + 1 < end {
            t.apply_in_place(&mut cur, &mut scratch);
        }
    }
    Ok(sum)
}

pub(crate) fn divide(sum: BundleFunction, n: f64) -> BundleFunction {
    sum.map(|x| x / n)
}

/// `s_n(f) = (1/n) Σ_k T^k f` over the window (`ZeroBased` is the classical mean).
pub fn cesaro_average(t: &FiberedOperator, f: &BundleFunction, n: u64, window: Window) -> Result<BundleFunction> {
    if n == 0 {
        return Err(Error::Shape("horizon n must be >= 1".into()));
    }
    check_operators(std::slice::from_ref(t), f, Requirement::Markov)?;
    let (start, end) = window.bounds(n);
    Ok(divide(power_sum(t, f, start, end, |_| Ok(1.0))?, n as f64))
}

/// `Ã_N(f) = (1/N) Σ_k α(k) T^k f`; with `Window::SkipZero` the sum runs over
/// `k = 1..N−1`, so `N = 1` gives 0.
pub fn weighted_average(
    t: &FiberedOperator,
    f: &BundleFunction,
    alpha: &WeightSequence,
    n: u64,
    window: Window,
) -> Result<BundleFunction> {
    if n == 0 {
        return Err(Error::Shape("horizon N must be >= 1".into()));
    }
    if alpha.dim() != 1 {
        return Err(Error::Shape(format!("weight has {} variables, expected 1", alpha.dim())));
    }
    check_operators(std::slice::from_ref(t), f, Requirement::DunfordSchwartz)?;
    let (start, end) = window.bounds(n);
    Ok(divide(power_sum(t, f, start, end, |k| alpha.eval1(k))?, n as f64))
}

/// `(1/N) Σ_{k=1}^{N−1} T^{j_k} f`.
pub fn subsequence_average(
    t: &FiberedOperator,
    f: &BundleFunction,
    s: &Subsequence,
    n: u64,
) -> Result<BundleFunction> {
    if n == 0 {
        return Err(Error::Shape("horizon N must be >= 1".into()));
    }
    check_operators(std::slice::from_ref(t), f, Requirement::DunfordSchwartz)?;
    let needed = (n - 1) as usize;
    if s.len() < needed {
        return Err(Error::InvalidSubsequence(format!(
            "{} terms stored, {needed} needed for N = {n}",
            s.len()
        )));
    }
    let mut sum = f.map(|_| 0.0);
    let mut cur = f.clone();
    let mut power = 0u64;
    let mut scratch = Vec::new();
    for &j in &s.terms()[..needed] {
        while power < j {
            t.apply_in_place(&mut cur, &mut scratch);
            power += 1;
        }
        sum.axpy(1.0, &cur);
    }
    Ok(divide(sum, n as f64))
}

/// Nested prefix accumulation `Σ_{k_1} α_1(k_1) T_1^{k_1} ⋯ Σ_{k_d} α_d(k_d) T_d^{k_d} f`
/// over the inclusive box, undivided. `T_d` acts first.
pub(crate) fn separable_sum(
    ts: &[FiberedOperator],
    f: &BundleFunction,
    factors: Option<&[WeightSequence]>,
    n: &MultiIndex,
) -> Result<BundleFunction> {
    let mut g = f.clone();
    for i in (0..ts.len()).rev() {
        let w = factors.map(|fs| &fs[i]);
        g = power_sum(&ts[i], &g, 1, n.components()[i] + 1, |k| match w {
            Some(w) => w.eval1(k),
            None => Ok(1.0),
        })?;
    }
    Ok(g)
}

fn check_multi(ts: &[FiberedOperator], f: &BundleFunction, n: &MultiIndex) -> Result<()> {
    if ts.len() != n.dim() {
        return Err(Error::Shape(format!("{} operators for a {}-index", ts.len(), n.dim())));
    }
    check_operators(ts, f, Requirement::DunfordSchwartz)
}

/// `S_𝐧(f) = (1/|𝐧|) Σ_{𝐤=𝟏}^{𝐧} T_1^{k_1} ⋯ T_d^{k_d} f`, using `Σ n_i`
/// operator applications.
pub fn multiparameter_average(ts: &[FiberedOperator], f: &BundleFunction, n: &MultiIndex) -> Result<BundleFunction> {
    check_multi(ts, f, n)?;
    Ok(divide(separable_sum(ts, f, None, n)?, n.volume() as f64))
}

/// Full enumeration `Σ_{𝐤=𝟏}^{𝐧} α(𝐤) 𝐓^𝐤 f`, undivided.
pub(crate) fn enumerated_sum(
    ts: &[FiberedOperator],
    f: &BundleFunction,
    alpha: &WeightSequence,
    n: &MultiIndex,
) -> Result<BundleFunction> {
    let size = n.volume();
    if size > ENUMERATION_BUDGET {
        return Err(Error::Budget { size, budget: ENUMERATION_BUDGET });
    }
    let mut sum = f.map(|_| 0.0);
    let mut k = vec![0u64; n.dim()];
    let mut scratch = Vec::new();
    enumerate_level(ts, f, alpha, n, n.dim() - 1, &mut k, &mut sum, &mut scratch)?;
    Ok(sum)
}

#[allow(clippy::too_many_arguments)]
fn enumerate_level(
    ts: &[FiberedOperator],
    v: &BundleFunction,
    alpha: &WeightSequence,
    n: &MultiIndex,
    level: usize,
    k: &mut Vec<u64>,
    sum: &mut BundleFunction,
    scratch: &mut Vec<f64>,
) -> Result<()> {
    let mut cur = v.clone();
    for ki in 1..=n.components()[level] {
        ts[level].apply_in_place(&mut cur, scratch);
        k[level] = ki;
        if level == 0 {
            let w = alpha.eval(k)?;
            sum.axpy(w, &cur);
        } else {
            enumerate_level(ts, &cur, alpha, n, level - 1, k, sum, scratch)?;
        }
    }
    Ok(())
}

/// `A_𝐧(f) = (1/|𝐧|) Σ_{𝐤=𝟏}^{𝐧} α(𝐤) 𝐓^𝐤 f`. Separable weights take the
/// nested fast path; others enumerate the box, up to [`ENUMERATION_BUDGET`] terms.
pub fn weighted_multiparameter_average(
    ts: &[FiberedOperator],
    f: &BundleFunction,
    alpha: &WeightSequence,
    n: &MultiIndex,
) -> Result<BundleFunction> {
    check_multi(ts, f, n)?;
    if alpha.dim() != n.dim() {
        return Err(Error::Shape(format!("weight has {} variables, index has {}", alpha.dim(), n.dim())));
    }
    let sum = match alpha.factors() {
        Some(factors) => separable_sum(ts, f, Some(&factors), n)?,
        None => enumerated_sum(ts, f, alpha, n)?,
    };
    Ok(divide(sum, n.volume() as f64))
}
