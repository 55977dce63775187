use serde::Serialize;

use super::averages::{check_operators, divide, enumerated_sum};
use crate::bundle::{lp_norm, BaseScalar, Bundle, BundleFunction};
use crate::conjugate_exponent;
use crate::error::{Error, Result};
use crate::index::{MultiIndex, Window};
use crate::operators::{FiberedOperator, Requirement};
use crate::weights::{Subsequence, WeightSequence};

/// Horizon schedule: a product grid of per-axis horizon lists, enumerated
/// lexicographically with the last axis fastest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Schedule {
    axes: Vec<Vec<u64>>,
}

impl Schedule {
    pub fn new(axes: Vec<Vec<u64>>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::Shape("schedule has no axes".into()));
        }
        for (i, a) in axes.iter().enumerate() {
            if a.is_empty() || a[0] == 0 || a.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Shape(format!("schedule axis {i} is not a nonempty increasing list of positive horizons")));
            }
        }
        Ok(Self { axes })
    }

    /// `{1?, 2, 4, …}` up to and including `max` (which is appended if not a power of two).
    pub fn dyadic(max: u64, include_one: bool) -> Result<Self> {
        Self::new(vec![dyadic_axis(max, include_one)?])
    }

    /// Dyadic axes `{1, 2, 4, …, max_i}` on each coordinate.
    pub fn dyadic_grid(maxes: &[u64]) -> Result<Self> {
        Self::new(maxes.iter().map(|&m| dyadic_axis(m, true)).collect::<Result<_>>()?)
    }

    pub fn list(horizons: Vec<u64>) -> Result<Self> {
        Self::new(vec![horizons])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Vec<u64>] {
        &self.axes
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Largest horizon on each axis.
    pub fn max(&self) -> MultiIndex {
        MultiIndex::new(self.axes.iter().map(|a| *a.last().expect("nonempty")).collect()).expect("validated")
    }

    pub fn horizons(&self) -> Vec<MultiIndex> {
        let mut out = Vec::with_capacity(self.len());
        let mut idx = vec![0usize; self.dim()];
        loop {
            out.push(
                MultiIndex::new(idx.iter().zip(&self.axes).map(|(&j, a)| a[j]).collect()).expect("validated"),
            );
            let mut i = self.dim();
            loop {
                if i == 0 {
                    return out;
                }
                i -= 1;
                idx[i] += 1;
                if idx[i] < self.axes[i].len() {
                    break;
                }
                idx[i] = 0;
            }
        }
    }
}

fn dyadic_axis(max: u64, include_one: bool) -> Result<Vec<u64>> {
    if max == 0 || (max == 1 && !include_one) {
        return Err(Error::Shape(format!("dyadic schedule up to {max} is empty")));
    }
    let mut axis = Vec::new();
    let mut n = if include_one { 1 } else { 2 };
    while n < max {
        axis.push(n);
        n = n.saturating_mul(2);
    }
    axis.push(max);
    Ok(axis)
}

/// Which average the maximal function is taken over.
#[derive(Debug, Clone)]
pub enum MaximalMode {
    /// `sup s_n(|f|)`, bound `q`.
    Cesaro,
    /// `sup |Ã_N(|f|)|`, bound `q·b`.
    Weighted(WeightSequence),
    /// `sup (1/N) Σ_{k=1}^{N−1} T^{j_k}|f|`, bound `q`.
    Subsequence(Subsequence),
    /// `sup S_𝐧(|f|)`, bound `q^d`.
    Multiparameter,
    /// `sup |A_𝐧(f)|`, bound `b·q^d`.
    WeightedMultiparameter(WeightSequence),
}

impl MaximalMode {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Cesaro => "cesaro",
            Self::Weighted(_) => "weighted",
            Self::Subsequence(_) => "subsequence",
            Self::Multiparameter => "multiparameter",
            Self::WeightedMultiparameter(_) => "weighted_multiparameter",
        }
    }
}

/// A maximal-function trace along a schedule.
#[derive(Debug, Clone, Serialize)]
pub struct AverageTrace {
    pub mode: String,
    pub p: f64,
    /// Theorem constant: `q`, `q·b`, `q^d` or `b·q^d`.
    pub constant: f64,
    pub horizons: Vec<MultiIndex>,
    #[serde(skip)]
    pub averages: Vec<BundleFunction>,
    pub average_norms: Vec<BaseScalar>,
    pub running_max_norms: Vec<BaseScalar>,
    pub running_max: BundleFunction,
    pub f_norm: BaseScalar,
    /// `constant · ‖f‖_p` per base point.
    pub bound: BaseScalar,
    /// `‖sup‖_p / bound` per base point at the final horizon.
    pub ratio: Vec<f64>,
}

fn ratio_of(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

impl AverageTrace {
    pub fn max_ratio(&self) -> f64 {
        self.ratio.iter().copied().fold(0.0, f64::max)
    }

    pub fn csv_header(&self) -> Vec<String> {
        trace_header(self.horizons[0].dim())
    }

    /// One record per horizon and base point; the ratio column is the running ratio.
    pub fn csv_records(&self) -> Vec<Vec<String>> {
        let mut out = Vec::with_capacity(self.horizons.len() * self.bound.len());
        for (h, n) in self.horizons.iter().enumerate() {
            for omega in 0..self.bound.len() {
                let mut row: Vec<String> = n.components().iter().map(u64::to_string).collect();
                let rm = self.running_max_norms[h].values[omega];
                let bound = self.bound.values[omega];
                row.push(omega.to_string());
                row.push(self.average_norms[h].values[omega].to_string());
                row.push(rm.to_string());
                row.push(bound.to_string());
                row.push(ratio_of(rm, bound).to_string());
                out.push(row);
            }
        }
        out
    }
}

/// How a schedule pass forms its averages.
pub(crate) enum Pass<'a> {
    OneParameter { window: Window, weight: Option<&'a WeightSequence> },
    Subsequence(&'a Subsequence),
    /// Separable box sums; `None` means unit weights.
    Grid(Option<Vec<WeightSequence>>),
    Enumerated(&'a WeightSequence),
}

/// Undivided one-parameter sums at each checkpoint, in one pass over `k`.
fn prefix_snapshots(
    t: &FiberedOperator,
    g: &BundleFunction,
    window: Window,
    checkpoints: &[u64],
    weight: Option<&WeightSequence>,
) -> Result<Vec<BundleFunction>> {
    let start = window.bounds(checkpoints[0]).0;
    let mut sum = g.map(|_| 0.0);
    let mut cur: Option<BundleFunction> = None;
    let mut power = start;
    let mut k = start;
    let mut scratch = Vec::new();
    let mut out = Vec::with_capacity(checkpoints.len());
    for &n in checkpoints {
        let end = window.bounds(n).1;
        while k < end {
            let c = match cur.as_mut() {
                Some(c) => {
                    while power < k {
                        t.apply_in_place(c, &mut scratch);
                        power += 1;
                    }
                    c
                }
                None => cur.insert(t.power_apply(g, start)?),
            };
            let w = match weight {
                Some(w) => w.eval1(k)?,
                None => 1.0,
            };
            sum.axpy(w, c);
            k += 1;
        }
        out.push(sum.clone());
    }
    Ok(out)
}

fn subsequence_snapshots(
    t: &FiberedOperator,
    g: &BundleFunction,
    s: &Subsequence,
    checkpoints: &[u64],
) -> Result<Vec<BundleFunction>> {
    let needed = (checkpoints[checkpoints.len() - 1] - 1) as usize;
    if s.len() < needed {
        return Err(Error::InvalidSubsequence(format!("{} terms stored, {needed} needed", s.len())));
    }
    let mut sum = g.map(|_| 0.0);
    let mut cur = g.clone();
    let mut power = 0u64;
    let mut used = 0usize;
    let mut scratch = Vec::new();
    let mut out = Vec::with_capacity(checkpoints.len());
    for &n in checkpoints {
        while used < (n - 1) as usize {
            let j = s.terms()[used];
            while power < j {
                t.apply_in_place(&mut cur, &mut scratch);
                power += 1;
            }
            sum.axpy(1.0, &cur);
            used += 1;
        }
        out.push(sum.clone());
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn grid_level(
    ts: &[FiberedOperator],
    g: &BundleFunction,
    axes: &[Vec<u64>],
    factors: Option<&[WeightSequence]>,
    level: usize,
    flat: usize,
    strides: &[usize],
    out: &mut [Option<BundleFunction>],
) -> Result<()> {
    let snaps = prefix_snapshots(&ts[level], g, Window::Inclusive, &axes[level], factors.map(|f| &f[level]))?;
    for (j, s) in snaps.into_iter().enumerate() {
        let idx = flat + j * strides[level];
        if level == 0 {
            out[idx] = Some(s);
        } else {
            grid_level(ts, &s, axes, factors, level - 1, idx, strides, out)?;
        }
    }
    Ok(())
}

/// Averages (divided) at every schedule horizon, in schedule order.
pub(crate) fn schedule_averages(
    ts: &[FiberedOperator],
    g: &BundleFunction,
    schedule: &Schedule,
    pass: &Pass<'_>,
) -> Result<Vec<BundleFunction>> {
    let horizons = schedule.horizons();
    let sums = match pass {
        Pass::OneParameter { window, weight } => prefix_snapshots(&ts[0], g, *window, &schedule.axes[0], *weight)?,
        Pass::Subsequence(s) => subsequence_snapshots(&ts[0], g, s, &schedule.axes[0])?,
        Pass::Grid(factors) => {
            let d = schedule.dim();
            let mut strides = vec![1usize; d];
            for i in (0..d.saturating_sub(1)).rev() {
                strides[i] = strides[i + 1] * schedule.axes[i + 1].len();
            }
            let mut out = vec![None; schedule.len()];
            grid_level(ts, g, &schedule.axes, factors.as_deref(), d - 1, 0, &strides, &mut out)?;
            out.into_iter().map(|s| s.expect("every grid cell is filled")).collect()
        }
        Pass::Enumerated(w) => {
            horizons.iter().map(|n| enumerated_sum(ts, g, w, n)).collect::<Result<Vec<_>>>()?
        }
    };
    Ok(sums.into_iter().zip(&horizons).map(|(s, n)| divide(s, n.volume() as f64)).collect())
}

pub(crate) fn check_schedule(ts: &[FiberedOperator], schedule: &Schedule, multi: bool) -> Result<()> {
    let want = if multi { ts.len() } else { 1 };
    if schedule.dim() != want {
        return Err(Error::Shape(format!("schedule has {} axes, expected {want}", schedule.dim())));
    }
    Ok(())
}

/// Running maximal function of the chosen averages along `schedule`, with
/// per-base-point `L_p` norms and the theorem's right-hand side.
pub fn running_maximal(
    ts: &[FiberedOperator],
    b: &Bundle,
    f: &BundleFunction,
    schedule: &Schedule,
    mode: &MaximalMode,
    p: f64,
) -> Result<AverageTrace> {
    let q = conjugate_exponent(p).ok_or(Error::Exponent(p))?;
    f.check_shape(b)?;
    let multi = matches!(mode, MaximalMode::Multiparameter | MaximalMode::WeightedMultiparameter(_));
    let ts = if multi { ts } else { ts.get(..1).unwrap_or(ts) };
    let req = match mode {
        MaximalMode::Cesaro => Requirement::LpContraction { p },
        _ => Requirement::DunfordSchwartz,
    };
    check_operators(ts, f, req)?;
    check_schedule(ts, schedule, multi)?;
    let d = ts.len() as i32;
    let abs_f = f.abs();
    let (input, pass, constant, take_abs) = match mode {
        MaximalMode::Cesaro => (&abs_f, Pass::OneParameter { window: Window::ZeroBased, weight: None }, q, false),
        MaximalMode::Weighted(w) => {
            if w.dim() != 1 {
                return Err(Error::Shape(format!("weight has {} variables, expected 1", w.dim())));
            }
            (&abs_f, Pass::OneParameter { window: Window::SkipZero, weight: Some(w) }, q * w.bound(), true)
        }
        MaximalMode::Subsequence(s) => (&abs_f, Pass::Subsequence(s), q, false),
        MaximalMode::Multiparameter => (&abs_f, Pass::Grid(None), q.powi(d), false),
        MaximalMode::WeightedMultiparameter(w) => {
            if w.dim() != ts.len() {
                return Err(Error::Shape(format!("weight has {} variables, expected {d}", w.dim())));
            }
            let pass = match w.factors() {
                Some(fs) => Pass::Grid(Some(fs)),
                None => Pass::Enumerated(w),
            };
            (f, pass, w.bound() * q.powi(d), true)
        }
    };
    let mut averages = schedule_averages(ts, input, schedule, &pass)?;
    if take_abs {
        averages = averages.into_iter().map(|a| a.abs()).collect();
    }
    let f_norm = lp_norm(b, f, p)?;
    let bound = BaseScalar::new(f_norm.values.iter().map(|x| constant * x).collect());
    let mut running_max = averages[0].clone();
    let mut average_norms = Vec::with_capacity(averages.len());
    let mut running_max_norms = Vec::with_capacity(averages.len());
    for a in &averages {
        running_max = running_max.sup(a)?;
        average_norms.push(lp_norm(b, a, p)?);
        running_max_norms.push(lp_norm(b, &running_max, p)?);
    }
    let last = running_max_norms.last().expect("nonempty schedule");
    let ratio = last.values.iter().zip(&bound.values).map(|(&n, &c)| ratio_of(n, c)).collect();
    Ok(AverageTrace {
        mode: mode.name().into(),
        p,
        constant,
        horizons: schedule.horizons(),
        averages,
        average_norms,
        running_max_norms,
        running_max,
        f_norm,
        bound,
        ratio,
    })
}

/// Trace CSV columns for a `d`-parameter schedule.
pub fn trace_header(d: usize) -> Vec<String> {
    let mut h: Vec<String> = if d == 1 { vec!["horizon".into()] } else { (1..=d).map(|i| format!("n{i}")).collect() };
    h.extend(["base_point", "norm_p_of_average", "norm_p_of_running_max", "bound_rhs", "ratio"].map(String::from));
    h
}
