//! Bounded Besicovich weights in one and `d` variables.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::{MultiIndex, Window};

/// One term `amp · Π_i cos(2π·freq_i·k_i + phase_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub amp: f64,
    pub freq: Vec<f64>,
    pub phase: Vec<f64>,
}

impl TrigTerm {
    pub fn new(amp: f64, freq: Vec<f64>, phase: Vec<f64>) -> Self {
        Self { amp, freq, phase }
    }

    /// Single-variable term.
    pub fn one(amp: f64, freq: f64, phase: f64) -> Self {
        Self { amp, freq: vec![freq], phase: vec![phase] }
    }

    fn eval(&self, k: &[u64]) -> f64 {
        self.freq
            .iter()
            .zip(&self.phase)
            .zip(k)
            .fold(self.amp, |acc, ((f, ph), &k)| acc * (TAU * f * k as f64 + ph).cos())
    }
}

/// A real trigonometric polynomial in `d` variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrigFile", into = "TrigFile")]
pub struct TrigPolynomial {
    dim: usize,
    terms: Vec<TrigTerm>,
}

#[derive(Serialize, Deserialize)]
struct TrigFile {
    #[serde(default = "one")]
    dim: usize,
    terms: Vec<TrigTerm>,
}

fn one() -> usize {
    1
}

impl TryFrom<TrigFile> for TrigPolynomial {
    type Error = Error;

    fn try_from(f: TrigFile) -> Result<Self> {
        Self::new(f.dim, f.terms)
    }
}

impl From<TrigPolynomial> for TrigFile {
    fn from(p: TrigPolynomial) -> Self {
        TrigFile { dim: p.dim, terms: p.terms }
    }
}

impl TrigPolynomial {
    pub fn new(dim: usize, terms: Vec<TrigTerm>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidWeight("trigonometric polynomial needs d >= 1".into()));
        }
        for (t, term) in terms.iter().enumerate() {
            if term.freq.len() != dim || term.phase.len() != dim {
                return Err(Error::InvalidWeight(format!("term {t} is not {dim}-variable")));
            }
            if !term.amp.is_finite() || term.phase.iter().any(|p| !p.is_finite()) {
                return Err(Error::InvalidWeight(format!("term {t} has a non-finite coefficient")));
            }
            if term.freq.iter().any(|f| !(0.0..1.0).contains(f)) {
                return Err(Error::InvalidWeight(format!("term {t} has a frequency outside [0, 1)")));
            }
        }
        Ok(Self { dim, terms })
    }

    pub fn zero(dim: usize) -> Self {
        Self { dim: dim.max(1), terms: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[TrigTerm] {
        &self.terms
    }

    pub fn eval(&self, k: &[u64]) -> f64 {
        self.terms.iter().fold(0.0, |acc, t| acc + t.eval(k))
    }

    /// `Σ |amp|`, nudged up by a few ulps so summation rounding can never
    /// push an evaluation past it.
    pub fn sup_bound(&self) -> f64 {
        let s: f64 = self.terms.iter().map(|t| t.amp.abs()).sum();
        if self.terms.len() > 1 {
            s * (1.0 + 4.0 * f64::EPSILON * self.terms.len() as f64)
        } else {
            s
        }
    }

    /// Product of polynomials in disjoint variables.
    pub fn tensor(factors: &[TrigPolynomial]) -> Self {
        let mut terms = vec![TrigTerm::new(1.0, Vec::new(), Vec::new())];
        for p in factors {
            terms = terms
                .iter()
                .flat_map(|a| {
                    p.terms.iter().map(move |b| {
                        let mut freq = a.freq.clone();
                        freq.extend(&b.freq);
                        let mut phase = a.phase.clone();
                        phase.extend(&b.phase);
                        TrigTerm::new(a.amp * b.amp, freq, phase)
                    })
                })
                .collect();
        }
        Self { dim: factors.iter().map(|p| p.dim).sum::<usize>().max(1), terms }
    }
}

/// Strictly increasing positive integers `j_1 < j_2 < …` (a stored prefix).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u64>", into = "Vec<u64>")]
pub struct Subsequence {
    j: Vec<u64>,
}

impl TryFrom<Vec<u64>> for Subsequence {
    type Error = Error;

    fn try_from(j: Vec<u64>) -> Result<Self> {
        Self::new(j)
    }
}

impl From<Subsequence> for Vec<u64> {
    fn from(s: Subsequence) -> Self {
        s.j
    }
}

impl Subsequence {
    pub fn new(j: Vec<u64>) -> Result<Self> {
        if j.is_empty() {
            return Err(Error::InvalidSubsequence("empty".into()));
        }
        if j[0] == 0 {
            return Err(Error::InvalidSubsequence("terms must be positive".into()));
        }
        if let Some(w) = j.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSubsequence(format!("not increasing at position {}", w + 1)));
        }
        Ok(Self { j })
    }

    /// `j_k = step·k + offset` for `k = 1..=len`.
    pub fn arithmetic(step: u64, offset: u64, len: usize) -> Result<Self> {
        Self::new((1..=len as u64).map(|k| step * k + offset).collect())
    }

    pub fn terms(&self) -> &[u64] {
        &self.j
    }

    pub fn len(&self) -> usize {
        self.j.len()
    }

    pub fn is_empty(&self) -> bool {
        self.j.is_empty()
    }

    /// `j_k`, 1-based.
    pub fn get(&self, k: usize) -> Option<u64> {
        k.checked_sub(1).and_then(|i| self.j.get(i).copied())
    }

    /// `sup_k j_k / k` over the stored prefix.
    pub fn ratio_bound(&self) -> f64 {
        self.j.iter().enumerate().map(|(i, &j)| j as f64 / (i + 1) as f64).fold(0.0, f64::max)
    }

    /// Whether `k ∈ {j_m}`; `None` past the stored prefix.
    pub fn contains(&self, k: u64) -> Option<bool> {
        if k > *self.j.last().expect("nonempty") {
            None
        } else {
            Some(self.j.binary_search(&k).is_ok())
        }
    }

    /// `(step, offset)` when the stored prefix is `j_k = step·k + offset`.
    pub fn as_arithmetic(&self) -> Option<(u64, u64)> {
        let step = if self.j.len() > 1 { self.j[1] - self.j[0] } else { self.j[0] };
        let offset = self.j[0].checked_sub(step)?;
        self.j
            .iter()
            .enumerate()
            .all(|(i, &j)| j == step * (i as u64 + 1) + offset)
            .then_some((step, offset))
    }
}

type CustomFn = Arc<dyn Fn(&[u64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum WeightKind {
    Constant(f64),
    Trig(TrigPolynomial),
    Subsequence(Subsequence),
    Product(Vec<WeightSequence>),
    Custom(CustomFn),
}

impl fmt::Debug for WeightKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            Self::Trig(p) => f.debug_tuple("Trig").field(p).finish(),
            Self::Subsequence(s) => f.debug_tuple("Subsequence").field(s).finish(),
            Self::Product(ws) => f.debug_tuple("Product").field(ws).finish(),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// A bounded weight `α: ℕ^d → ℝ` with declared bound `b = sup |α(𝐤)|`.
#[derive(Debug, Clone)]
pub struct WeightSequence {
    dim: usize,
    bound: f64,
    kind: WeightKind,
}

impl WeightSequence {
    pub fn constant(value: f64, dim: usize) -> Result<Self> {
        if !value.is_finite() || dim == 0 {
            return Err(Error::InvalidWeight(format!("constant {value} in {dim} variables")));
        }
        Ok(Self { dim, bound: value.abs(), kind: WeightKind::Constant(value) })
    }

    pub fn trig(poly: TrigPolynomial) -> Self {
        Self { dim: poly.dim(), bound: poly.sup_bound(), kind: WeightKind::Trig(poly) }
    }

    /// Indicator of the set `{j_1, j_2, …}`; `b = 1`.
    pub fn subsequence(s: Subsequence) -> Self {
        Self { dim: 1, bound: 1.0, kind: WeightKind::Subsequence(s) }
    }

    /// `α(𝐤) = Π_i α_i(k_i)` over one-variable factors.
    pub fn product(factors: Vec<WeightSequence>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidWeight("product of no factors".into()));
        }
        if let Some(i) = factors.iter().position(|w| w.dim != 1) {
            return Err(Error::InvalidWeight(format!("product factor {i} is not one-variable")));
        }
        let bound = factors.iter().fold(1.0, |acc, w| acc * w.bound);
        Ok(Self { dim: factors.len(), bound, kind: WeightKind::Product(factors) })
    }

    /// Arbitrary evaluator with a caller-declared bound, checked on every evaluation.
    pub fn custom(dim: usize, bound: f64, f: impl Fn(&[u64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { dim, bound, kind: WeightKind::Custom(Arc::new(f)) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn kind(&self) -> &WeightKind {
        &self.kind
    }

    pub fn is_product(&self) -> bool {
        matches!(self.kind, WeightKind::Product(_))
    }

    /// One-variable factors when the weight is separable (constants split evenly).
    pub fn factors(&self) -> Option<Vec<WeightSequence>> {
        match &self.kind {
            WeightKind::Product(ws) => Some(ws.clone()),
            _ if self.dim == 1 => Some(vec![self.clone()]),
            WeightKind::Constant(c) => {
                let mut fs = vec![WeightSequence::constant(1.0, 1).ok()?; self.dim];
                fs[0] = WeightSequence::constant(*c, 1).ok()?;
                Some(fs)
            }
            _ => None,
        }
    }

    fn raw(&self, k: &[u64]) -> Result<f64> {
        Ok(match &self.kind {
            WeightKind::Constant(c) => *c,
            WeightKind::Trig(p) => p.eval(k),
            WeightKind::Subsequence(s) => match s.contains(k[0]) {
                Some(true) => 1.0,
                Some(false) => 0.0,
                None => {
                    return Err(Error::InvalidSubsequence(format!(
                        "index {} is past the stored prefix ending at {}",
                        k[0],
                        s.terms().last().expect("nonempty")
                    )))
                }
            },
            WeightKind::Product(ws) => {
                let mut acc = 1.0;
                for (w, &ki) in ws.iter().zip(k) {
                    acc *= w.eval(&[ki])?;
                }
                acc
            }
            WeightKind::Custom(f) => f(k),
        })
    }

    /// `α(𝐤)`; errors if `|α(𝐤)|` exceeds the declared bound.
    pub fn eval(&self, k: &[u64]) -> Result<f64> {
        if k.len() != self.dim {
            return Err(Error::Shape(format!("{}-variable weight evaluated at {k:?}", self.dim)));
        }
        let v = self.raw(k)?;
        if !(v.abs() <= self.bound) {
            return Err(Error::WeightBound { index: k.to_vec(), value: v, bound: self.bound });
        }
        Ok(v)
    }

    pub fn eval1(&self, k: u64) -> Result<f64> {
        self.eval(&[k])
    }

    /// Trigonometric polynomial whose averages have the same limits as this
    /// weight's, when one is known exactly.
    pub fn almost_periodic_part(&self) -> Option<TrigPolynomial> {
        match &self.kind {
            WeightKind::Constant(c) => Some(TrigPolynomial {
                dim: self.dim,
                terms: vec![TrigTerm::new(*c, vec![0.0; self.dim], vec![0.0; self.dim])],
            }),
            WeightKind::Trig(p) => Some(p.clone()),
            WeightKind::Subsequence(s) => {
                // Indicator of {k ≡ offset mod step}, eventually equal to the
                // indicator of {step·m + offset : m ≥ 1}.
                let (step, offset) = s.as_arithmetic()?;
                let a = step as f64;
                let terms = (0..step)
                    .map(|r| {
                        let phase = -TAU * ((r * offset) % step) as f64 / a;
                        TrigTerm::one(1.0 / a, r as f64 / a, phase)
                    })
                    .collect();
                Some(TrigPolynomial { dim: 1, terms })
            }
            WeightKind::Product(ws) => {
                let parts = ws.iter().map(WeightSequence::almost_periodic_part).collect::<Option<Vec<_>>>()?;
                Some(TrigPolynomial::tensor(&parts))
            }
            WeightKind::Custom(_) => None,
        }
    }

    /// The JSON-describable form, when there is one.
    pub fn spec(&self) -> Option<WeightSpec> {
        match &self.kind {
            WeightKind::Constant(c) => Some(WeightSpec::Constant { value: *c, dim: self.dim }),
            WeightKind::Trig(p) => Some(WeightSpec::Trig { terms: p.terms.clone() }),
            WeightKind::Subsequence(s) => Some(WeightSpec::Subsequence { j: s.j.clone() }),
            WeightKind::Product(ws) => {
                Some(WeightSpec::Product { factors: ws.iter().map(|w| w.spec()).collect::<Option<_>>()? })
            }
            WeightKind::Custom(_) => None,
        }
    }
}

/// `subsequence_to_weights`: the indicator weight of `{j_m}`.
pub fn subsequence_to_weights(s: Subsequence) -> WeightSequence {
    WeightSequence::subsequence(s)
}

/// `product_weights`.
pub fn product_weights(ws: Vec<WeightSequence>) -> Result<WeightSequence> {
    WeightSequence::product(ws)
}

/// File form of a weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSpec {
    Trig { terms: Vec<TrigTerm> },
    Subsequence { j: Vec<u64> },
    Constant {
        value: f64,
        #[serde(default = "one")]
        dim: usize,
    },
    Product { factors: Vec<WeightSpec> },
}

impl WeightSpec {
    pub fn build(&self) -> Result<WeightSequence> {
        match self {
            Self::Trig { terms } => {
                let dim = terms.first().map_or(1, |t| t.freq.len());
                Ok(WeightSequence::trig(TrigPolynomial::new(dim, terms.clone())?))
            }
            Self::Subsequence { j } => Ok(WeightSequence::subsequence(Subsequence::new(j.clone())?)),
            Self::Constant { value, dim } => WeightSequence::constant(*value, *dim),
            Self::Product { factors } => {
                WeightSequence::product(factors.iter().map(WeightSpec::build).collect::<Result<_>>()?)
            }
        }
    }
}

/// Finite-horizon estimate of the Besicovich deviation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationReport {
    pub value: f64,
    /// Deviation at dyadic sub-horizons `min(2^j, n_i)`, ending at the full horizon.
    pub curve: Vec<(MultiIndex, f64)>,
}

fn box_deviation(w: &WeightSequence, psi: &TrigPolynomial, n: &MultiIndex, window: Window) -> Result<f64> {
    let d = n.dim();
    let ranges: Vec<(u64, u64)> = n.components().iter().map(|&c| window.bounds(c)).collect();
    if ranges.iter().any(|(s, e)| s >= e) {
        return Ok(0.0);
    }
    let mut k: Vec<u64> = ranges.iter().map(|r| r.0).collect();
    let mut sum = 0.0;
    'outer: loop {
        sum += (w.eval(&k)? - psi.eval(&k)).abs();
        for i in (0..d).rev() {
            k[i] += 1;
            if k[i] < ranges[i].1 {
                continue 'outer;
            }
            k[i] = ranges[i].0;
        }
        break;
    }
    Ok(sum / n.volume() as f64)
}

/// `(1/|𝐧|) Σ_𝐤 |α(𝐤) − ψ(𝐤)|` over the window, with a dyadic trend curve.
pub fn besicovich_deviation(
    w: &WeightSequence,
    psi: &TrigPolynomial,
    n: &MultiIndex,
    window: Window,
) -> Result<DeviationReport> {
    if w.dim() != n.dim() || psi.dim() != n.dim() {
        return Err(Error::Shape(format!(
            "weight in {} variables, polynomial in {}, horizon in {}",
            w.dim(),
            psi.dim(),
            n.dim()
        )));
    }
    let mut curve = Vec::new();
    let mut scale = 1u64;
    loop {
        let sub = MultiIndex::new(n.components().iter().map(|&c| c.min(scale)).collect())?;
        let done = sub == *n;
        let v = box_deviation(w, psi, &sub, window)?;
        curve.push((sub, v));
        if done {
            break;
        }
        scale = scale.saturating_mul(2);
    }
    let value = curve.last().expect("nonempty").1;
    Ok(DeviationReport { value, curve })
}
