//! Finite measurable bundles of `L_p` spaces.
//!
//! Every reduction (over atoms, over base points) runs left to right in
//! ascending index order so results are reproducible bit for bit.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The base measure space `(Ω, λ)`: `B` points with strictly positive mass.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseSpace {
    lambda: Vec<f64>,
}

impl BaseSpace {
    pub fn new(lambda: Vec<f64>) -> Result<Self> {
        if lambda.is_empty() {
            return Err(Error::InvalidBundle("base space needs at least one point".into()));
        }
        if let Some((i, l)) = lambda.iter().enumerate().find(|(_, l)| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidBundle(format!("lambda[{i}] = {l} is not a positive finite mass")));
        }
        let total: f64 = lambda.iter().sum();
        if !total.is_finite() {
            return Err(Error::InvalidBundle("total base mass is not finite".into()));
        }
        Ok(Self { lambda })
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }
}

/// A finite atomic measure space `(∇_ω, μ_ω)`; `∇_ω` is the power set of atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fiber {
    mu: Vec<f64>,
}

impl Fiber {
    pub fn new(mu: Vec<f64>) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::InvalidBundle("fiber needs at least one atom".into()));
        }
        if let Some((i, m)) = mu.iter().enumerate().find(|(_, m)| !(m.is_finite() && **m > 0.0)) {
            return Err(Error::InvalidBundle(format!("mu[{i}] = {m} is not a positive finite mass")));
        }
        Ok(Self { mu })
    }

    pub fn atoms(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn total_mass(&self) -> f64 {
        self.mu.iter().sum()
    }
}

#[derive(Serialize, Deserialize)]
struct BundleFile {
    lambda: Vec<f64>,
    fibers: Vec<FiberFile>,
}

#[derive(Serialize, Deserialize)]
struct FiberFile {
    mu: Vec<f64>,
}

/// A base space together with one fiber per base point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BundleFile", into = "BundleFile")]
pub struct Bundle {
    base: BaseSpace,
    fibers: Vec<Fiber>,
}

impl TryFrom<BundleFile> for Bundle {
    type Error = Error;

    fn try_from(file: BundleFile) -> Result<Self> {
        Bundle::new(file.lambda, file.fibers.into_iter().map(|f| f.mu).collect())
    }
}

impl From<Bundle> for BundleFile {
    fn from(b: Bundle) -> Self {
        BundleFile {
            lambda: b.base.lambda,
            fibers: b.fibers.into_iter().map(|f| FiberFile { mu: f.mu }).collect(),
        }
    }
}

impl Bundle {
    pub fn new(lambda: Vec<f64>, mus: Vec<Vec<f64>>) -> Result<Self> {
        let base = BaseSpace::new(lambda)?;
        if mus.len() != base.len() {
            return Err(Error::InvalidBundle(format!(
                "{} fibers for {} base points",
                mus.len(),
                base.len()
            )));
        }
        let fibers = mus.into_iter().map(Fiber::new).collect::<Result<Vec<_>>>()?;
        Ok(Self { base, fibers })
    }

    /// Unit base masses and unit atom masses.
    pub fn uniform(atom_counts: &[usize]) -> Result<Self> {
        Self::new(
            vec![1.0; atom_counts.len()],
            atom_counts.iter().map(|&m| vec![1.0; m]).collect(),
        )
    }

    /// Random masses in `[0.5, 2)` on both the base and the fibers.
    pub fn random<R: Rng>(rng: &mut R, atom_counts: &[usize]) -> Result<Self> {
        let lambda = atom_counts.iter().map(|_| rng.random_range(0.5..2.0)).collect();
        let mus = atom_counts
            .iter()
            .map(|&m| (0..m).map(|_| rng.random_range(0.5..2.0)).collect())
            .collect();
        Self::new(lambda, mus)
    }

    pub fn base(&self) -> &BaseSpace {
        &self.base
    }

    pub fn base_points(&self) -> usize {
        self.base.len()
    }

    pub fn fibers(&self) -> &[Fiber] {
        &self.fibers
    }

    pub fn fiber(&self, omega: usize) -> &Fiber {
        &self.fibers[omega]
    }

    pub fn atom_counts(&self) -> Vec<usize> {
        self.fibers.iter().map(Fiber::atoms).collect()
    }

    /// The one-point bundle made of fiber `omega` alone.
    pub fn restrict(&self, omega: usize) -> Bundle {
        Bundle {
            base: BaseSpace { lambda: vec![self.base.lambda[omega]] },
            fibers: vec![self.fibers[omega].clone()],
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// An element of `L_0(Ω)`: one real per base point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseScalar {
    pub values: Vec<f64>,
}

impl BaseScalar {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn constant(b: &Bundle, c: f64) -> Self {
        Self { values: vec![c; b.base_points()] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// True when every value is 0 or 1, i.e. an element of `∇(Ω)`.
    pub fn is_idempotent(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn abs(&self) -> Self {
        Self { values: self.values.iter().map(|v| v.abs()).collect() }
    }

    pub fn mul(&self, other: &BaseScalar) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::Shape(format!("base scalars of length {} and {}", self.len(), other.len())));
        }
        Ok(Self { values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect() })
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// An element `f̂` of the bundle: a value per atom of every fiber.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleFunction {
    pub values: Vec<Vec<f64>>,
}

impl BundleFunction {
    pub fn new(b: &Bundle, values: Vec<Vec<f64>>) -> Result<Self> {
        let f = Self { values };
        f.check_shape(b)?;
        Ok(f)
    }

    pub fn zeros(b: &Bundle) -> Self {
        Self::constant(b, 0.0)
    }

    /// The unit `𝟙`.
    pub fn ones(b: &Bundle) -> Self {
        Self::constant(b, 1.0)
    }

    pub fn constant(b: &Bundle, c: f64) -> Self {
        Self { values: b.fibers().iter().map(|f| vec![c; f.atoms()]).collect() }
    }

    /// Entries uniform in `[lo, hi)`.
    pub fn random<R: Rng>(b: &Bundle, rng: &mut R, lo: f64, hi: f64) -> Self {
        Self {
            values: b
                .fibers()
                .iter()
                .map(|f| (0..f.atoms()).map(|_| rng.random_range(lo..hi)).collect())
                .collect(),
        }
    }

    pub fn check_shape(&self, b: &Bundle) -> Result<()> {
        if self.values.len() != b.base_points() {
            return Err(Error::Shape(format!(
                "function has {} fibers, bundle has {}",
                self.values.len(),
                b.base_points()
            )));
        }
        for (omega, (v, fib)) in self.values.iter().zip(b.fibers()).enumerate() {
            if v.len() != fib.atoms() {
                return Err(Error::Shape(format!(
                    "fiber {omega} has {} values, expected {}",
                    v.len(),
                    fib.atoms()
                )));
            }
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &BundleFunction) -> bool {
        self.values.len() == other.values.len()
            && self.values.iter().zip(&other.values).all(|(a, b)| a.len() == b.len())
    }

    fn ensure_same_shape(&self, other: &BundleFunction) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape("bundle functions have different shapes".into()))
        }
    }

    pub fn fiber(&self, omega: usize) -> &[f64] {
        &self.values[omega]
    }

    pub fn base_points(&self) -> usize {
        self.values.len()
    }

    pub fn map(&self, op: impl Fn(f64) -> f64) -> Self {
        Self { values: self.values.iter().map(|v| v.iter().map(|&x| op(x)).collect()).collect() }
    }

    pub fn zip_with(&self, other: &BundleFunction, op: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.ensure_same_shape(other)?;
        Ok(Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| op(x, y)).collect())
                .collect(),
        })
    }

    /// `f ∨ g`
    pub fn sup(&self, other: &BundleFunction) -> Result<Self> {
        self.zip_with(other, f64::max)
    }

    /// `f ∧ g`
    pub fn inf(&self, other: &BundleFunction) -> Result<Self> {
        self.zip_with(other, f64::min)
    }

    pub fn abs(&self) -> Self {
        self.map(f64::abs)
    }

    pub fn add(&self, other: &BundleFunction) -> Result<Self> {
        self.zip_with(other, |x, y| x + y)
    }

    pub fn sub(&self, other: &BundleFunction) -> Result<Self> {
        self.zip_with(other, |x, y| x - y)
    }

    /// Atomwise product `f·g`.
    pub fn mul(&self, other: &BundleFunction) -> Result<Self> {
        self.zip_with(other, |x, y| x * y)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|x| c * x)
    }

    /// `g·f̂` for `g ∈ L_0(Ω)`: fiber `ω` is multiplied by `g(ω)`.
    pub fn mul_base(&self, g: &BaseScalar) -> Result<Self> {
        if g.len() != self.values.len() {
            return Err(Error::Shape(format!(
                "base scalar of length {} against {} fibers",
                g.len(),
                self.values.len()
            )));
        }
        Ok(Self {
            values: self
                .values
                .iter()
                .zip(&g.values)
                .map(|(v, &c)| v.iter().map(|&x| c * x).collect())
                .collect(),
        })
    }

    /// In-place `self += c·other`; shapes must already agree.
    pub(crate) fn axpy(&mut self, c: f64, other: &BundleFunction) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += c * y;
            }
        }
    }

    /// Atomwise order `f ≤ g`.
    pub fn le(&self, other: &BundleFunction) -> Result<bool> {
        self.ensure_same_shape(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .all(|(a, b)| a.iter().zip(b).all(|(x, y)| x <= y)))
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().flatten().all(|&x| x >= 0.0)
    }

    /// `max |f − g|` over all atoms of all fibers.
    pub fn max_abs_diff(&self, other: &BundleFunction) -> Result<f64> {
        self.ensure_same_shape(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// An element `ê ∈ ∇̂`: a set of atoms in every fiber.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberIdempotent {
    pub sets: Vec<Vec<bool>>,
}

impl FiberIdempotent {
    pub fn zero(b: &Bundle) -> Self {
        Self { sets: b.fibers().iter().map(|f| vec![false; f.atoms()]).collect() }
    }

    pub fn unit(b: &Bundle) -> Self {
        Self { sets: b.fibers().iter().map(|f| vec![true; f.atoms()]).collect() }
    }

    /// `g·ê` for a base idempotent `g`.
    pub fn mul_base(&self, g: &BaseScalar) -> Result<Self> {
        if !g.is_idempotent() {
            return Err(Error::Shape("base scalar is not a {0,1} idempotent".into()));
        }
        if g.len() != self.sets.len() {
            return Err(Error::Shape("base idempotent length differs from fiber count".into()));
        }
        Ok(Self {
            sets: self
                .sets
                .iter()
                .zip(&g.values)
                .map(|(s, &c)| s.iter().map(|&x| x && c == 1.0).collect())
                .collect(),
        })
    }

    fn check_shape(&self, b: &Bundle) -> Result<()> {
        if self.sets.len() != b.base_points()
            || self.sets.iter().zip(b.fibers()).any(|(s, f)| s.len() != f.atoms())
        {
            return Err(Error::Shape("idempotent is not shaped like the bundle".into()));
        }
        Ok(())
    }
}

fn check_exponent(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        Err(Error::Exponent(p))
    } else {
        Ok(())
    }
}

/// The `L_0(Ω)`-valued measure `μ̂(ê)(ω) = μ_ω(e(ω))`.
pub fn bundle_measure(b: &Bundle, e: &FiberIdempotent) -> Result<BaseScalar> {
    e.check_shape(b)?;
    Ok(BaseScalar {
        values: e
            .sets
            .iter()
            .zip(b.fibers())
            .map(|(s, fib)| {
                s.iter()
                    .zip(fib.mu())
                    .filter(|(x, _)| **x)
                    .fold(0.0, |acc, (_, m)| acc + m)
            })
            .collect(),
    })
}

/// `ω ↦ ∫ f(ω) dμ_ω`.
pub fn integral(b: &Bundle, f: &BundleFunction) -> Result<BaseScalar> {
    f.check_shape(b)?;
    Ok(BaseScalar {
        values: f
            .values
            .iter()
            .zip(b.fibers())
            .map(|(v, fib)| v.iter().zip(fib.mu()).fold(0.0, |acc, (x, m)| acc + x * m))
            .collect(),
    })
}

/// The `L_p` norm of one fiber vector.
pub(crate) fn fiber_norm(values: &[f64], mu: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        values.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    } else if p == 1.0 {
        values.iter().zip(mu).fold(0.0, |acc, (x, m)| acc + x.abs() * m)
    } else if p == 2.0 {
        values.iter().zip(mu).fold(0.0, |acc, (x, m)| acc + x * x * m).sqrt()
    } else {
        values
            .iter()
            .zip(mu)
            .fold(0.0, |acc, (x, m)| acc + x.abs().powf(p) * m)
            .powf(1.0 / p)
    }
}

/// The `L_0(Ω)`-valued norm `‖f̂‖(ω) = (∫ |f(ω)|^p dμ_ω)^{1/p}`; `p = ∞` gives
/// the fiberwise maximum of `|f|`.
pub fn lp_norm(b: &Bundle, f: &BundleFunction, p: f64) -> Result<BaseScalar> {
    check_exponent(p)?;
    f.check_shape(b)?;
    Ok(BaseScalar {
        values: f
            .values
            .iter()
            .zip(b.fibers())
            .map(|(v, fib)| fiber_norm(v, fib.mu(), p))
            .collect(),
    })
}

/// `ρ̂(f̂, ĝ) = ∫ |f − g| / (1 + |f − g|) dμ̂`
pub fn rho_metric(b: &Bundle, f: &BundleFunction, g: &BundleFunction) -> Result<BaseScalar> {
    f.check_shape(b)?;
    g.check_shape(b)?;
    Ok(BaseScalar {
        values: f
            .values
            .iter()
            .zip(&g.values)
            .zip(b.fibers())
            .map(|((u, v), fib)| {
                u.iter().zip(v).zip(fib.mu()).fold(0.0, |acc, ((x, y), m)| {
                    let d = (x - y).abs();
                    acc + d / (1.0 + d) * m
                })
            })
            .collect(),
    })
}

fn fold_family(
    fs: &[BundleFunction],
    op: impl Fn(f64, f64) -> f64,
) -> Result<BundleFunction> {
    let (first, rest) = fs.split_first().ok_or(Error::EmptyFamily)?;
    let mut acc = first.clone();
    for f in rest {
        acc = acc.zip_with(f, &op)?;
    }
    Ok(acc)
}

/// Atomwise supremum of a finite family.
pub fn bundle_sup(fs: &[BundleFunction]) -> Result<BundleFunction> {
    fold_family(fs, f64::max)
}

/// Atomwise infimum of a finite family.
pub fn bundle_inf(fs: &[BundleFunction]) -> Result<BundleFunction> {
    fold_family(fs, f64::min)
}

/// Finite-horizon order-convergence diagnostic.
///
/// `tail[n - 1]` is `t_n = max_{ω, a} sup_{n ≤ m ≤ H} |f_m − f|`, which is
/// nonincreasing in `n` by construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderConvergenceReport {
    pub tail: Vec<f64>,
    /// `⌈tail_fraction · H⌉`, the 1-based index the summary values refer to.
    pub index: usize,
    pub final_tail: f64,
    pub per_base_point: Vec<f64>,
}

/// Tail sup of a sequence of per-base-point deviations, where
/// `deviations[m][ω] = max_a |f_m(ω)_a − f(ω)_a|`.
pub(crate) fn tail_report(deviations: &[Vec<f64>], tail_fraction: f64) -> Result<OrderConvergenceReport> {
    if deviations.is_empty() {
        return Err(Error::EmptyFamily);
    }
    if !(tail_fraction > 0.0 && tail_fraction < 1.0) {
        return Err(Error::Shape(format!("tail fraction {tail_fraction} is outside (0, 1)")));
    }
    let h = deviations.len();
    let base_points = deviations[0].len();
    let mut per_base = vec![vec![0.0; base_points]; h];
    let mut running = vec![0.0f64; base_points];
    for m in (0..h).rev() {
        for (r, d) in running.iter_mut().zip(&deviations[m]) {
            *r = r.max(*d);
        }
        per_base[m].clone_from(&running);
    }
    let tail: Vec<f64> = per_base.iter().map(|v| v.iter().copied().fold(0.0, f64::max)).collect();
    let index = ((tail_fraction * h as f64).ceil() as usize).clamp(1, h);
    Ok(OrderConvergenceReport {
        final_tail: tail[index - 1],
        per_base_point: per_base[index - 1].clone(),
        tail,
        index,
    })
}

pub(crate) fn per_base_deviation(a: &BundleFunction, b: &BundleFunction) -> Vec<f64> {
    a.values
        .iter()
        .zip(&b.values)
        .map(|(u, v)| u.iter().zip(v).fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs())))
        .collect()
}

pub fn order_convergence_report(
    fs: &[BundleFunction],
    f: &BundleFunction,
    tail_fraction: f64,
) -> Result<OrderConvergenceReport> {
    if fs.is_empty() {
        return Err(Error::EmptyFamily);
    }
    if fs.iter().any(|g| !g.same_shape(f)) {
        return Err(Error::Shape("sequence members differ in shape from the limit".into()));
    }
    let deviations: Vec<Vec<f64>> = fs.iter().map(|g| per_base_deviation(g, f)).collect();
    tail_report(&deviations, tail_fraction)
}
