//! Fibered positive contractions and the conditional expectation.
//!
//! An operator is stored as one dense matrix per fiber (row = output atom,
//! column = input atom). Applying it is fiberwise by definition: operators
//! never mix fibers.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bundle::{fiber_norm, Bundle, BundleFunction};
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};
use crate::CERTIFICATE_TOL;

/// Square row-major matrix acting on one fiber.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl FiberMatrix {
    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        Self { dim, data }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![0.0; dim * dim] }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape(format!("matrix with {dim} rows is not square")));
        }
        Ok(Self { dim, data: rows.into_iter().flatten().collect() })
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim.max(1)).map(<[f64]>::to_vec).collect()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// `y = T x`, each dot product summed left to right over input atoms.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        self.apply_into(x, &mut y);
        y
    }

    pub(crate) fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, out) in y.iter_mut().enumerate() {
            *out = self.row(i).iter().zip(x).fold(0.0, |acc, (t, v)| acc + t * v);
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.row(i).iter().sum()).collect()
    }

    /// `Σ_i μ(i) T_ij` for every column `j`.
    pub fn weighted_column_sums(&self, mu: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|j| (0..self.dim).fold(0.0, |acc, i| acc + mu[i] * self.get(i, j)))
            .collect()
    }

    /// `self · other`.
    pub fn matmul(&self, other: &FiberMatrix) -> FiberMatrix {
        let n = self.dim;
        let mut out = FiberMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let v = (0..n).fold(0.0, |acc, k| acc + self.get(i, k) * other.get(k, j));
                out.set(i, j, v);
            }
        }
        out
    }

    fn damp_toward_identity(&mut self) {
        for i in 0..self.dim {
            for j in 0..self.dim {
                let id = if i == j { 1.0 } else { 0.0 };
                let v = self.get(i, j);
                self.set(i, j, 0.5 * (id + v));
            }
        }
    }
}

/// Which contraction conditions were verified when the operator was built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Certificate {
    /// All entries ≥ 0.
    pub nonnegative: bool,
    /// Row sums ≤ 1: `T𝟙 ≤ 𝟙`, hence an `L_∞` contraction.
    pub sub_unit: bool,
    /// `Σ_i μ(i) T_ij ≤ μ(j)`: an `L_1(μ)` contraction.
    pub l1_contraction: bool,
    /// Exponent for which the probe-based `L_p` norm estimate stayed ≤ 1.
    pub lp_probe: Option<f64>,
}

impl Certificate {
    /// Nonnegative, `T𝟙 ≤ 𝟙` and `L_1` contraction: an `L_p` contraction for
    /// every `p ∈ [1, ∞]`.
    pub fn dunford_schwartz(&self) -> bool {
        self.nonnegative && self.sub_unit && self.l1_contraction
    }
}

/// Operator hypotheses a computation may demand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Requirement {
    /// Positive with `T𝟙 ≤ 𝟙`.
    Markov,
    /// Positive `L_p` contraction with `T𝟙 ≤ 𝟙`.
    LpContraction { p: f64 },
    /// Positive `L_1–L_∞` contraction.
    DunfordSchwartz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationMode {
    DunfordSchwartz,
    /// Accept nonnegative operators with `T𝟙 ≤ 𝟙` whose probed `L_p` norm is ≤ 1.
    POnly,
}

/// `T`: one matrix per fiber plus its certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberedOperator {
    matrices: Vec<FiberMatrix>,
    certificate: Certificate,
}

#[derive(Serialize, Deserialize)]
struct OperatorFile {
    matrices: Vec<Vec<Vec<f64>>>,
}

impl FiberedOperator {
    /// Checks shapes against `b` and records the contraction certificate.
    /// An operator failing the certificate is still constructed.
    pub fn new(b: &Bundle, matrices: Vec<FiberMatrix>) -> Result<Self> {
        if matrices.len() != b.base_points() {
            return Err(Error::Shape(format!(
                "{} matrices for {} fibers",
                matrices.len(),
                b.base_points()
            )));
        }
        for (omega, (m, fib)) in matrices.iter().zip(b.fibers()).enumerate() {
            if m.dim() != fib.atoms() {
                return Err(Error::Shape(format!(
                    "matrix {omega} is {0}x{0}, fiber has {1} atoms",
                    m.dim(),
                    fib.atoms()
                )));
            }
        }
        let checks: Vec<FiberCheck> =
            matrices.iter().zip(b.fibers()).map(|(m, fib)| FiberCheck::of(m, fib.mu())).collect();
        let certificate = Certificate {
            nonnegative: checks.iter().all(|c| c.nonnegative),
            sub_unit: checks.iter().all(|c| c.row_sums_ok),
            l1_contraction: checks.iter().all(|c| c.weighted_columns_ok),
            lp_probe: None,
        };
        Ok(Self { matrices, certificate })
    }

    pub fn identity(b: &Bundle) -> Self {
        Self::new(b, b.fibers().iter().map(|f| FiberMatrix::identity(f.atoms())).collect())
            .expect("identity matches its bundle")
    }

    pub fn from_rows(b: &Bundle, matrices: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        Self::new(b, matrices.into_iter().map(FiberMatrix::from_rows).collect::<Result<_>>()?)
    }

    pub fn from_json(s: &str, b: &Bundle) -> Result<Self> {
        let file: OperatorFile = serde_json::from_str(s)?;
        Self::from_rows(b, file.matrices)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = OperatorFile { matrices: self.matrices.iter().map(FiberMatrix::rows).collect() };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn certificate(&self) -> &Certificate {
        &self.certificate
    }

    pub fn matrices(&self) -> &[FiberMatrix] {
        &self.matrices
    }

    pub fn fiber(&self, omega: usize) -> &FiberMatrix {
        &self.matrices[omega]
    }

    pub fn base_points(&self) -> usize {
        self.matrices.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.matrices.iter().map(FiberMatrix::dim).collect()
    }

    /// The operator on the one-point bundle `b.restrict(omega)`.
    pub fn restrict(&self, omega: usize) -> FiberedOperator {
        FiberedOperator { matrices: vec![self.matrices[omega].clone()], certificate: self.certificate }
    }

    /// Runs the norm probe at `p` and, if it passes, records `p` in the
    /// certificate so `Requirement::LpContraction { p }` is met.
    pub fn with_lp_probe(mut self, b: &Bundle, p: f64) -> Result<Self> {
        let report = validate(&self, b, p, ValidationMode::POnly)?;
        if report.valid {
            self.certificate.lp_probe = Some(p);
        }
        Ok(self)
    }

    pub fn require(&self, req: Requirement) -> Result<()> {
        let c = &self.certificate;
        let ok = match req {
            Requirement::Markov => c.nonnegative && c.sub_unit,
            Requirement::DunfordSchwartz => c.dunford_schwartz(),
            Requirement::LpContraction { p } => {
                c.nonnegative && c.sub_unit && (c.l1_contraction || c.lp_probe == Some(p))
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Hypothesis(format!(
                "operator certificate {:?} does not satisfy {:?}",
                self.certificate, req
            )))
        }
    }

    pub fn check_function(&self, f: &BundleFunction) -> Result<()> {
        if f.base_points() != self.matrices.len()
            || f.values.iter().zip(&self.matrices).any(|(v, m)| v.len() != m.dim())
        {
            return Err(Error::Shape("function is not shaped like the operator".into()));
        }
        Ok(())
    }

    /// `(Tf̂)(ω) = T(ω) f(ω)`.
    pub fn apply(&self, f: &BundleFunction) -> Result<BundleFunction> {
        self.check_function(f)?;
        Ok(self.apply_unchecked(f))
    }

    pub(crate) fn apply_unchecked(&self, f: &BundleFunction) -> BundleFunction {
        BundleFunction {
            values: self.matrices.iter().zip(&f.values).map(|(m, v)| m.apply(v)).collect(),
        }
    }

    pub(crate) fn apply_in_place(&self, f: &mut BundleFunction, scratch: &mut Vec<f64>) {
        for (m, v) in self.matrices.iter().zip(f.values.iter_mut()) {
            scratch.clear();
            scratch.resize(m.dim(), 0.0);
            m.apply_into(v, scratch);
            v.copy_from_slice(scratch);
        }
    }

    /// `T^k` materialized fiber by fiber; only sensible for small fibers.
    pub fn matrix_power(&self, b: &Bundle, k: u64) -> Result<FiberedOperator> {
        let matrices = self
            .matrices
            .iter()
            .map(|m| {
                let mut acc = FiberMatrix::identity(m.dim());
                for _ in 0..k {
                    acc = acc.matmul(m);
                }
                acc
            })
            .collect();
        FiberedOperator::new(b, matrices)
    }

    /// `T^k f` by repeated application.
    pub fn power_apply(&self, f: &BundleFunction, k: u64) -> Result<BundleFunction> {
        self.check_function(f)?;
        let mut out = f.clone();
        let mut scratch = Vec::new();
        for _ in 0..k {
            self.apply_in_place(&mut out, &mut scratch);
        }
        Ok(out)
    }
}

struct FiberCheck {
    nonnegative: bool,
    row_sums_ok: bool,
    weighted_columns_ok: bool,
    max_row_sum: f64,
    max_column_excess: f64,
}

impl FiberCheck {
    fn of(m: &FiberMatrix, mu: &[f64]) -> Self {
        let nonnegative = m.data.iter().all(|&x| x >= 0.0);
        let max_row_sum = m.row_sums().into_iter().fold(f64::NEG_INFINITY, f64::max);
        let max_column_excess = m
            .weighted_column_sums(mu)
            .into_iter()
            .zip(mu)
            .map(|(s, m)| s - m)
            .fold(f64::NEG_INFINITY, f64::max);
        Self {
            nonnegative,
            row_sums_ok: max_row_sum <= 1.0 + CERTIFICATE_TOL,
            weighted_columns_ok: max_column_excess <= CERTIFICATE_TOL,
            max_row_sum,
            max_column_excess,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiberValidation {
    pub nonnegative: bool,
    pub row_sums_ok: bool,
    pub weighted_columns_ok: bool,
    pub max_row_sum: f64,
    pub max_column_excess: f64,
    /// Lower bound on `‖T(ω)‖_{p→p}` from a fixed probe set.
    pub norm_probe: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub mode: ValidationMode,
    pub p: f64,
    pub fibers: Vec<FiberValidation>,
    pub norm_probes: Vec<f64>,
}

const RANDOM_PROBES: usize = 16;

/// Probe-based lower bound on the operator norm of one fiber matrix.
fn norm_probe(m: &FiberMatrix, mu: &[f64], p: f64) -> f64 {
    let n = m.dim();
    let mut probes: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    probes.push(vec![1.0; n]);
    let mut rng = stream(n as u64, "operators/norm-probe");
    for r in 0..RANDOM_PROBES {
        let lo = if r % 2 == 0 { 0.0 } else { -1.0 };
        probes.push((0..n).map(|_| rng.random_range(lo..1.0)).collect());
    }
    probes
        .iter()
        .filter_map(|x| {
            let denom = fiber_norm(x, mu, p);
            (denom > 0.0).then(|| fiber_norm(&m.apply(x), mu, p) / denom)
        })
        .fold(0.0, f64::max)
}

/// Checks the certificate conditions and probes the `L_0(Ω)`-valued norm.
/// Never fails on an invalid operator; the report says so instead.
pub fn validate(t: &FiberedOperator, b: &Bundle, p: f64, mode: ValidationMode) -> Result<ValidationReport> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::Exponent(p));
    }
    if t.dims() != b.atom_counts() {
        return Err(Error::Shape("operator is not shaped like the bundle".into()));
    }
    let fibers: Vec<FiberValidation> = t
        .matrices
        .iter()
        .zip(b.fibers())
        .map(|(m, fib)| {
            let c = FiberCheck::of(m, fib.mu());
            FiberValidation {
                nonnegative: c.nonnegative,
                row_sums_ok: c.row_sums_ok,
                weighted_columns_ok: c.weighted_columns_ok,
                max_row_sum: c.max_row_sum,
                max_column_excess: c.max_column_excess,
                norm_probe: norm_probe(m, fib.mu(), p),
            }
        })
        .collect();
    let valid = match mode {
        ValidationMode::DunfordSchwartz => {
            fibers.iter().all(|f| f.nonnegative && f.row_sums_ok && f.weighted_columns_ok)
        }
        ValidationMode::POnly => fibers
            .iter()
            .all(|f| f.nonnegative && f.row_sums_ok && f.norm_probe <= 1.0 + CERTIFICATE_TOL),
    };
    let norm_probes = fibers.iter().map(|f| f.norm_probe).collect();
    Ok(ValidationReport { valid, mode, p, fibers, norm_probes })
}

/// Operator families that [`generate`] knows how to build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorKind {
    Identity,
    /// Shift `(Tf)_i = f_{i+1 mod m}`, scaled down where needed to keep the
    /// weighted column condition; a permutation on uniform fibers.
    Cyclic,
    /// Random stochastic rows, then columns rescaled into the `L_1(μ)` condition.
    RandomMarkov,
    /// Strictly positive, `μ`-preserving Markov mixtures; irreducible and
    /// aperiodic with spectral gap at least the weight of the global average.
    RandomStrict,
    Custom { matrices: Vec<Vec<Vec<f64>>> },
}

impl OperatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Cyclic => "cyclic",
            Self::RandomMarkov => "random_markov",
            Self::RandomStrict => "random_strict",
            Self::Custom { .. } => "custom",
        }
    }
}

const MAX_DAMPING_STEPS: u32 = 64;

/// Builds a certificated operator of the requested kind, reproducibly from `seed`.
pub fn generate(kind: &OperatorKind, seed: u64, b: &Bundle) -> Result<FiberedOperator> {
    generate_with_report(kind, seed, b).map(|(t, _)| t)
}

/// As [`generate`], also returning how many halvings toward the identity each
/// fiber needed before its certificate held.
pub fn generate_with_report(kind: &OperatorKind, seed: u64, b: &Bundle) -> Result<(FiberedOperator, Vec<u32>)> {
    if let OperatorKind::Custom { matrices } = kind {
        return Ok((FiberedOperator::from_rows(b, matrices.clone())?, vec![0; b.base_points()]));
    }
    let mut damping = Vec::with_capacity(b.base_points());
    let mut matrices = Vec::with_capacity(b.base_points());
    for (omega, fib) in b.fibers().iter().enumerate() {
        let mu = fib.mu();
        let mut rng = stream(seed, &format!("operators/{}/fiber{omega}", kind.name()));
        let mut m = match kind {
            OperatorKind::Identity => FiberMatrix::identity(mu.len()),
            OperatorKind::Cyclic => cyclic_matrix(mu),
            OperatorKind::RandomMarkov => random_markov_matrix(mu, &mut rng),
            OperatorKind::RandomStrict => random_strict_matrix(mu, &mut rng),
            OperatorKind::Custom { .. } => unreachable!(),
        };
        let mut steps = 0;
        while !FiberCheck::of(&m, mu).certified() {
            if steps == MAX_DAMPING_STEPS {
                return Err(Error::Hypothesis(format!(
                    "fiber {omega}: {} generator could not meet the certificate",
                    kind.name()
                )));
            }
            m.damp_toward_identity();
            steps += 1;
        }
        damping.push(steps);
        matrices.push(m);
    }
    Ok((FiberedOperator::new(b, matrices)?, damping))
}

impl FiberCheck {
    fn certified(&self) -> bool {
        self.nonnegative && self.row_sums_ok && self.weighted_columns_ok
    }
}

fn cyclic_matrix(mu: &[f64]) -> FiberMatrix {
    let n = mu.len();
    let mut m = FiberMatrix::zeros(n);
    for i in 0..n {
        let j = (i + 1) % n;
        m.set(i, j, (mu[j] / mu[i]).min(1.0));
    }
    m
}

fn rescale_columns(m: &mut FiberMatrix, mu: &[f64]) {
    let sums = m.weighted_column_sums(mu);
    for (j, s) in sums.into_iter().enumerate() {
        if s > mu[j] {
            let c = mu[j] / s;
            for i in 0..m.dim() {
                let v = m.get(i, j);
                m.set(i, j, v * c);
            }
        }
    }
}

fn random_markov_matrix(mu: &[f64], rng: &mut Stream) -> FiberMatrix {
    let n = mu.len();
    let mut m = FiberMatrix::zeros(n);
    for i in 0..n {
        let mut row: Vec<f64> =
            (0..n).map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..1.0) }).collect();
        if row.iter().all(|&x| x == 0.0) {
            row[rng.random_range(0..n)] = 1.0;
        }
        let s: f64 = row.iter().sum();
        for (j, x) in row.into_iter().enumerate() {
            m.set(i, j, x / s);
        }
    }
    rescale_columns(&mut m, mu);
    m
}

/// Conditional expectation onto a random partition, as a matrix.
fn random_block_average(mu: &[f64], rng: &mut Stream) -> FiberMatrix {
    let n = mu.len();
    let blocks = rng.random_range(1..=n);
    let labels: Vec<usize> = (0..n).map(|a| if a < blocks { a } else { rng.random_range(0..blocks) }).collect();
    let mut mass = vec![0.0; blocks];
    for (a, &l) in labels.iter().enumerate() {
        mass[l] += mu[a];
    }
    let mut m = FiberMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                m.set(i, j, mu[j] / mass[labels[j]]);
            }
        }
    }
    m
}

/// Random permutation of atoms that only swaps atoms of identical mass.
fn random_mass_preserving_permutation(mu: &[f64], rng: &mut Stream) -> FiberMatrix {
    let n = mu.len();
    let mut target: Vec<usize> = (0..n).collect();
    let mut seen = vec![false; n];
    for a in 0..n {
        if seen[a] {
            continue;
        }
        let class: Vec<usize> = (a..n).filter(|&c| mu[c].to_bits() == mu[a].to_bits()).collect();
        for &c in &class {
            seen[c] = true;
        }
        let mut shuffled = class.clone();
        shuffled.shuffle(rng);
        for (&from, &to) in class.iter().zip(&shuffled) {
            target[from] = to;
        }
    }
    let mut m = FiberMatrix::zeros(n);
    for (i, &j) in target.iter().enumerate() {
        m.set(i, j, 1.0);
    }
    m
}

fn random_strict_matrix(mu: &[f64], rng: &mut Stream) -> FiberMatrix {
    let n = mu.len();
    let total: f64 = mu.iter().sum();
    let global_weight = rng.random_range(0.1..0.5);
    let parts = rng.random_range(1..=3usize);
    let raw: Vec<f64> = (0..parts).map(|_| rng.random_range(0.1..1.0)).collect();
    let raw_sum: f64 = raw.iter().sum();
    let mut m = FiberMatrix::zeros(n);
    for i in 0..n {
        for (j, &mj) in mu.iter().enumerate() {
            m.set(i, j, global_weight * mj / total);
        }
    }
    for w in raw {
        let comp = if rng.random_bool(0.5) {
            random_block_average(mu, rng)
        } else {
            random_mass_preserving_permutation(mu, rng)
        };
        let c = (1.0 - global_weight) * w / raw_sum;
        for i in 0..n {
            for j in 0..n {
                let v = m.get(i, j);
                m.set(i, j, v + c * comp.get(i, j));
            }
        }
    }
    m
}

/// A regular subalgebra of `∇̂`, given as a partition of each fiber's atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubalgebraPartition {
    pub blocks: Vec<Vec<Vec<usize>>>,
}

impl SubalgebraPartition {
    pub fn new(b: &Bundle, blocks: Vec<Vec<Vec<usize>>>) -> Result<Self> {
        let p = Self { blocks };
        p.check(b)?;
        Ok(p)
    }

    pub fn singletons(b: &Bundle) -> Self {
        Self { blocks: b.fibers().iter().map(|f| (0..f.atoms()).map(|a| vec![a]).collect()).collect() }
    }

    /// One block per fiber.
    pub fn trivial(b: &Bundle) -> Self {
        Self { blocks: b.fibers().iter().map(|f| vec![(0..f.atoms()).collect()]).collect() }
    }

    pub fn random<R: Rng>(b: &Bundle, rng: &mut R) -> Self {
        let blocks = b
            .fibers()
            .iter()
            .map(|f| {
                let n = f.atoms();
                let k = rng.random_range(1..=n);
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(rng);
                let mut out: Vec<Vec<usize>> = vec![Vec::new(); k];
                for (pos, a) in order.into_iter().enumerate() {
                    let slot = if pos < k { pos } else { rng.random_range(0..k) };
                    out[slot].push(a);
                }
                for block in &mut out {
                    block.sort_unstable();
                }
                out
            })
            .collect();
        Self { blocks }
    }

    pub fn check(&self, b: &Bundle) -> Result<()> {
        if self.blocks.len() != b.base_points() {
            return Err(Error::InvalidPartition(format!(
                "{} fiber partitions for {} fibers",
                self.blocks.len(),
                b.base_points()
            )));
        }
        for (omega, (blocks, fib)) in self.blocks.iter().zip(b.fibers()).enumerate() {
            let mut seen = vec![false; fib.atoms()];
            for block in blocks {
                if block.is_empty() {
                    return Err(Error::InvalidPartition(format!("fiber {omega} has an empty block")));
                }
                for &a in block {
                    if a >= fib.atoms() {
                        return Err(Error::InvalidPartition(format!("fiber {omega}: atom {a} out of range")));
                    }
                    if std::mem::replace(&mut seen[a], true) {
                        return Err(Error::InvalidPartition(format!("fiber {omega}: atom {a} in two blocks")));
                    }
                }
            }
            if let Some(a) = seen.iter().position(|s| !s) {
                return Err(Error::InvalidPartition(format!("fiber {omega}: atom {a} not covered")));
            }
        }
        Ok(())
    }

    /// Block index of every atom, per fiber.
    pub fn labels(&self) -> Vec<Vec<usize>> {
        self.blocks
            .iter()
            .map(|blocks| {
                let n = blocks.iter().map(Vec::len).sum();
                let mut labels = vec![0; n];
                for (k, block) in blocks.iter().enumerate() {
                    for &a in block {
                        labels[a] = k;
                    }
                }
                labels
            })
            .collect()
    }

    pub fn from_json(s: &str, b: &Bundle) -> Result<Self> {
        let p: Self = serde_json::from_str(s)?;
        p.check(b)?;
        Ok(p)
    }
}

/// `E(f̂ | ∇̂⁽¹⁾)`: on each block, the `μ`-weighted mean of `f` over the block.
pub fn conditional_expectation(
    b: &Bundle,
    part: &SubalgebraPartition,
    f: &BundleFunction,
) -> Result<BundleFunction> {
    part.check(b)?;
    f.check_shape(b)?;
    let values = f
        .values
        .iter()
        .zip(b.fibers())
        .zip(&part.blocks)
        .map(|((v, fib), blocks)| {
            let mu = fib.mu();
            let mut out = vec![0.0; v.len()];
            for block in blocks {
                let mut num = 0.0;
                let mut den = 0.0;
                for &a in block {
                    num += v[a] * mu[a];
                    den += mu[a];
                }
                let mean = num / den;
                for &a in block {
                    out[a] = mean;
                }
            }
            out
        })
        .collect();
    Ok(BundleFunction { values })
}
