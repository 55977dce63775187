use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;
use serde::Serialize;

use super::averages::check_operators;
use crate::bundle::BundleFunction;
use crate::error::{Error, Result};
use crate::operators::{FiberMatrix, FiberedOperator, Requirement};
use crate::weights::{TrigPolynomial, TrigTerm, WeightSequence};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleConfig {
    /// First power-iteration window start `K`.
    pub k0: u64,
    /// How many times `K` may double before giving up.
    pub max_doublings: u32,
    /// Successive power-iteration estimates must differ by less than this.
    pub tol: f64,
    /// Largest fiber handled by the eigen-projection oracle.
    pub eigen_max_atoms: usize,
    /// Required agreement between the two oracles.
    pub agree_tol: f64,
    /// Longest period looked for by cycle detection.
    pub max_period: usize,
    /// Also run power iteration on fibers the eigen oracle covers, at frequency 0.
    pub cross_check: bool,
    /// `W^H V` condition number above which a fixed space is flagged.
    pub max_condition: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            k0: 100_000,
            max_doublings: 4,
            tol: 1e-10,
            eigen_max_atoms: 12,
            agree_tol: 1e-8,
            max_period: 64,
            cross_check: true,
            max_condition: 1e12,
        }
    }
}

/// Which limit to compute.
#[derive(Debug, Clone, Copy)]
pub enum OracleMode<'a> {
    Cesaro,
    Weighted(&'a WeightSequence),
    Multiparameter,
    WeightedMultiparameter(&'a WeightSequence),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    EigenProjection,
    PowerIteration,
    PeriodCycle,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiberOracle {
    pub method: OracleMethod,
    pub converged: bool,
    pub power_limit: Option<Vec<f64>>,
    pub eigen_limit: Option<Vec<f64>>,
    /// `max |power − eigen|` when both ran.
    pub agreement: Option<f64>,
    pub ill_conditioned: bool,
    /// Smallest spectral gap among the operators on this fiber.
    pub spectral_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub limit: BundleFunction,
    pub fibers: Vec<FiberOracle>,
}

impl OracleReport {
    pub fn converged(&self) -> bool {
        self.fibers.iter().all(|f| f.converged)
    }

    pub fn max_disagreement(&self) -> Option<f64> {
        self.fibers.iter().filter_map(|f| f.agreement).reduce(f64::max)
    }

    pub fn min_spectral_gap(&self) -> f64 {
        self.fibers.iter().map(|f| f.spectral_gap).fold(f64::INFINITY, f64::min)
    }
}

fn to_dmatrix(m: &FiberMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.dim(), m.dim(), |i, j| m.get(i, j))
}

/// Schur sweeps allowed per matrix dimension before a restart.
const SCHUR_SWEEPS_PER_DIM: usize = 500;

/// Eigenvalues by capped real Schur iteration. The unshifted QR iteration can
/// stall on some stochastic matrices, so a stalled attempt is retried on the
/// transpose and then on a Householder reflection of the matrix.
fn eigenvalues(a: &DMatrix<f64>) -> Option<Vec<Complex64>> {
    let n = a.nrows();
    let v = DVector::from_fn(n, |i, _| (i + 1) as f64).normalize();
    let h = DMatrix::identity(n, n) - 2.0 * &v * v.transpose();
    let attempts = [a.clone(), a.transpose(), &h * a * &h];
    attempts.into_iter().find_map(|m| {
        Schur::try_new(m, f64::EPSILON, SCHUR_SWEEPS_PER_DIM * n.max(1))
            .map(|s| s.complex_eigenvalues().iter().copied().collect())
    })
}

/// `1 − max{|λ| : λ ∈ σ(T), |λ − 1| > 1e−8}`; 1 when no other eigenvalue
/// exists, 0 when the eigenvalues cannot be computed.
pub fn spectral_gap(m: &FiberMatrix) -> f64 {
    let Some(eig) = eigenvalues(&to_dmatrix(m)) else { return 0.0 };
    let r = eig
        .iter()
        .filter(|l| (*l - Complex64::new(1.0, 0.0)).norm() > 1e-8)
        .map(|l| l.norm())
        .fold(0.0, f64::max);
    1.0 - r
}

/// Orthonormal basis of `ker a` from right singular vectors, residual-checked.
/// Only `V^H` is used: the left factor of nalgebra's SVD can lose accuracy
/// when singular values cluster.
fn null_space(a: &DMatrix<Complex64>) -> Option<DMatrix<Complex64>> {
    let n = a.nrows();
    let svd = a.clone().svd(false, true);
    let sv = &svd.singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let threshold = 1e-9 * smax.max(1.0);
    let null: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] <= threshold).collect();
    let v_t = svd.v_t.as_ref()?;
    let basis = DMatrix::from_fn(n, null.len(), |i, c| v_t[(null[c], i)].conj());
    if null.is_empty() {
        return Some(basis);
    }
    if (a * &basis).norm() > 10.0 * threshold {
        return None;
    }
    Some(basis)
}

/// Projection onto `ker(I − zT)` along `ran(I − zT)`, with `z = e^{2πiθ}`.
/// `None` when the null-space pairing is too ill-conditioned to invert.
fn eigen_projector(m: &FiberMatrix, theta: f64, max_condition: f64) -> Option<DMatrix<Complex64>> {
    let n = m.dim();
    let z = Complex64::from_polar(1.0, TAU * theta);
    let a = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
        id - z * m.get(i, j)
    });
    let right = null_space(&a)?;
    let left = null_space(&a.adjoint())?;
    if right.ncols() != left.ncols() {
        return None;
    }
    if right.ncols() == 0 {
        return Some(DMatrix::zeros(n, n));
    }
    let pairing = left.adjoint() * &right;
    let ps = pairing.clone().singular_values();
    let (lo, hi) = ps.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    if !(lo > 0.0 && hi / lo <= max_condition) {
        return None;
    }
    let inv = pairing.try_inverse()?;
    Some(right * inv * left.adjoint())
}

/// `Re(e^{iφ} P v)`.
fn apply_projector(p: &DMatrix<Complex64>, v: &[f64], phase: f64) -> Vec<f64> {
    let rot = Complex64::from_polar(1.0, phase);
    (0..v.len())
        .map(|i| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, &x) in v.iter().enumerate() {
                acc += p[(i, j)] * x;
            }
            (rot * acc).re
        })
        .collect()
}

struct PowerResult {
    value: Vec<f64>,
    converged: bool,
    cycle: bool,
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
}

fn cycle_mean(iterates: &[Vec<f64>]) -> Vec<f64> {
    let mut mean = vec![0.0; iterates[0].len()];
    for x in iterates {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    let p = iterates.len() as f64;
    mean.iter_mut().for_each(|m| *m /= p);
    mean
}

/// Looks for `x_{p} ≈ x_0` with `p ≤ max_period`, within `tol` (exact when 0).
fn detect_cycle(m: &FiberMatrix, x0: &[f64], max_period: usize, tol: f64) -> Option<Vec<f64>> {
    let mut iterates = vec![x0.to_vec()];
    for p in 1..=max_period {
        let next = m.apply(iterates.last().expect("nonempty"));
        let closed = if tol == 0.0 { next == x0 } else { max_diff(&next, x0) <= tol };
        if closed {
            return Some(cycle_mean(&iterates[..p]));
        }
        iterates.push(next);
    }
    None
}

/// Limit of `(1/(K+1)) Σ_{k=K}^{2K} cos(2πθk + φ) T^k v` as `K` doubles.
fn power_project(m: &FiberMatrix, v: &[f64], theta: f64, phase: f64, cfg: &OracleConfig) -> PowerResult {
    let scale = phase.cos();
    let scaled = |x: &[f64]| x.iter().map(|v| scale * v).collect::<Vec<f64>>();
    if theta == 0.0 {
        if let Some(mean) = detect_cycle(m, v, cfg.max_period, 0.0) {
            return PowerResult { value: scaled(&mean), converged: true, cycle: true };
        }
    }
    // Once `T x = x` in floating point the tail is constant: its weighted
    // mean is `cos φ · x` at frequency 0 and 0 otherwise.
    let fixed = |x: &[f64]| PowerResult {
        value: if theta == 0.0 { scaled(x) } else { vec![0.0; x.len()] },
        converged: true,
        cycle: false,
    };
    let mut x = v.to_vec();
    let mut next = vec![0.0; v.len()];
    let mut k = 0u64;
    let mut big_k = cfg.k0.max(1);
    while k < big_k {
        m.apply_into(&x, &mut next);
        k += 1;
        if next == x {
            return fixed(&x);
        }
        std::mem::swap(&mut x, &mut next);
    }
    let mut prev: Option<Vec<f64>> = None;
    for _ in 0..=cfg.max_doublings {
        let mut sum = vec![0.0; v.len()];
        loop {
            let w = if theta == 0.0 { scale } else { (TAU * theta * k as f64 + phase).cos() };
            sum.iter_mut().zip(&x).for_each(|(s, xi)| *s += w * xi);
            if k == 2 * big_k {
                break;
            }
            m.apply_into(&x, &mut next);
            k += 1;
            if next == x {
                return fixed(&x);
            }
            std::mem::swap(&mut x, &mut next);
        }
        let est: Vec<f64> = sum.iter().map(|s| s / (big_k + 1) as f64).collect();
        if let Some(p) = &prev {
            if max_diff(p, &est) < cfg.tol {
                return PowerResult { value: est, converged: true, cycle: false };
            }
        }
        prev = Some(est);
        big_k = k;
    }
    if theta == 0.0 {
        let tol = cfg.tol * v.iter().fold(1.0f64, |a, b| a.max(b.abs()));
        if let Some(mean) = detect_cycle(m, &x, cfg.max_period, tol) {
            return PowerResult { value: scaled(&mean), converged: true, cycle: true };
        }
    }
    PowerResult { value: prev.expect("at least one estimate"), converged: false, cycle: false }
}

/// One real projection step `v ↦ Re(e^{iφ} Q_θ v)` along both routes.
struct Step<'a> {
    m: &'a FiberMatrix,
    theta: f64,
    phase: f64,
}

struct Routes {
    eigen: Option<Vec<f64>>,
    eigen_failed: bool,
    power: Option<Vec<f64>>,
    power_converged: bool,
    cycle: bool,
}

fn run_fiber(steps_per_term: &[(f64, Vec<Step<'_>>)], v: &[f64], cfg: &OracleConfig) -> Routes {
    let dim = v.len();
    let eigen_ok = dim <= cfg.eigen_max_atoms;
    let all_zero_freq = steps_per_term.iter().all(|(_, s)| s.iter().all(|st| st.theta == 0.0));
    let mut eigen = if eigen_ok { Some(vec![0.0; dim]) } else { None };
    let mut eigen_failed = false;
    if let Some(acc) = eigen.as_mut() {
        'terms: for (amp, steps) in steps_per_term {
            let mut g = v.to_vec();
            for st in steps {
                match eigen_projector(st.m, st.theta, cfg.max_condition) {
                    Some(p) => g = apply_projector(&p, &g, st.phase),
                    None => {
                        eigen_failed = true;
                        break 'terms;
                    }
                }
            }
            acc.iter_mut().zip(&g).for_each(|(a, x)| *a += amp * x);
        }
    }
    if eigen_failed {
        eigen = None;
    }
    let want_power = eigen.is_none() || (cfg.cross_check && all_zero_freq);
    let mut power = None;
    let mut power_converged = false;
    let mut cycle = false;
    if want_power {
        let mut acc = vec![0.0; dim];
        power_converged = true;
        for (amp, steps) in steps_per_term {
            let mut g = v.to_vec();
            for st in steps {
                let r = power_project(st.m, &g, st.theta, st.phase, cfg);
                power_converged &= r.converged;
                cycle |= r.cycle;
                g = r.value;
            }
            acc.iter_mut().zip(&g).for_each(|(a, x)| *a += amp * x);
        }
        power = Some(acc);
    }
    Routes { eigen, eigen_failed, power, power_converged, cycle }
}

/// Brute-force limit of the chosen averages, fiber by fiber.
pub fn oracle_limit(
    ts: &[FiberedOperator],
    f: &BundleFunction,
    mode: OracleMode<'_>,
    cfg: &OracleConfig,
) -> Result<OracleReport> {
    let multi = matches!(mode, OracleMode::Multiparameter | OracleMode::WeightedMultiparameter(_));
    let ts = if multi { ts } else { ts.get(..1).unwrap_or(ts) };
    check_operators(ts, f, Requirement::Markov)?;
    let d = ts.len();
    let poly = match mode {
        OracleMode::Cesaro | OracleMode::Multiparameter => {
            TrigPolynomial::new(d, vec![TrigTerm::new(1.0, vec![0.0; d], vec![0.0; d])])?
        }
        OracleMode::Weighted(w) | OracleMode::WeightedMultiparameter(w) => {
            if w.dim() != d {
                return Err(Error::Shape(format!("weight has {} variables, expected {d}", w.dim())));
            }
            w.almost_periodic_part()
                .ok_or_else(|| Error::Unsupported("no exact almost-periodic part is known for this weight".into()))?
        }
    };
    let mut values = Vec::with_capacity(f.base_points());
    let mut fibers = Vec::with_capacity(f.base_points());
    for omega in 0..f.base_points() {
        let terms: Vec<(f64, Vec<Step<'_>>)> = poly
            .terms()
            .iter()
            .map(|t| {
                // T_d acts first.
                let steps = (0..d)
                    .rev()
                    .map(|i| Step { m: ts[i].fiber(omega), theta: t.freq[i], phase: t.phase[i] })
                    .collect();
                (t.amp, steps)
            })
            .collect();
        let routes = run_fiber(&terms, f.fiber(omega), cfg);
        let agreement = match (&routes.eigen, &routes.power) {
            (Some(e), Some(p)) => Some(max_diff(e, p)),
            _ => None,
        };
        let (limit, method, converged) = match (&routes.eigen, &routes.power) {
            (Some(e), _) => (e.clone(), OracleMethod::EigenProjection, true),
            (None, Some(p)) => (
                p.clone(),
                if routes.cycle { OracleMethod::PeriodCycle } else { OracleMethod::PowerIteration },
                routes.power_converged,
            ),
            (None, None) => unreachable!("power iteration runs whenever the eigen route is missing"),
        };
        let spectral_gap = ts.iter().map(|t| spectral_gap(t.fiber(omega))).fold(f64::INFINITY, f64::min);
        values.push(limit);
        fibers.push(FiberOracle {
            method,
            converged,
            power_limit: routes.power,
            eigen_limit: routes.eigen,
            agreement,
            ill_conditioned: routes.eigen_failed,
            spectral_gap,
        });
    }
    Ok(OracleReport { limit: BundleFunction { values }, fibers })
}
