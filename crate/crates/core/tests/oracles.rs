//! Engine outputs against closed forms and independently solved limits.

use std::f64::consts::{PI, TAU};

use erglab_core::engine::{
    cesaro_average, multiparameter_average, oracle_limit, subsequence_average, weighted_average,
    OracleConfig, OracleMethod, OracleMode,
};
use erglab_core::rng::stream;
use erglab_core::{
    generate, Bundle, BundleFunction, FiberedOperator, MultiIndex, OperatorKind, Subsequence, TrigPolynomial,
    TrigTerm, WeightSequence, Window,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

const THETA: f64 = 0.6180339887;

fn cosine(theta: f64) -> WeightSequence {
    WeightSequence::trig(TrigPolynomial::new(1, vec![TrigTerm::one(1.0, theta, 0.0)]).unwrap())
}

/// `Σ_{k=1}^{m} cos(kx)` by the Dirichlet-kernel identity.
fn dirichlet(m: u64, x: f64) -> f64 {
    let m = m as f64;
    (m * x / 2.0).sin() * ((m + 1.0) * x / 2.0).cos() / (x / 2.0).sin()
}

fn swap() -> (Bundle, FiberedOperator, BundleFunction) {
    let b = Bundle::uniform(&[2]).unwrap();
    let t = generate(&OperatorKind::Cyclic, 0, &b).unwrap();
    let f = BundleFunction::new(&b, vec![vec![1.0, -1.0]]).unwrap();
    (b, t, f)
}

#[test]
fn golden_cosine_average_matches_dirichlet_sum() {
    let b = Bundle::uniform(&[1, 3]).unwrap();
    let t = FiberedOperator::identity(&b);
    let f = BundleFunction::ones(&b);
    let w = cosine(THETA);
    for n in [2u64, 10, 1000, 10_000] {
        let a = weighted_average(&t, &f, &w, n, Window::SkipZero).unwrap();
        let expected = dirichlet(n - 1, TAU * THETA) / n as f64;
        for x in a.values.iter().flatten() {
            assert!((x - expected).abs() <= 1e-10, "N = {n}: {x} vs {expected}");
            assert!(x.abs() <= 1.0 / (n as f64 * (PI * THETA).sin()) + 1e-15);
        }
    }
}

#[test]
fn golden_cosine_limit_is_zero() {
    let b = Bundle::uniform(&[4, 20]).unwrap();
    let t = FiberedOperator::identity(&b);
    let f = BundleFunction::ones(&b);
    let w = cosine(THETA);
    let r = oracle_limit(&[t], &f, OracleMode::Weighted(&w), &OracleConfig::default()).unwrap();
    assert!(r.converged());
    assert!(r.limit.values.iter().flatten().all(|x| x.abs() < 1e-12));
    assert_eq!(r.fibers[0].method, OracleMethod::EigenProjection);
}

#[test]
fn alternating_cesaro_sums() {
    let (_, t, f) = swap();
    for n in 1..=64u64 {
        let s = cesaro_average(&t, &f, n, Window::ZeroBased).unwrap();
        let c = if n % 2 == 1 { 1.0 / n as f64 } else { 0.0 };
        assert_eq!(s.values[0], vec![c, -c]);
    }
}

#[test]
fn even_subsequence_of_a_swap_is_the_identity() {
    let (_, t, f) = swap();
    let s = Subsequence::arithmetic(2, 0, 200).unwrap();
    for n in [2u64, 3, 50, 201] {
        let a = subsequence_average(&t, &f, &s, n).unwrap();
        let c = (n - 1) as f64 / n as f64;
        assert_eq!(a.values[0], vec![c, -c]);
    }
}

#[test]
fn two_swaps_sign_count() {
    let (_, t, f) = swap();
    let ts = [t.clone(), t];
    for n1 in 1..=9u64 {
        for n2 in 1..=9u64 {
            // Σ_{k=1}^{n} (−1)^k is −1 for odd n and 0 for even n.
            let s1 = if n1 % 2 == 1 { -1.0 } else { 0.0 };
            let s2 = if n2 % 2 == 1 { -1.0 } else { 0.0 };
            let c = s1 * s2 / (n1 * n2) as f64;
            let s = multiparameter_average(&ts, &f, &MultiIndex::new(vec![n1, n2]).unwrap()).unwrap();
            assert_eq!(s.values[0], vec![c, -c], "n = ({n1}, {n2})");
        }
    }
}

/// Stationary row vector of an irreducible stochastic matrix by a direct solve
/// of `π(I − P) = 0`, `Σπ = 1`.
fn stationary(rows: &[Vec<f64>]) -> Vec<f64> {
    let m = rows.len();
    let mut a = DMatrix::from_fn(m, m, |i, j| (if i == j { 1.0 } else { 0.0 }) - rows[j][i]);
    let mut rhs = DVector::zeros(m);
    for j in 0..m {
        a[(m - 1, j)] = 1.0;
    }
    rhs[m - 1] = 1.0;
    a.lu().solve(&rhs).unwrap().iter().copied().collect()
}

#[test]
fn cesaro_limit_is_the_stationary_mean() {
    for seed in 0..20u64 {
        let mut rng = stream(seed, "tests/perron");
        let m = rng.random_range(2..=10usize);
        let b = Bundle::uniform(&[m]).unwrap();
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                let r: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
                let s: f64 = r.iter().sum();
                r.iter().map(|x| x / s).collect()
            })
            .collect();
        let t = FiberedOperator::from_rows(&b, vec![rows.clone()]).unwrap();
        let f = BundleFunction::random(&b, &mut rng, -1.0, 1.0);
        let pi = stationary(&rows);
        let mean: f64 = pi.iter().zip(f.fiber(0)).map(|(p, x)| p * x).sum();
        let r = oracle_limit(&[t], &f, OracleMode::Cesaro, &OracleConfig::default()).unwrap();
        assert!(r.converged());
        for x in &r.limit.values[0] {
            assert!((x - mean).abs() < 1e-10, "seed {seed}: {x} vs {mean}");
        }
        assert!(r.max_disagreement().unwrap() < 1e-8);
    }
}

#[test]
fn periodic_operator_limit_uses_the_cycle() {
    let b = Bundle::uniform(&[5, 13]).unwrap();
    let t = generate(&OperatorKind::Cyclic, 0, &b).unwrap();
    let f = BundleFunction::random(&b, &mut stream(1, "tests/cycle"), -1.0, 1.0);
    let r = oracle_limit(&[t], &f, OracleMode::Cesaro, &OracleConfig::default()).unwrap();
    assert!(r.converged());
    assert_eq!(r.fibers[1].method, OracleMethod::PeriodCycle);
    for (o, v) in r.limit.values.iter().enumerate() {
        let mean = f.fiber(o).iter().sum::<f64>() / f.fiber(o).len() as f64;
        assert!(v.iter().all(|x| (x - mean).abs() < 1e-12));
    }
    assert!(r.max_disagreement().unwrap() < 1e-12);
}

#[test]
fn multiparameter_limit_composes_projections() {
    // Swap on the first axis, identity on the second: the limit is the fiber mean.
    let (b, t, _) = swap();
    let f = BundleFunction::new(&b, vec![vec![3.0, 1.0]]).unwrap();
    let ts = [t, FiberedOperator::identity(&b)];
    let r = oracle_limit(&ts, &f, OracleMode::Multiparameter, &OracleConfig::default()).unwrap();
    for x in &r.limit.values[0] {
        assert!((x - 2.0).abs() < 1e-12);
    }
}

#[test]
fn cosine_weight_resonates_with_a_swap() {
    // cos(πk) = (−1)^k, so the weighted averages of a swap tend to the
    // projection onto its (−1)-eigenspace: f − mean.
    let (b, t, _) = swap();
    let f = BundleFunction::new(&b, vec![vec![3.0, 1.0]]).unwrap();
    let w = cosine(0.5);
    let r = oracle_limit(std::slice::from_ref(&t), &f, OracleMode::Weighted(&w), &OracleConfig::default()).unwrap();
    assert!((r.limit.values[0][0] - 1.0).abs() < 1e-12);
    assert!((r.limit.values[0][1] + 1.0).abs() < 1e-12);
    let a = weighted_average(&t, &f, &w, 10_001, Window::SkipZero).unwrap();
    assert!(a.max_abs_diff(&r.limit).unwrap() < 1e-3);
}

#[test]
fn clustered_spectrum_gap_terminates() {
    // Four eigenvalues of equal modulus stall an uncapped Schur iteration.
    // Reference gap from LAPACK's general eigenvalue routine.
    let rows: Vec<Vec<f64>> = serde_json::from_str("[[0.3625205226144791,0.021553119820226414,0.14384895795396271,0.06908926064108731,0.1044124091270536,0.15930648926847296,0.034962661039384405,0.10430657953533345],[0.0826280165561081,0.3738347631821809,0.06765684242399442,0.032494925836586884,0.192054983417149,0.0749270220296366,0.1456422462125569,0.03076120034178712],[0.1756800000347576,0.021553119820226414,0.29116373758946335,0.10029533996935164,0.04610443371175805,0.23126168021261823,0.0685385977689832,0.06540309089284145],[0.1756800000347576,0.021553119820226414,0.2088223264854236,0.18263675107339136,0.04610443371175805,0.23126168021261823,0.0685385977689832,0.06540309089284145],[0.18712712803178988,0.08978277654467187,0.06765684242399442,0.032494925836586884,0.3327043699364843,0.0749270220296366,0.1456422462125569,0.06966468898427912],[0.1756800000347576,0.021553119820226414,0.2088223264854236,0.10029533996935164,0.04610443371175805,0.313603091316658,0.0685385977689832,0.06540309089284145],[0.0826280165561081,0.08978277654467187,0.1326302109554553,0.06370100516485121,0.192054983417149,0.14688221297378184,0.26155959404619544,0.03076120034178712],[0.28017911151043934,0.021553119820226414,0.14384895795396271,0.06908926064108731,0.1044124091270536,0.15930648926847296,0.034962661039384405,0.18664799063937318]]").unwrap();
    let m = erglab_core::FiberMatrix::from_rows(rows).unwrap();
    assert!((erglab_core::engine::spectral_gap(&m) - 0.5290150156890707).abs() < 1e-12);
}
