//! Acceptance run: every criterion at its stated tolerance, one line each.
//! Exits nonzero if any criterion fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use erglab_core::engine::{
    cesaro_average, oracle_limit, running_maximal, spectral_gap, weighted_average, MaximalMode, OracleConfig,
    OracleMode, Schedule, Window,
};
use erglab_core::rng::{stream, Stream};
use erglab_core::{
    bundle_inf, bundle_sup, conditional_expectation, generate, integral, lp_norm, order_convergence_report, Bundle,
    BundleFunction, FiberedOperator, OperatorKind, SubalgebraPartition, Subsequence, TrigPolynomial, TrigTerm,
    WeightSequence,
};
use rand::Rng;
use rayon::prelude::*;

const GOLDEN: f64 = 0.618_033_988_749_894_9;
const SILVER: f64 = 0.414_213_562_373_095_1;
const PLASTIC: f64 = 0.324_717_957_244_746;
const SLACK: f64 = 1e-10;

struct Outcome {
    id: &'static str,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn random_bundle(rng: &mut Stream, base: &[usize], max_atoms: usize) -> Bundle {
    let b = base[rng.random_range(0..base.len())];
    let atoms: Vec<usize> = (0..b).map(|_| rng.random_range(1..=max_atoms)).collect();
    Bundle::random(rng, &atoms).unwrap()
}

const KINDS: [OperatorKind; 4] =
    [OperatorKind::Identity, OperatorKind::Cyclic, OperatorKind::RandomMarkov, OperatorKind::RandomStrict];

fn random_operator(rng: &mut Stream, b: &Bundle) -> FiberedOperator {
    let kind = &KINDS[rng.random_range(0..KINDS.len())];
    generate(kind, rng.random(), b).unwrap()
}

fn trig(theta: f64) -> WeightSequence {
    WeightSequence::trig(TrigPolynomial::new(1, vec![TrigTerm::one(1.0, theta, 0.0)]).unwrap())
}

fn sup_abs(f: &BundleFunction) -> f64 {
    f.values.iter().flatten().fold(0.0, |a, x| a.max(x.abs()))
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// Global apply against per-fiber apply and a left-to-right dot product.
fn fiberwise_decomposition() -> Outcome {
    let start = Instant::now();
    let mismatches: usize = (0..200u64)
        .into_par_iter()
        .map(|seed| {
            let mut rng = stream(seed, "acceptance/decomposition");
            let b = random_bundle(&mut rng, &[1, 3, 5], 8);
            let t = random_operator(&mut rng, &b);
            let f = BundleFunction::random(&b, &mut rng, -1.0, 1.0);
            let global = t.apply(&f).unwrap();
            let mut bad = 0;
            for omega in 0..b.base_points() {
                let local_f = BundleFunction::new(&b.restrict(omega), vec![f.fiber(omega).to_vec()]).unwrap();
                let local = t.restrict(omega).apply(&local_f).unwrap();
                let m = t.fiber(omega);
                let dot: Vec<f64> = (0..m.dim())
                    .map(|i| (0..m.dim()).fold(0.0, |acc, j| acc + m.get(i, j) * f.fiber(omega)[j]))
                    .collect();
                let same = |u: &[f64], v: &[f64]| u.iter().zip(v).all(|(x, y)| x.to_bits() == y.to_bits());
                if !same(global.fiber(omega), local.fiber(0)) || !same(global.fiber(omega), &dot) {
                    bad += 1;
                }
            }
            bad
        })
        .sum();
    let s = secs(start);
    Outcome {
        id: "1",
        name: "fiberwise decomposition",
        pass: mismatches == 0 && s < 5.0,
        detail: format!("200 instances, {mismatches} fiber mismatches, {s:.2} s (limit 5 s)"),
    }
}

fn maximal_sweep(label: &str, n: u64, mode: impl Fn(&mut Stream) -> (MaximalMode, Schedule) + Sync) -> (f64, usize) {
    let ratios: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|seed| {
            let mut rng = stream(seed, label);
            let b = random_bundle(&mut rng, &[1, 3, 5], 8);
            let t = random_operator(&mut rng, &b);
            let f = BundleFunction::random(&b, &mut rng, -1.0, 1.0);
            let p = [1.5, 2.0, 4.0][(seed % 3) as usize];
            let (mode, schedule) = mode(&mut rng);
            running_maximal(&[t], &b, &f, &schedule, &mode, p).unwrap().max_ratio()
        })
        .collect();
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    (worst, ratios.iter().filter(|r| !(**r <= 1.0 + SLACK)).count())
}

fn cesaro_maximal() -> Outcome {
    let start = Instant::now();
    let (worst, bad) =
        maximal_sweep("acceptance/cesaro", 1000, |_| (MaximalMode::Cesaro, Schedule::dyadic(1 << 12, true).unwrap()));
    let s = secs(start);
    Outcome {
        id: "2",
        name: "Cesàro maximal inequality",
        pass: bad == 0 && s < 60.0,
        detail: format!("1000 instances, max ratio {worst:.6}, {bad} above 1 + 1e-10, {s:.2} s (limit 60 s)"),
    }
}

fn weighted_maximal() -> Outcome {
    let start = Instant::now();
    let (w_worst, w_bad) = maximal_sweep("acceptance/weighted", 1000, |_| {
        (MaximalMode::Weighted(trig(GOLDEN)), Schedule::dyadic(1 << 12, false).unwrap())
    });
    let s2k = Subsequence::arithmetic(2, 0, (1 << 12) - 1).unwrap();
    let (s_worst, s_bad) = maximal_sweep("acceptance/subsequence", 1000, |_| {
        (MaximalMode::Subsequence(s2k.clone()), Schedule::dyadic(1 << 12, false).unwrap())
    });
    let s = secs(start);
    Outcome {
        id: "3",
        name: "weighted maximal inequality",
        pass: w_bad == 0 && s_bad == 0,
        detail: format!(
            "golden trig: max ratio {w_worst:.6}, {w_bad} above bound; j_k = 2k: max ratio {s_worst:.6}, {s_bad} above bound; {s:.2} s"
        ),
    }
}

fn multiparameter_maximal() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for (d, h) in [(2usize, 64u64), (3, 16)] {
        let schedule = Schedule::dyadic_grid(&vec![h; d]).unwrap();
        let thetas = [GOLDEN, SILVER, PLASTIC];
        for weighted in [None, Some(false), Some(true)] {
            let ratios: Vec<f64> = (0..100u64)
                .into_par_iter()
                .map(|seed| {
                    let mut rng = stream(seed, &format!("acceptance/multi/d{d}"));
                    let b = random_bundle(&mut rng, &[1, 3, 5], 8);
                    let ts: Vec<FiberedOperator> = (0..d).map(|_| random_operator(&mut rng, &b)).collect();
                    let f = BundleFunction::random(&b, &mut rng, -1.0, 1.0);
                    let mode = match weighted {
                        None => MaximalMode::Multiparameter,
                        // Product of one-variable trig weights.
                        Some(false) => MaximalMode::WeightedMultiparameter(
                            WeightSequence::product(thetas[..d].iter().map(|&t| trig(t)).collect()).unwrap(),
                        ),
                        // One d-variable trig term, averaged by enumeration.
                        Some(true) => {
                            let phase: f64 = rng.random_range(0.0..1.0);
                            let mut ph = vec![0.0; d];
                            ph[0] = TAU * phase;
                            let term = TrigTerm::new(0.75, thetas[..d].to_vec(), ph);
                            MaximalMode::WeightedMultiparameter(WeightSequence::trig(
                                TrigPolynomial::new(d, vec![term]).unwrap(),
                            ))
                        }
                    };
                    running_maximal(&ts, &b, &f, &schedule, &mode, 2.0).unwrap().max_ratio()
                })
                .collect();
            let worst = ratios.iter().copied().fold(0.0, f64::max);
            let bad = ratios.iter().filter(|r| !(**r <= 1.0 + SLACK)).count();
            pass &= bad == 0;
            let what = match weighted {
                None => "q^d",
                Some(false) => "b·q^d product",
                Some(true) => "b·q^d joint",
            };
            parts.push(format!("d={d} {what}: max {worst:.6} ({bad} bad)"));
        }
    }
    let s = secs(start);
    Outcome {
        id: "4",
        name: "multiparameter bound",
        pass: pass && s < 120.0,
        detail: format!("{}; {s:.2} s (limit 120 s)", parts.join(", ")),
    }
}

/// `Re Σ_{k=1}^{m} e^{i(2πθk + φ)}` by the geometric series.
fn exp_sum(theta: f64, phase: f64, m: u64) -> f64 {
    let x = TAU * theta;
    let m = m as f64;
    // Σ z^k = z(1 − z^m)/(1 − z) with z = e^{ix}; multiply by e^{iφ}.
    let (zr, zi) = (x.cos(), x.sin());
    let (zmr, zmi) = ((m * x).cos(), (m * x).sin());
    let (nr, ni) = (1.0 - zmr, -zmi);
    let (dr, di) = (1.0 - zr, -zi);
    let den = dr * dr + di * di;
    let (qr, qi) = ((nr * dr + ni * di) / den, (ni * dr - nr * di) / den);
    let (sr, si) = (zr * qr - zi * qi, zr * qi + zi * qr);
    phase.cos() * sr - phase.sin() * si
}

fn convergence() -> Outcome {
    let start = Instant::now();
    let n: u64 = 1 << 14;
    let cfg = OracleConfig::default();
    let mut seed = 0u64;
    let mut instances = Vec::new();
    while instances.len() < 100 {
        let mut rng = stream(seed, "acceptance/convergence");
        seed += 1;
        let b = random_bundle(&mut rng, &[1, 3, 5], 8);
        let t = generate(&OperatorKind::RandomStrict, rng.random(), &b).unwrap();
        if t.matrices().iter().all(|m| spectral_gap(m) >= 0.1) {
            let f = BundleFunction::random(&b, &mut rng, -1.0, 1.0);
            instances.push((b, t, f));
        }
    }
    let results: Vec<(f64, f64)> = instances
        .par_iter()
        .map(|(_, t, f)| {
            let limit = oracle_limit(std::slice::from_ref(t), f, OracleMode::Cesaro, &cfg).unwrap().limit;
            let s = cesaro_average(t, f, n, Window::ZeroBased).unwrap();
            let dev = s.max_abs_diff(&limit).unwrap();
            // n(I − T)(s_n − L) = g − T^n g with g = f − L, so
            // ‖s_n − L‖_∞ ≥ ‖g − T^n g‖_∞ / (2n) for any sub-Markov T.
            let g = f.sub(&limit).unwrap();
            let lower = sup_abs(&g.sub(&t.power_apply(&g, n).unwrap()).unwrap()) / (2.0 * n as f64);
            (dev, lower)
        })
        .collect();
    let worst = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let best = results.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let above = results.iter().filter(|r| !(r.0 < 1e-6)).count();
    let forced = results.iter().filter(|r| r.1 >= 1e-6).count();
    let cesaro_ok = above == 0;

    let mut closed_worst = 0.0f64;
    for (i, &(theta, phase)) in [(GOLDEN, 0.0), (SILVER, 0.3), (PLASTIC, 1.1), (0.1, 0.0), (1.0 / 3.0, 2.0)].iter().enumerate() {
        let b = Bundle::uniform(&[1, 3, 5]).unwrap();
        let f = BundleFunction::random(&b, &mut stream(i as u64, "acceptance/closed-form"), -1.0, 1.0);
        let w = WeightSequence::trig(TrigPolynomial::new(1, vec![TrigTerm::new(1.0, vec![theta], vec![phase])]).unwrap());
        let big_n = 10_000u64;
        let a = weighted_average(&FiberedOperator::identity(&b), &f, &w, big_n, Window::SkipZero).unwrap();
        let c = exp_sum(theta, phase, big_n - 1) / big_n as f64;
        closed_worst = closed_worst.max(a.max_abs_diff(&f.scale(c)).unwrap());
    }
    let closed_ok = closed_worst <= 1e-10;
    let s = secs(start);
    Outcome {
        id: "5",
        name: "convergence vs oracle",
        pass: cesaro_ok && closed_ok,
        detail: format!(
            "Cesàro tail at n = 2^14: {} ({above}/100 at or above 1e-6, dev range [{best:.2e}, {worst:.2e}], \
             {forced}/100 provably ≥ 1e-6 by the (I − T) lower bound); \
             trig closed form at N = 1e4: {} (max error {closed_worst:.2e}, limit 1e-10); {s:.2} s",
            if cesaro_ok { "pass" } else { "FAIL" },
            if closed_ok { "pass" } else { "FAIL" },
        ),
    }
}

fn conditional_expectation_axioms() -> Outcome {
    let failures: Vec<String> = (0..200u64)
        .into_par_iter()
        .filter_map(|seed| {
            let mut rng = stream(seed, "acceptance/conditional");
            let b = random_bundle(&mut rng, &[1, 3, 5], 8);
            let part = SubalgebraPartition::random(&b, &mut rng);
            let f = BundleFunction::random(&b, &mut rng, -1.0, 1.0);
            let labels = part.labels();
            let g_vals: Vec<Vec<f64>> = labels
                .iter()
                .map(|ls| {
                    let blocks: Vec<f64> =
                        (0..=ls.iter().copied().max().unwrap()).map(|_| rng.random_range(-2.0..2.0)).collect();
                    ls.iter().map(|&l| blocks[l]).collect()
                })
                .collect();
            let g = BundleFunction::new(&b, g_vals).unwrap();
            let e = |h: &BundleFunction| conditional_expectation(&b, &part, h).unwrap();
            let ef = e(&f);
            let tol = |scale: f64| 1e-12 * scale.max(1.0);
            let close = |u: &BundleFunction, v: &BundleFunction| {
                u.values.iter().zip(&v.values).all(|(x, y)| {
                    let scale = x.iter().chain(y).fold(0.0f64, |a, z| a.max(z.abs()));
                    x.iter().zip(y).all(|(p, q)| (p - q).abs() <= tol(scale))
                })
            };
            let mut bad = Vec::new();
            if !close(&e(&ef), &ef) {
                bad.push("idempotence");
            }
            if !e(&f.abs()).is_nonnegative() {
                bad.push("positivity");
            }
            let (i_ef, i_f) = (integral(&b, &ef).unwrap(), integral(&b, &f).unwrap());
            let mass = |fib: &erglab_core::Fiber| fib.total_mass();
            if !i_ef.values.iter().zip(&i_f.values).zip(b.fibers()).all(|((x, y), fib)| (x - y).abs() <= tol(mass(fib))) {
                bad.push("mass preservation");
            }
            if !close(&e(&g.mul(&f).unwrap()), &g.mul(&ef).unwrap()) {
                bad.push("module property");
            }
            let one = BundleFunction::ones(&b);
            if !close(&e(&one), &one) {
                bad.push("E(1) = 1");
            }
            let (n_ef, n_f) = (lp_norm(&b, &ef, 1.0).unwrap(), lp_norm(&b, &f, 1.0).unwrap());
            if !n_ef.values.iter().zip(&n_f.values).all(|(x, y)| *x <= y + tol(*y)) {
                bad.push("L1 contraction");
            }
            (!bad.is_empty()).then(|| format!("seed {seed}: {}", bad.join(", ")))
        })
        .collect();
    Outcome {
        id: "6",
        name: "conditional expectation axioms",
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            "200 triples, all six properties within 1e-12".into()
        } else {
            format!("{} failing triples, first: {}", failures.len(), failures[0])
        },
    }
}

fn order_structure() -> Outcome {
    let mut mismatches = 0usize;
    for seed in 0..500u64 {
        let mut rng = stream(seed, "acceptance/order");
        let b = random_bundle(&mut rng, &[1, 3, 5], 8);
        let k = rng.random_range(1..=6);
        let fs: Vec<BundleFunction> = (0..k).map(|_| BundleFunction::random(&b, &mut rng, -1.0, 1.0)).collect();
        let (sup, inf) = (bundle_sup(&fs).unwrap(), bundle_inf(&fs).unwrap());
        for omega in 0..b.base_points() {
            let local: Vec<BundleFunction> = fs
                .iter()
                .map(|f| BundleFunction::new(&b.restrict(omega), vec![f.fiber(omega).to_vec()]).unwrap())
                .collect();
            let (ls, li) = (bundle_sup(&local).unwrap(), bundle_inf(&local).unwrap());
            for a in 0..b.fiber(omega).atoms() {
                let col = fs.iter().map(|f| f.fiber(omega)[a]);
                let hi = col.clone().fold(f64::NEG_INFINITY, f64::max);
                let lo = col.fold(f64::INFINITY, f64::min);
                let exact = |x: f64, y: f64| x.to_bits() == y.to_bits();
                if !(exact(sup.fiber(omega)[a], hi)
                    && exact(inf.fiber(omega)[a], lo)
                    && exact(ls.fiber(0)[a], hi)
                    && exact(li.fiber(0)[a], lo))
                {
                    mismatches += 1;
                }
            }
        }
    }

    // f_m = f + (1/m)·1: t_n against 1/n.
    let h = 512usize;
    let b = Bundle::uniform(&[1, 3, 5]).unwrap();
    let mut exact_zero = true;
    let mut bitwise_oracle = true;
    let mut worst_rel = 0.0f64;
    for (i, f) in [BundleFunction::zeros(&b), BundleFunction::random(&b, &mut stream(0, "acceptance/order-tail"), -1.0, 1.0)]
        .iter()
        .enumerate()
    {
        let seq: Vec<BundleFunction> = (1..=h).map(|m| f.map(|x| x + 1.0 / m as f64)).collect();
        let r = order_convergence_report(&seq, f, 0.5).unwrap();
        let sup_f = sup_abs(f);
        for n in 1..=h {
            let t = r.tail[n - 1];
            if i == 0 {
                exact_zero &= t.to_bits() == (1.0 / n as f64).to_bits();
            }
            let oracle = (n..=h)
                .flat_map(|m| f.values.iter().flatten().map(move |x| ((x + 1.0 / m as f64) - x).abs()))
                .fold(0.0f64, f64::max);
            bitwise_oracle &= t.to_bits() == oracle.to_bits();
            // fl(x + 1/m) − x is 1/m up to one rounding of |x| + 1/m.
            worst_rel = worst_rel.max((t - 1.0 / n as f64).abs() / (f64::EPSILON * (sup_f + 1.0)));
        }
    }
    let tail_ok = exact_zero && bitwise_oracle && worst_rel <= 1.0;
    Outcome {
        id: "7",
        name: "order structure",
        pass: mismatches == 0 && tail_ok,
        detail: format!(
            "500 families, {mismatches} sup/inf mismatches; tail curve: f = 0 gives exactly 1/n: {exact_zero}, \
             matches floating-point sup bitwise: {bitwise_oracle}, |t_n − 1/n| ≤ {worst_rel:.2}·ε·(‖f‖∞ + 1)"
        ),
    }
}

fn oracle_cross_validation() -> Outcome {
    let cfg = OracleConfig { eigen_max_atoms: 12, cross_check: true, ..OracleConfig::default() };
    let results: Vec<(usize, usize, f64)> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let mut rng = stream(seed, "acceptance/cross");
            let b = random_bundle(&mut rng, &[1, 3, 5], 12);
            let t = random_operator(&mut rng, &b);
            let f = BundleFunction::random(&b, &mut rng, -1.0, 1.0);
            let r = oracle_limit(&[t], &f, OracleMode::Cesaro, &cfg).unwrap();
            let compared = r.fibers.iter().filter(|o| o.agreement.is_some()).count();
            let worst = r.fibers.iter().filter_map(|o| o.agreement).fold(0.0, f64::max);
            (r.fibers.len(), compared, worst)
        })
        .collect();
    let fibers: usize = results.iter().map(|r| r.0).sum();
    let compared: usize = results.iter().map(|r| r.1).sum();
    let worst = results.iter().map(|r| r.2).fold(0.0, f64::max);
    Outcome {
        id: "8",
        name: "oracle cross-validation",
        pass: compared == fibers && worst <= 1e-8,
        detail: format!("100 seeds, {compared}/{fibers} fibers cross-checked, max disagreement {worst:.2e} (limit 1e-8)"),
    }
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let start = Instant::now();
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let tmp = tempfile::tempdir().unwrap();
    let mut parts = Vec::new();
    let mut pass = true;
    for name in ["cesaro_p2", "besicovich_p2", "multi_d2_p2"] {
        let cfg = configs.join(format!("{name}.json"));
        let mut snaps = Vec::new();
        let mut codes = Vec::new();
        for run in 0..2 {
            let out = tmp.path().join(format!("{name}-{run}"));
            let status = Command::new(env!("CARGO_BIN_EXE_erglab"))
                .arg("run")
                .arg(&cfg)
                .arg("--out")
                .arg(&out)
                .arg("--quiet")
                .status()
                .unwrap();
            codes.push(status.code().unwrap_or(-1));
            snaps.push(snapshot(&out));
        }
        let same = snaps[0] == snaps[1] && !snaps[0].is_empty();
        pass &= same;
        parts.push(format!("{name}: {} (exit {:?})", if same { "identical" } else { "DIFFERENT" }, codes));
    }
    let s = secs(start);
    Outcome {
        id: "9",
        name: "determinism",
        pass: pass && s < 300.0,
        detail: format!("{}; {s:.2} s (limit 300 s)", parts.join(", ")),
    }
}

fn main() {
    let criteria: [fn() -> Outcome; 9] = [
        fiberwise_decomposition,
        cesaro_maximal,
        weighted_maximal,
        multiparameter_maximal,
        convergence,
        conditional_expectation_axioms,
        order_structure,
        oracle_cross_validation,
        determinism,
    ];
    let mut failed = Vec::new();
    for c in criteria {
        let o = c();
        println!("{} [{}] {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.id, o.name, o.detail);
        if !o.pass {
            failed.push(o.id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 9 criteria pass");
    } else {
        println!("acceptance: {} of 9 criteria fail: {}", failed.len(), failed.join(", "));
        std::process::exit(1);
    }
}
