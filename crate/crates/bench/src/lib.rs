//! Fixtures shared by the benchmarks in `benches/`.

use erglab_core::rng::stream;
use erglab_core::{generate, Bundle, BundleFunction, FiberedOperator, OperatorKind};

/// A seeded bundle with `atoms` per fiber, a random_strict operator on it and
/// a function with values in `[-1, 1)`.
pub fn fixture(seed: u64, atoms: &[usize]) -> (Bundle, FiberedOperator, BundleFunction) {
    let mut rng = stream(seed, "bench/fixture");
    let b = Bundle::random(&mut rng, atoms).expect("nonempty atom counts");
    let t = generate(&OperatorKind::RandomStrict, seed, &b).expect("random_strict is certificated");
    let f = BundleFunction::random(&b, &mut rng, -1.0, 1.0);
    (b, t, f)
}
