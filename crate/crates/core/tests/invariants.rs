//! Structural invariants under randomized parameters.

use akspec_core::geometry::{build_structure, JFamilySpec};
use akspec_core::quantization::{build_operator, HermitianOperator, LinearOperator};
use akspec_core::C64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn inner(u: &[C64], v: &[C64]) -> C64 {
    HermitianOperator::inner(u, v)
}

fn vector(seed: u64, len: usize) -> Vec<C64> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pointwise_identities_hold_across_the_family(
        eps in 0.0f64..0.6,
        phase in 0.0f64..6.28,
        x in proptest::collection::vec(0.0f64..1.0, 4),
        seed in any::<u64>(),
    ) {
        let mut spec = JFamilySpec::shear(2, eps);
        spec.phase = phase;
        let s = build_structure(spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (trace, contraction) = s.check_trace_identities(&x, 4, &mut rng);
        prop_assert!(trace <= 1e-10, "trace {trace:e}");
        prop_assert!(contraction <= 1e-10, "contraction {contraction:e}");
        prop_assert!(s.curvature_scalars(&x).lemma_residual <= 1e-7);
        // q only depends on x through the structure phase.
        let q = s.q_density(&x);
        let q_rep = s.q_density(&s.point_with_theta(s.theta(&x)));
        prop_assert!((q - q_rep).abs() <= 1e-12 * (1.0 + q.abs()));
        prop_assert!(q <= 1e-15);
    }

    #[test]
    fn phase_classes_partition_the_grid(
        wave in proptest::collection::vec(-2i64..=2, 4),
        n_grid in 2usize..7,
    ) {
        prop_assume!(wave.iter().any(|w| *w != 0));
        let mut spec = JFamilySpec::shear(2, 0.2);
        spec.wave = wave.clone();
        let s = build_structure(spec).unwrap();
        let classes = s.phase_classes(n_grid);
        let total: usize = classes.iter().map(|(_, c)| c).sum();
        prop_assert_eq!(total, n_grid.pow(4));
        // Brute-force multiplicities.
        let n = n_grid as i64;
        let mut brute = vec![0usize; n_grid];
        for i in 0..n_grid.pow(4) {
            let mut r = 0i64;
            let mut rest = i;
            for w in &wave {
                r += w * (rest % n_grid) as i64;
                rest /= n_grid;
            }
            brute[r.rem_euclid(n) as usize] += 1;
        }
        for (x, c) in &classes {
            let r = wave.iter().zip(x).map(|(w, xi)| w * (xi * n_grid as f64).round() as i64).sum::<i64>();
            prop_assert_eq!(*c, brute[r.rem_euclid(n) as usize]);
        }
    }

    #[test]
    fn operator_is_hermitian_and_above_its_lower_bound(
        eps in 0.0f64..0.5,
        k in 1u32..3,
        seed in any::<u64>(),
    ) {
        let s = build_structure(JFamilySpec::shear(1, eps)).unwrap();
        let op = build_operator(&s, k, 12).unwrap();
        let (u, v) = (vector(seed, op.len()), vector(seed ^ 1, op.len()));
        let mut au = vec![C64::new(0.0, 0.0); op.len()];
        let mut av = au.clone();
        op.apply(&u, &mut au);
        op.apply(&v, &mut av);
        let lhs = inner(&u, &av);
        let rhs = inner(&v, &au).conj();
        prop_assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm().max(1.0));
        let rq = inner(&u, &au).re / inner(&u, &u).re;
        prop_assert!(rq >= op.lower_bound() - 1e-9);
        prop_assert!(rq <= op.upper_bound() + 1e-9);
    }
}
