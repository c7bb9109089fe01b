//! The row-blocked matvec against a site-by-site evaluation of the same
//! stencil, and the flat spectrum against the continuum Landau levels.

use akspec_core::geometry::{build_structure, JFamilySpec};
use akspec_core::quantization::{
    build_operator, dense_eigenpairs, HermitianOperator, LinearOperator, SolverOptions, SpectrumTarget,
};
use akspec_core::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `shift·ψ + Σ_j w⁺(ψ − U ψ(+e_j)) + w⁻(ψ − Ū ψ(−e_j))`, weights from the
/// inverse metric at the edge midpoints.
fn naive_apply(op: &HermitianOperator, x: &[C64]) -> Vec<C64> {
    let s = op.structure();
    let (n, d, h) = (op.grid(), op.dim(), op.spacing());
    let mut y = vec![C64::new(0.0, 0.0); x.len()];
    for (idx, out) in y.iter_mut().enumerate() {
        let c = op.coords(idx);
        let pos = op.position(&c);
        let mut acc = x[idx] * op.shift();
        for j in 0..d {
            let mut f = c.clone();
            f[j] = (c[j] + 1) % n;
            let mut b = c.clone();
            b[j] = (c[j] + n - 1) % n;
            let mut mid = pos.clone();
            mid[j] += 0.5 * h;
            let wp = s.metric_inverse_at(&mid)[(j, j)] / (h * h);
            mid[j] -= h;
            let wm = s.metric_inverse_at(&mid)[(j, j)] / (h * h);
            acc += wp * (x[idx] - op.link(j, &c) * x[op.index(&f)]);
            acc += wm * (x[idx] - op.link(j, &b).conj() * x[op.index(&b)]);
        }
        *out = acc;
    }
    y
}

fn random_vector(len: usize, seed: u64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect()
}

fn compare(spec: JFamilySpec, k: u32, n_grid: usize) {
    let s = build_structure(spec).unwrap();
    let op = build_operator(&s, k, n_grid).unwrap();
    assert!(!op.metadata().mixed_terms);
    let x = random_vector(op.len(), 11);
    let mut fast = vec![C64::new(0.0, 0.0); op.len()];
    op.apply(&x, &mut fast);
    let slow = naive_apply(&op, &x);
    let scale = slow.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let err = fast.iter().zip(&slow).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(err <= 1e-12 * scale, "matvec mismatch {err:e} (scale {scale:e})");
}

#[test]
fn uniform_rows_match_the_site_stencil() {
    // Structure varies along x¹ only, so every contiguous row is uniform.
    compare(JFamilySpec::shear(2, 0.4), 2, 9);
}

#[test]
fn modulated_rows_match_the_site_stencil() {
    let mut spec = JFamilySpec::shear(2, 0.3);
    spec.wave = vec![0, 1, 0, 1];
    spec.phase = 0.7;
    compare(spec, 2, 9);
}

#[test]
fn flat_plane_reproduces_the_landau_ladder() {
    // Continuum levels 2kj with multiplicity k on T² (n = 1).
    let k = 3;
    let s = build_structure(JFamilySpec::flat(1)).unwrap();
    let op = build_operator(&s, k, 36).unwrap();
    let spec = dense_eigenpairs(&op, SpectrumTarget::Count(3 * k as usize), &SolverOptions::default());
    let kf = k as f64;
    for (level, chunk) in spec.eigenvalues.chunks(k as usize).enumerate() {
        let target = 2.0 * kf * level as f64;
        for l in chunk {
            assert!(
                (l - target).abs() <= 0.03 * kf.max(target),
                "level {level}: {l} vs {target}"
            );
        }
    }
}
