//! Chebyshev-filtered subspace iteration for the low end of a Hermitian
//! spectrum.
//!
//! Each sweep applies a scaled Chebyshev polynomial that damps the interval
//! `[a, b]` above the current block (`a` the largest Ritz value, `b` an upper
//! bound of the spectrum), re-orthonormalizes with shifted Cholesky QR and
//! performs a Rayleigh–Ritz step. Converged leading vectors are locked and no
//! longer filtered. Vectors are stored column by column; Gram products and
//! rotations are blocked over rows so each sweep reads the block a handful of
//! times.

use crate::C64;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::time::Instant;

/// A Hermitian operator accessible through matrix-vector products.
pub trait LinearOperator: Sync {
    fn len(&self) -> usize;
    fn apply(&self, x: &[C64], y: &mut [C64]);
    /// A lower bound for the spectrum.
    fn lower_bound(&self) -> f64;
    /// An upper bound for the spectrum.
    fn upper_bound(&self) -> f64;

    /// `out = α·A y + β·y + γ·prev`; operators may fuse this into the product.
    fn apply_combine(&self, y: &[C64], prev: &[C64], alpha: f64, beta: f64, gamma: f64, out: &mut [C64]) {
        self.apply(y, out);
        for ((o, yi), xi) in out.iter_mut().zip(y).zip(prev) {
            *o = *o * alpha + yi * beta + xi * gamma;
        }
    }

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Dense Hermitian matrix, mostly for solver tests.
#[derive(Clone, Debug)]
pub struct DenseHermitian {
    m: DMatrix<C64>,
    lo: f64,
    hi: f64,
}

impl DenseHermitian {
    pub fn new(m: DMatrix<C64>) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..m.nrows() {
            let off: f64 = (0..m.ncols()).filter(|j| *j != i).map(|j| m[(i, j)].norm()).sum();
            lo = lo.min(m[(i, i)].re - off);
            hi = hi.max(m[(i, i)].re + off);
        }
        Self { m, lo, hi }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        Self::new(DMatrix::from_fn(values.len(), values.len(), |i, j| {
            if i == j {
                C64::new(values[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        }))
    }
}

impl LinearOperator for DenseHermitian {
    fn len(&self) -> usize {
        self.m.nrows()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = (0..x.len()).map(|j| self.m[(i, j)] * x[j]).sum();
        }
    }

    fn lower_bound(&self) -> f64 {
        self.lo
    }

    fn upper_bound(&self) -> f64 {
        self.hi
    }
}

/// What to compute.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpectrumTarget {
    /// The lowest `n` eigenvalues.
    Count(usize),
    /// Every eigenvalue below the threshold.
    Below(f64),
    /// The lowest `n` eigenvalues, plus the next Ritz value as an estimate of
    /// the edge above them. Only the first `n` are converged; the estimate
    /// carries its own residual `r`, so the edge lies within `r` of it.
    CountWithEdge(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    /// Residual tolerance relative to the norm estimate.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Extra columns carried beyond the requested count (at least 8).
    pub guard: usize,
    /// Columns per blocked matvec in the Rayleigh–Ritz step.
    pub block: usize,
    pub max_degree: usize,
    /// Problems up to this size are solved densely.
    pub dense_limit: usize,
    pub keep_vectors: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 300,
            seed: 20240901,
            guard: 16,
            block: 8,
            max_degree: 60,
            dense_limit: 600,
            keep_vectors: false,
        }
    }
}

/// Sorted low-lying eigenvalues with residual norms `‖Av − λv‖`.
#[derive(Clone, Debug, Serialize)]
pub struct SpectrumResult {
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub matvecs: usize,
    pub wall_time_s: f64,
    /// False when the iteration budget ran out; residuals then show what was
    /// achieved.
    pub converged: bool,
    pub norm_estimate: f64,
    pub tolerance: f64,
    /// Trailing entries that are unconverged edge estimates.
    pub edge_estimates: usize,
    #[serde(skip)]
    pub vectors: Option<Vec<Vec<C64>>>,
}

impl SpectrumResult {
    /// Largest residual over the converged entries.
    pub fn max_residual(&self) -> f64 {
        let n = self.residuals.len() - self.edge_estimates;
        self.residuals[..n].iter().cloned().fold(0.0, f64::max)
    }
}

const ROW_BLOCK: usize = 512;

fn zeros(n: usize) -> Vec<C64> {
    vec![C64::new(0.0, 0.0); n]
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Copies rows `r0..r0 + w` of every column into `buf`, column after column.
fn gather(cols: &[Vec<C64>], r0: usize, w: usize, buf: &mut Vec<C64>) {
    buf.clear();
    for c in cols {
        buf.extend_from_slice(&c[r0..r0 + w]);
    }
}

/// `C ← α·op(A)·B + β·C` on column-major blocks via the complex GEMM kernel.
#[allow(clippy::too_many_arguments)]
fn zgemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: C64,
    a: &[C64],
    (rsa, csa): (usize, usize),
    b: &[C64],
    (rsb, csb): (usize, usize),
    beta: C64,
    c: &mut [C64],
    (rsc, csc): (usize, usize),
) {
    use matrixmultiply::CGemmOption;
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: C64 is `repr(C)` with layout `[f64; 2]`, and every index reached
    // by the strides lies inside the slices (checked by the callers' sizes).
    unsafe {
        matrixmultiply::zgemm(
            CGemmOption::Standard,
            CGemmOption::Standard,
            m,
            k,
            n,
            [alpha.re, alpha.im],
            a.as_ptr() as *const [f64; 2],
            rsa as isize,
            csa as isize,
            b.as_ptr() as *const [f64; 2],
            rsb as isize,
            csb as isize,
            [beta.re, beta.im],
            c.as_mut_ptr() as *mut [f64; 2],
            rsc as isize,
            csc as isize,
        );
    }
}

const ONE: C64 = C64::new(1.0, 0.0);
const ZERO: C64 = C64::new(0.0, 0.0);

/// `X^* Y`.
fn gram(xs: &[Vec<C64>], ys: &[Vec<C64>]) -> DMatrix<C64> {
    let n = xs.first().map_or(0, |v| v.len());
    let (px, py) = (xs.len(), ys.len());
    let mut g = DMatrix::<C64>::zeros(px, py);
    let (mut bx, mut by) = (Vec::new(), Vec::new());
    let mut r0 = 0;
    while r0 < n {
        let w = ROW_BLOCK.min(n - r0);
        gather(xs, r0, w, &mut bx);
        bx.iter_mut().for_each(|z| *z = z.conj());
        gather(ys, r0, w, &mut by);
        // Xᴴ(i, s) = bx[i·w + s] after conjugation; Y(s, j) = by[j·w + s].
        zgemm(px, w, py, ONE, &bx, (w, 1), &by, (1, w), ONE, g.as_mut_slice(), (1, px));
        r0 += w;
    }
    g
}

/// `X ← X Q` for square `Q`.
fn rotate(xs: &mut [Vec<C64>], q: &DMatrix<C64>) {
    let p = xs.len();
    assert_eq!(q.nrows(), p);
    let qc = q.ncols();
    assert!(qc <= p);
    let n = xs.first().map_or(0, |v| v.len());
    let mut bx = Vec::new();
    let mut out = vec![ZERO; qc * ROW_BLOCK];
    let mut r0 = 0;
    while r0 < n {
        let w = ROW_BLOCK.min(n - r0);
        gather(xs, r0, w, &mut bx);
        zgemm(w, p, qc, ONE, &bx, (1, w), q.as_slice(), (1, p), ZERO, &mut out, (1, w));
        for c in 0..qc {
            xs[c][r0..r0 + w].copy_from_slice(&out[c * w..c * w + w]);
        }
        r0 += w;
    }
}

/// `Y ← Y − L C`.
fn subtract_product(ys: &mut [Vec<C64>], ls: &[Vec<C64>], c: &DMatrix<C64>) {
    let n = ys.first().map_or(0, |v| v.len());
    let (pl, py) = (ls.len(), ys.len());
    let (mut bl, mut by) = (Vec::new(), Vec::new());
    let mut r0 = 0;
    while r0 < n {
        let w = ROW_BLOCK.min(n - r0);
        gather(ls, r0, w, &mut bl);
        gather(ys, r0, w, &mut by);
        zgemm(
            w,
            pl,
            py,
            -ONE,
            &bl,
            (1, w),
            c.as_slice(),
            (1, pl),
            ONE,
            &mut by,
            (1, w),
        );
        for j in 0..py {
            ys[j][r0..r0 + w].copy_from_slice(&by[j * w..j * w + w]);
        }
        r0 += w;
    }
}

fn hermitize(m: &mut DMatrix<C64>) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)] = C64::new(m[(i, i)].re, 0.0);
        for j in i + 1..n {
            let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
    }
}

/// One Cholesky QR pass. With `shifted`, `G + sI` is factored instead, which
/// always succeeds and leaves a well-conditioned block for a plain pass.
fn cholqr_pass(ys: &mut [Vec<C64>], shifted: bool) -> bool {
    let p = ys.len();
    let n = ys.first().map_or(0, |v| v.len());
    let mut g = gram(ys, ys);
    hermitize(&mut g);
    if shifted {
        let tr: f64 = (0..p).map(|i| g[(i, i)].re).sum();
        let s = 11.0 * ((n * p + p * (p + 1)) as f64) * f64::EPSILON * tr;
        for i in 0..p {
            g[(i, i)] += C64::new(s, 0.0);
        }
    }
    let Some(ch) = nalgebra::Cholesky::new(g) else {
        return false;
    };
    let l = ch.l();
    let Some(l_inv) = l.try_inverse() else {
        return false;
    };
    if l_inv.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return false;
    }
    // X = Q R with R = Lᴴ, so Q = X (Lᴴ)⁻¹ = X (L⁻¹)ᴴ.
    rotate(ys, &l_inv.adjoint());
    true
}

fn orthonormalize(ys: &mut [Vec<C64>], rng: &mut ChaCha8Rng) {
    for y in ys.iter_mut() {
        let nr = norm(y);
        if nr > 0.0 && nr.is_finite() {
            let inv = 1.0 / nr;
            y.iter_mut().for_each(|z| *z *= inv);
        } else {
            y.iter_mut()
                .for_each(|z| *z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        }
    }
    if !cholqr_pass(ys, false) {
        assert!(cholqr_pass(ys, true), "shifted Cholesky QR failed");
        assert!(cholqr_pass(ys, false) || cholqr_pass(ys, true));
    }
    if !cholqr_pass(ys, false) {
        assert!(cholqr_pass(ys, true), "shifted Cholesky QR failed");
    }
}

/// Removes the span of the orthonormal `ls` from `ys` (twice, for accuracy).
fn project_out(ys: &mut [Vec<C64>], ls: &[Vec<C64>]) {
    if ls.is_empty() {
        return;
    }
    for _ in 0..2 {
        let c = gram(ls, ys);
        subtract_product(ys, ls, &c);
    }
}

struct Counter<'a, A: LinearOperator + ?Sized> {
    op: &'a A,
    count: usize,
}

impl<A: LinearOperator + ?Sized> Counter<'_, A> {
    fn apply(&mut self, x: &[C64], y: &mut [C64]) {
        self.count += 1;
        self.op.apply(x, y);
    }

    fn combine(&mut self, y: &[C64], prev: &[C64], alpha: f64, beta: f64, gamma: f64, out: &mut [C64]) {
        self.count += 1;
        self.op.apply_combine(y, prev, alpha, beta, gamma, out);
    }
}

/// Rayleigh–Ritz on the orthonormal block: rotates it onto Ritz vectors and
/// returns ascending Ritz values.
fn rayleigh_ritz<A: LinearOperator + ?Sized>(a: &mut Counter<A>, ys: &mut [Vec<C64>], block: usize) -> Vec<f64> {
    let p = ys.len();
    let n = a.op.len();
    let mut h = DMatrix::<C64>::zeros(p, p);
    let mut ws: Vec<Vec<C64>> = Vec::new();
    let mut c0 = 0;
    while c0 < p {
        let c1 = (c0 + block).min(p);
        ws.resize_with(c1 - c0, || zeros(n));
        for (w, y) in ws.iter_mut().zip(&ys[c0..c1]) {
            a.apply(y, w);
        }
        let g = gram(ys, &ws[..c1 - c0]);
        for i in 0..p {
            for j in c0..c1 {
                h[(i, j)] = g[(i, j - c0)];
            }
        }
        c0 = c1;
    }
    hermitize(&mut h);
    let eig = nalgebra::SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|i, j| eig.eigenvalues[*i].partial_cmp(&eig.eigenvalues[*j]).unwrap());
    let q = DMatrix::from_fn(p, p, |r, c| eig.eigenvectors[(r, order[c])]);
    rotate(ys, &q);
    order.iter().map(|i| eig.eigenvalues[*i]).collect()
}

/// Scaled Chebyshev filter damping `[lo, hi]`, normalized at `anchor < lo`.
/// `t1`, `t2` are work vectors; the three buffers rotate so the result lands in
/// `col` without copies.
#[allow(clippy::too_many_arguments)]
fn chebyshev_filter<A: LinearOperator + ?Sized>(
    a: &mut Counter<A>,
    col: &mut Vec<C64>,
    degree: usize,
    lo: f64,
    hi: f64,
    anchor: f64,
    t1: &mut Vec<C64>,
    t2: &mut Vec<C64>,
) {
    let e = 0.5 * (hi - lo);
    let c = 0.5 * (hi + lo);
    let mut sigma = e / (anchor - c);
    let tau = 2.0 / sigma;
    let mut prev = std::mem::take(col);
    let mut cur = std::mem::take(t1);
    let mut next = std::mem::take(t2);
    a.combine(&prev, &prev, sigma / e, -c * sigma / e, 0.0, &mut cur);
    for _ in 1..degree {
        let sigma_new = 1.0 / (tau - sigma);
        let s1 = 2.0 * sigma_new / e;
        a.combine(&cur, &prev, s1, -s1 * c, -sigma * sigma_new, &mut next);
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
        sigma = sigma_new;
    }
    *col = cur;
    *t1 = prev;
    *t2 = next;
}

fn random_block(n: usize, p: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<C64>> {
    (0..p)
        .map(|_| {
            (0..n)
                .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect()
        })
        .collect()
}

fn residual<A: LinearOperator + ?Sized>(a: &mut Counter<A>, v: &[C64], lambda: f64, tmp: &mut [C64]) -> f64 {
    a.apply(v, tmp);
    tmp.iter()
        .zip(v)
        .map(|(w, x)| (w - x * lambda).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Dense reference solver: assembles the matrix by matvecs.
pub fn dense_eigenpairs<A: LinearOperator + ?Sized>(
    op: &A,
    target: SpectrumTarget,
    opts: &SolverOptions,
) -> SpectrumResult {
    let start = Instant::now();
    let n = op.len();
    let mut m = DMatrix::<C64>::zeros(n, n);
    let mut e = zeros(n);
    let mut col = zeros(n);
    for j in 0..n {
        e[j] = C64::new(1.0, 0.0);
        op.apply(&e, &mut col);
        for i in 0..n {
            m[(i, j)] = col[i];
        }
        e[j] = C64::new(0.0, 0.0);
    }
    hermitize(&mut m);
    let eig = nalgebra::SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|i, j| eig.eigenvalues[*i].partial_cmp(&eig.eigenvalues[*j]).unwrap());
    let take = match target {
        SpectrumTarget::Count(c) => c.min(n),
        SpectrumTarget::CountWithEdge(c) => (c + 1).min(n),
        SpectrumTarget::Below(t) => order.iter().filter(|i| eig.eigenvalues[**i] < t).count(),
    };
    let norm_estimate = op.upper_bound().abs().max(op.lower_bound().abs());
    let mut counter = Counter { op, count: n };
    let mut vectors = Vec::with_capacity(take);
    let mut residuals = Vec::with_capacity(take);
    let mut tmp = zeros(n);
    for &i in &order[..take] {
        let v: Vec<C64> = eig.eigenvectors.column(i).iter().cloned().collect();
        residuals.push(residual(&mut counter, &v, eig.eigenvalues[i], &mut tmp));
        vectors.push(v);
    }
    SpectrumResult {
        eigenvalues: order[..take].iter().map(|i| eig.eigenvalues[*i]).collect(),
        converged: residuals.iter().all(|r| *r <= opts.tol * norm_estimate),
        residuals,
        iterations: 1,
        matvecs: counter.count,
        wall_time_s: start.elapsed().as_secs_f64(),
        norm_estimate,
        tolerance: opts.tol * norm_estimate,
        edge_estimates: 0,
        vectors: opts.keep_vectors.then_some(vectors),
    }
}

fn lowest<A: LinearOperator + ?Sized>(op: &A, count: usize, extra: usize, opts: &SolverOptions) -> SpectrumResult {
    let n = op.len();
    let count = count.min(n);
    let extra = extra.min(n - count);
    if n <= opts.dense_limit {
        return dense_eigenpairs(op, SpectrumTarget::Count(count + extra), opts);
    }
    let start = Instant::now();
    let p = (count + extra + opts.guard.max(8)).min(n);
    let norm_estimate = op.upper_bound().abs().max(op.lower_bound().abs());
    let tol = opts.tol * norm_estimate;
    let hi = op.upper_bound();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut a = Counter { op, count: 0 };
    let mut xs = random_block(n, p, &mut rng);
    orthonormalize(&mut xs, &mut rng);
    let mut theta = rayleigh_ritz(&mut a, &mut xs, opts.block.max(1));
    let mut residuals = vec![f64::INFINITY; p];
    let mut locked = 0;
    let mut iterations = 0;
    let mut t1 = zeros(n);
    let mut t2 = zeros(n);
    while locked < count && iterations < opts.max_iter {
        iterations += 1;
        let lo = theta[p - 1];
        let anchor = theta[locked].min(theta[0]);
        let (lo, anchor) = if lo - anchor < 1e-12 * norm_estimate {
            (lo + 1e-3 * (hi - lo), anchor)
        } else {
            (lo, anchor)
        };
        let e = 0.5 * (hi - lo);
        let c = 0.5 * (hi + lo);
        let t = ((c - anchor) / e).max(1.0 + 1e-12);
        let degree = ((1e8f64).acosh() / t.acosh()).ceil().clamp(4.0, opts.max_degree as f64) as usize;
        let (done, active) = xs.split_at_mut(locked);
        for col in active.iter_mut() {
            chebyshev_filter(&mut a, col, degree, lo, hi, anchor, &mut t1, &mut t2);
        }
        project_out(active, done);
        orthonormalize(active, &mut rng);
        let ritz = rayleigh_ritz(&mut a, active, opts.block.max(1));
        theta[locked..].copy_from_slice(&ritz);
        while locked < count {
            let r = residual(&mut a, &xs[locked], theta[locked], &mut t1);
            residuals[locked] = r;
            if r <= tol {
                locked += 1;
            } else {
                break;
            }
        }
    }
    let converged = residuals[..count].iter().all(|r| *r <= tol);
    for i in locked..count + extra {
        residuals[i] = residual(&mut a, &xs[i], theta[i], &mut t1);
    }
    // Locking keeps the order of leading Ritz values; sort defensively anyway.
    let mut order: Vec<usize> = (0..count + extra).collect();
    order.sort_by(|i, j| theta[*i].partial_cmp(&theta[*j]).unwrap());
    let eigenvalues = order.iter().map(|i| theta[*i]).collect();
    let res = order.iter().map(|i| residuals[*i]).collect::<Vec<_>>();
    let vectors = opts.keep_vectors.then(|| {
        xs.truncate(count + extra);
        order.iter().map(|i| std::mem::take(&mut xs[*i])).collect()
    });
    SpectrumResult {
        eigenvalues,
        converged: converged && res[..count].iter().all(|r| *r <= tol),
        residuals: res,
        iterations,
        matvecs: a.count,
        wall_time_s: start.elapsed().as_secs_f64(),
        norm_estimate,
        tolerance: tol,
        edge_estimates: extra,
        vectors,
    }
}

/// Low end of the spectrum of `op`.
pub fn chfsi<A: LinearOperator + ?Sized>(op: &A, target: SpectrumTarget, opts: &SolverOptions) -> SpectrumResult {
    match target {
        SpectrumTarget::Count(c) => lowest(op, c, 0, opts),
        SpectrumTarget::CountWithEdge(c) => lowest(op, c, 1, opts),
        SpectrumTarget::Below(t) => {
            if op.len() <= opts.dense_limit {
                return dense_eigenpairs(op, target, opts);
            }
            let mut want = opts.guard.max(8);
            loop {
                let mut r = lowest(op, want, 0, opts);
                let reached = r.eigenvalues.last().is_some_and(|v| *v >= t);
                if !r.converged || reached || want >= op.len() {
                    let keep = r.eigenvalues.iter().filter(|v| **v < t).count();
                    r.eigenvalues.truncate(keep);
                    r.residuals.truncate(keep);
                    if let Some(v) = r.vectors.as_mut() {
                        v.truncate(keep);
                    }
                    return r;
                }
                want = (2 * want).min(op.len());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_opts() -> SolverOptions {
        SolverOptions {
            dense_limit: 0,
            guard: 8,
            ..SolverOptions::default()
        }
    }

    #[test]
    fn diagonal_matrix_is_recovered_exactly() {
        let values: Vec<f64> = (0..300).map(|i| ((i * 37) % 300) as f64 * 0.5 - 20.0).collect();
        let op = DenseHermitian::diagonal(&values);
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let r = chfsi(&op, SpectrumTarget::Count(12), &small_opts());
        assert!(r.converged);
        for (a, b) in r.eigenvalues.iter().zip(&sorted) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn edge_estimate_brackets_the_next_eigenvalue() {
        // Cluster of 6 near 0, then a dense band starting at 10.
        let mut values: Vec<f64> = (0..6).map(|i| 0.01 * i as f64).collect();
        values.extend((0..250).map(|i| 10.0 + 1e-3 * i as f64));
        let op = DenseHermitian::diagonal(&values);
        let r = chfsi(&op, SpectrumTarget::CountWithEdge(6), &small_opts());
        assert!(r.converged);
        assert_eq!(r.eigenvalues.len(), 7);
        assert_eq!(r.edge_estimates, 1);
        assert!(r.max_residual() <= r.tolerance);
        let (edge, res) = (r.eigenvalues[6], r.residuals[6]);
        assert!(edge >= 10.0 - 1e-9 && edge - res <= 10.0 + 1e-9, "{edge} ± {res}");
        assert!(edge - res > 5.0, "edge {edge} residual {res}");
    }

    #[test]
    fn identity_scaled_matrix() {
        let op = DenseHermitian::diagonal(&[3.5; 200]);
        let r = chfsi(&op, SpectrumTarget::Count(10), &small_opts());
        assert!(r.converged);
        assert!(r.eigenvalues.iter().all(|v| (v - 3.5).abs() < 1e-12));
    }

    #[test]
    fn threshold_target_finds_everything_below() {
        let values: Vec<f64> = (0..250).map(|i| (i as f64).sqrt()).collect();
        let op = DenseHermitian::diagonal(&values);
        let r = chfsi(&op, SpectrumTarget::Below(5.0), &small_opts());
        assert_eq!(r.eigenvalues.len(), 25);
        let d = dense_eigenpairs(&op, SpectrumTarget::Below(5.0), &SolverOptions::default());
        assert_eq!(d.eigenvalues.len(), 25);
    }

    #[test]
    fn random_hermitian_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 160;
        let mut m = DMatrix::from_fn(n, n, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        m = &m + m.adjoint();
        let op = DenseHermitian::new(m);
        let it = chfsi(&op, SpectrumTarget::Count(6), &small_opts());
        let de = dense_eigenpairs(&op, SpectrumTarget::Count(6), &SolverOptions::default());
        assert!(it.converged);
        for (a, b) in it.eigenvalues.iter().zip(&de.eigenvalues) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(it.max_residual() <= it.tolerance);
    }

    #[test]
    fn seeds_agree_and_runs_are_deterministic() {
        let values: Vec<f64> = (0..400).map(|i| (i as f64 * 0.731).sin() * 10.0).collect();
        let op = DenseHermitian::diagonal(&values);
        let a = chfsi(&op, SpectrumTarget::Count(8), &small_opts());
        let b = chfsi(
            &op,
            SpectrumTarget::Count(8),
            &SolverOptions {
                seed: 99,
                ..small_opts()
            },
        );
        let c = chfsi(&op, SpectrumTarget::Count(8), &small_opts());
        for i in 0..8 {
            assert!((a.eigenvalues[i] - b.eigenvalues[i]).abs() < 1e-8);
        }
        assert_eq!(a.eigenvalues, c.eigenvalues);
    }

    #[test]
    fn orthonormalize_survives_nearly_dependent_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 500;
        let base = random_block(n, 1, &mut rng).remove(0);
        let mut ys: Vec<Vec<C64>> = (0..6)
            .map(|k| {
                base.iter()
                    .map(|z| z + C64::new(1e-13 * k as f64 * rng.gen_range(-1.0..1.0), 0.0))
                    .collect()
            })
            .collect();
        orthonormalize(&mut ys, &mut rng);
        let g = gram(&ys, &ys);
        let err = (g - DMatrix::<C64>::identity(6, 6))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }
}
