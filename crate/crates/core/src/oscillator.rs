//! Exact harmonic-oscillator algebra on `N Γ ≅ S¹ × R^d`.
//!
//! States are finite sums of `c · u^α · e^{i(m/2)s} · e^{−u²/4}` with exact
//! complex-rational `c`. The frequency `m` is stored doubled and relative to the
//! ground phase `e^{−ins/2}`, so the ground state is the constant `1` at `m = 0`
//! and every creation operator lowers `m` by one.
//!
//! With this bookkeeping
//!
//! ```text
//! L0 = −2i∂_s + u²/4 − ∂_u²   acts on  P·e^{i(m/2)s}  as  (m + E − Δ) P
//! ```
//!
//! where `E = u·∇` is the Euler operator.
//!
//! Gaussian pairings are reported in units of `(2π)^{d/2}`, i.e.
//! `⟨A, B⟩ = (2π)^{−d/2} ∫ conj(A) B e^{−u²/2} du` summed over matching
//! frequencies.

use num::{BigInt, BigRational, One, Signed, Zero};
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OscillatorError {
    #[error("polynomial degree {0} exceeds the supported maximum of 8")]
    DegreeTooHigh(u32),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

fn rat(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// Exact complex rational.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct CRational {
    pub re: BigRational,
    pub im: BigRational,
}

impl CRational {
    pub fn new(re: BigRational, im: BigRational) -> Self {
        Self { re, im }
    }

    pub fn real(re: BigRational) -> Self {
        Self {
            re,
            im: BigRational::zero(),
        }
    }

    pub fn from_int(n: i64) -> Self {
        Self::real(rat(n))
    }

    pub fn zero() -> Self {
        Self::from_int(0)
    }

    pub fn one() -> Self {
        Self::from_int(1)
    }

    pub fn i() -> Self {
        Self::new(rat(0), rat(1))
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn conj(&self) -> Self {
        Self::new(self.re.clone(), -self.im.clone())
    }

    pub fn scale(&self, r: &BigRational) -> Self {
        Self::new(&self.re * r, &self.im * r)
    }
}

impl fmt::Display for CRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.im.is_zero() {
            write!(f, "{}", self.re)
        } else if self.re.is_zero() {
            write!(f, "{}i", self.im)
        } else {
            let sign = if self.im.is_negative() { "-" } else { "+" };
            write!(f, "({} {} {}i)", self.re, sign, self.im.abs())
        }
    }
}

impl Add for CRational {
    type Output = CRational;
    fn add(self, o: CRational) -> CRational {
        CRational::new(self.re + o.re, self.im + o.im)
    }
}

impl Sub for CRational {
    type Output = CRational;
    fn sub(self, o: CRational) -> CRational {
        CRational::new(self.re - o.re, self.im - o.im)
    }
}

impl Mul for CRational {
    type Output = CRational;
    fn mul(self, o: CRational) -> CRational {
        CRational::new(&self.re * &o.re - &self.im * &o.im, &self.re * &o.im + &self.im * &o.re)
    }
}

impl Neg for CRational {
    type Output = CRational;
    fn neg(self) -> CRational {
        CRational::new(-self.re, -self.im)
    }
}

/// Exponent vector of a monomial in `u`.
pub type Monomial = Vec<u32>;

/// Oscillator state: `Σ c · u^α · e^{i(m/2)s} · e^{−u²/4}` keyed by `(m, α)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolyGaussian {
    dim: usize,
    terms: BTreeMap<(i32, Monomial), CRational>,
}

impl PolyGaussian {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            terms: BTreeMap::new(),
        }
    }

    /// `c · u^α · e^{i(freq2/2)s}` (times the implicit Gaussian and ground phase).
    pub fn monomial(dim: usize, alpha: Monomial, freq2: i32, c: CRational) -> Self {
        assert_eq!(alpha.len(), dim);
        let mut p = Self::zero(dim);
        p.add_term(freq2, alpha, c);
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (i32, &Monomial, &CRational)> {
        self.terms.iter().map(|((f, a), c)| (*f, a, c))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    fn add_term(&mut self, freq2: i32, alpha: Monomial, c: CRational) {
        if c.is_zero() {
            return;
        }
        let key = (freq2, alpha);
        let next = match self.terms.remove(&key) {
            Some(old) => old + c,
            None => c,
        };
        if !next.is_zero() {
            self.terms.insert(key, next);
        }
    }

    pub fn scale(&self, c: &CRational) -> Self {
        let mut out = Self::zero(self.dim);
        for ((f, a), v) in &self.terms {
            out.add_term(*f, a.clone(), v.clone() * c.clone());
        }
        out
    }

    /// Multiplies by `e^{i(delta2/2)s}`.
    pub fn shift_freq(&self, delta2: i32) -> Self {
        Self {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|((f, a), c)| ((f + delta2, a.clone()), c.clone()))
                .collect(),
        }
    }

    /// Multiplies by a real polynomial in `u`.
    pub fn mul_poly(&self, p: &Polynomial) -> Self {
        assert_eq!(p.dim, self.dim);
        let mut out = Self::zero(self.dim);
        for ((f, a), c) in &self.terms {
            for (b, r) in &p.terms {
                let ab: Monomial = a.iter().zip(b).map(|(x, y)| x + y).collect();
                out.add_term(*f, ab, c.scale(r));
            }
        }
        out
    }

    /// Phase-free polynomial part of the terms at frequency `freq2`.
    pub fn at_freq(&self, freq2: i32) -> Self {
        let mut out = Self::zero(self.dim);
        for ((f, a), c) in &self.terms {
            if *f == freq2 {
                out.add_term(0, a.clone(), c.clone());
            }
        }
        out
    }
}

impl Add for &PolyGaussian {
    type Output = PolyGaussian;
    fn add(self, o: &PolyGaussian) -> PolyGaussian {
        assert_eq!(self.dim, o.dim);
        let mut out = self.clone();
        for ((f, a), c) in &o.terms {
            out.add_term(*f, a.clone(), c.clone());
        }
        out
    }
}

impl Sub for &PolyGaussian {
    type Output = PolyGaussian;
    fn sub(self, o: &PolyGaussian) -> PolyGaussian {
        self + &o.scale(&CRational::from_int(-1))
    }
}

impl fmt::Display for PolyGaussian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|((m, a), c)| {
                let mono: Vec<String> = a
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| **e > 0)
                    .map(|(i, e)| if *e == 1 { format!("u{i}") } else { format!("u{i}^{e}") })
                    .collect();
                let phase = if *m == 0 {
                    String::new()
                } else {
                    format!("·e^({m}is/2)")
                };
                format!("{c}{}{}{phase}", if mono.is_empty() { "" } else { "·" }, mono.join("·"))
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

/// Real rational polynomial in `u` (no Gaussian, no phase).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Polynomial {
    dim: usize,
    terms: BTreeMap<Monomial, BigRational>,
}

impl Polynomial {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: BigRational) -> Self {
        let mut p = Self::zero(dim);
        p.add_term(vec![0; dim], c);
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn add_term(&mut self, alpha: Monomial, c: BigRational) {
        assert_eq!(alpha.len(), self.dim);
        if c.is_zero() {
            return;
        }
        let next = match self.terms.remove(&alpha) {
            Some(old) => old + c,
            None => c,
        };
        if !next.is_zero() {
            self.terms.insert(alpha, next);
        }
    }

    /// Adds `c · u_{i1} ⋯ u_{ip}`.
    pub fn add_indices(&mut self, idx: &[usize], c: BigRational) {
        let mut alpha = vec![0; self.dim];
        for i in idx {
            alpha[*i] += 1;
        }
        self.add_term(alpha, c);
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &BigRational)> {
        self.terms.iter()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|a| a.iter().sum()).max().unwrap_or(0)
    }
}

/// `U₀`: the constant polynomial `1` at relative frequency `0`.
pub fn ground_state(d: usize) -> PolyGaussian {
    PolyGaussian::monomial(d, vec![0; d], 0, CRational::one())
}

/// `Λ*_j = −i e^{−is/2}(∂_{u^j} − u_j/2)`; on `P·e^{−u²/4}` this gives
/// `−i (∂_j P − u_j P)` one half-frequency lower.
pub fn create(state: &PolyGaussian, j: usize) -> PolyGaussian {
    assert!(j < state.dim);
    let minus_i = CRational::new(rat(0), rat(-1));
    let mut out = PolyGaussian::zero(state.dim);
    for ((f, a), c) in &state.terms {
        let c = c.clone() * minus_i.clone();
        if a[j] > 0 {
            let mut b = a.clone();
            b[j] -= 1;
            out.add_term(f - 1, b, c.scale(&rat(a[j] as i64)));
        }
        let mut b = a.clone();
        b[j] += 1;
        out.add_term(f - 1, b, -c);
    }
    out
}

/// `L0 = −2i∂_s + u²/4 − ∂_u²`, exactly.
pub fn apply_l0(state: &PolyGaussian) -> PolyGaussian {
    let mut out = PolyGaussian::zero(state.dim);
    for ((f, a), c) in &state.terms {
        let deg: u32 = a.iter().sum();
        out.add_term(*f, a.clone(), c.scale(&rat(*f as i64 + deg as i64)));
        for (j, e) in a.iter().enumerate() {
            if *e >= 2 {
                let mut b = a.clone();
                b[j] -= 2;
                out.add_term(*f, b, c.scale(&rat(-((*e as i64) * (*e as i64 - 1)))));
            }
        }
    }
    out
}

/// `U_{ij} = Λ*_i Λ*_j U₀`.
pub fn u2(d: usize, i: usize, j: usize) -> PolyGaussian {
    create(&create(&ground_state(d), j), i)
}

/// `U_{ijkl} = Λ*_i Λ*_j Λ*_k Λ*_l U₀`.
pub fn u4(d: usize, i: usize, j: usize, k: usize, l: usize) -> PolyGaussian {
    let mut s = ground_state(d);
    for idx in [l, k, j, i] {
        s = create(&s, idx);
    }
    s
}

/// `(k − 1)!!` for even `k`, zero for odd `k`: `E[x^k]` for a unit Gaussian.
fn gaussian_moment_1d(k: u32) -> BigInt {
    if k % 2 == 1 {
        return BigInt::zero();
    }
    let mut acc = BigInt::one();
    let mut m = k as i64 - 1;
    while m > 1 {
        acc *= m;
        m -= 2;
    }
    acc
}

/// `(2π)^{−d/2} Σ ∫ conj(A) B e^{−u²/2}` over matching frequencies.
pub fn gaussian_pairing(a: &PolyGaussian, b: &PolyGaussian) -> CRational {
    assert_eq!(a.dim, b.dim);
    let mut acc = CRational::zero();
    for ((fa, aa), ca) in &a.terms {
        for ((fb, ab), cb) in &b.terms {
            if fa != fb {
                continue;
            }
            let mut w = BigInt::one();
            for (x, y) in aa.iter().zip(ab) {
                w *= gaussian_moment_1d(x + y);
                if w.is_zero() {
                    break;
                }
            }
            if !w.is_zero() {
                acc = acc + (ca.conj() * cb.clone()).scale(&BigRational::from_integer(w));
            }
        }
    }
    acc
}

/// Number of perfect matchings of `idx` pairing equal indices only.
fn wick_count(idx: &mut Vec<usize>) -> u64 {
    if idx.is_empty() {
        return 1;
    }
    let first = idx.remove(0);
    let mut total = 0;
    for p in 0..idx.len() {
        if idx[p] == first {
            let partner = idx.remove(p);
            total += wick_count(idx);
            idx.insert(p, partner);
        }
    }
    idx.insert(0, first);
    total
}

/// Expectation of `poly` under the unit-covariance Gaussian, computed by
/// enumerating Wick pairings monomial by monomial.
pub fn gaussian_moment_oracle(poly: &Polynomial) -> Result<BigRational, OscillatorError> {
    let deg = poly.degree();
    if deg > 8 {
        return Err(OscillatorError::DegreeTooHigh(deg));
    }
    let mut acc = BigRational::zero();
    for (alpha, c) in poly.terms() {
        let total: u32 = alpha.iter().sum();
        if total % 2 == 1 {
            continue;
        }
        let mut idx: Vec<usize> = alpha
            .iter()
            .enumerate()
            .flat_map(|(i, e)| std::iter::repeat(i).take(*e as usize))
            .collect();
        acc += c * rat(wick_count(&mut idx) as i64);
    }
    Ok(acc)
}

/// Coefficients of `L2 U0 = [C^{ijkl} u_i u_j u_k u_l + C^{ij} u_i u_j + C] U0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContractionCoefficients {
    d: usize,
    c0: BigRational,
    c2: Vec<BigRational>,
    c4: Vec<BigRational>,
}

impl ContractionCoefficients {
    /// Symmetrizes `c2` (row-major `d×d`) and `c4` (row-major `d⁴`).
    pub fn new(d: usize, c0: BigRational, c2: &[BigRational], c4: &[BigRational]) -> Result<Self, OscillatorError> {
        if c2.len() != d * d {
            return Err(OscillatorError::DimensionMismatch(c2.len(), d * d));
        }
        if c4.len() != d.pow(4) {
            return Err(OscillatorError::DimensionMismatch(c4.len(), d.pow(4)));
        }
        let half = BigRational::new(BigInt::one(), BigInt::from(2));
        let mut s2 = vec![BigRational::zero(); d * d];
        for i in 0..d {
            for j in 0..d {
                s2[i * d + j] = (&c2[i * d + j] + &c2[j * d + i]) * &half;
            }
        }
        let i4 = |a: usize, b: usize, c: usize, e: usize| ((a * d + b) * d + c) * d + e;
        let mut s4 = vec![BigRational::zero(); d.pow(4)];
        let inv24 = BigRational::new(BigInt::one(), BigInt::from(24));
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    for e in 0..d {
                        let idx = [a, b, c, e];
                        let mut acc = BigRational::zero();
                        for p in PERMS4 {
                            acc += &c4[i4(idx[p[0]], idx[p[1]], idx[p[2]], idx[p[3]])];
                        }
                        s4[i4(a, b, c, e)] = acc * &inv24;
                    }
                }
            }
        }
        Ok(Self { d, c0, c2: s2, c4: s4 })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn c4(&self, i: usize, j: usize, k: usize, l: usize) -> &BigRational {
        let d = self.d;
        &self.c4[((i * d + j) * d + k) * d + l]
    }

    /// `σ = C + C_l^l + 3 C_kk^ll`.
    pub fn solvability_shift(&self) -> BigRational {
        let d = self.d;
        let mut s = self.c0.clone();
        for l in 0..d {
            s += &self.c2[l * d + l];
        }
        let mut dt = BigRational::zero();
        for k in 0..d {
            for l in 0..d {
                dt += self.c4(k, k, l, l);
            }
        }
        s + dt * rat(3)
    }

    /// The polynomial `C^{ijkl} u⁴ + C^{ij} u² + C`.
    pub fn polynomial(&self) -> Polynomial {
        let d = self.d;
        let mut p = Polynomial::constant(d, self.c0.clone());
        for i in 0..d {
            for j in 0..d {
                p.add_indices(&[i, j], self.c2[i * d + j].clone());
                for k in 0..d {
                    for l in 0..d {
                        p.add_indices(&[i, j, k, l], self.c4(i, j, k, l).clone());
                    }
                }
            }
        }
        p
    }
}

const PERMS4: [[usize; 4]; 24] = [
    [0, 1, 2, 3],
    [0, 1, 3, 2],
    [0, 2, 1, 3],
    [0, 2, 3, 1],
    [0, 3, 1, 2],
    [0, 3, 2, 1],
    [1, 0, 2, 3],
    [1, 0, 3, 2],
    [1, 2, 0, 3],
    [1, 2, 3, 0],
    [1, 3, 0, 2],
    [1, 3, 2, 0],
    [2, 0, 1, 3],
    [2, 0, 3, 1],
    [2, 1, 0, 3],
    [2, 1, 3, 0],
    [2, 3, 0, 1],
    [2, 3, 1, 0],
    [3, 0, 1, 2],
    [3, 0, 2, 1],
    [3, 1, 0, 2],
    [3, 1, 2, 0],
    [3, 2, 0, 1],
    [3, 2, 1, 0],
];

/// `κ = k + n/2` and `κ² = k² + nk + n²/4`.
pub fn kappa_of_k(k: u64, n: u64) -> (BigRational, BigRational) {
    let kappa = rat(k as i64) + BigRational::new(BigInt::from(n), BigInt::from(2));
    let sq = &kappa * &kappa;
    (kappa, sq)
}

/// The final shift in the spectral convention: `σ_total = −n²/4 + q`.
pub fn sigma_total(n: usize, q: f64) -> f64 {
    -((n * n) as f64) / 4.0 + q
}
