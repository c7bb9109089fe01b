//! Compatible almost-complex structures on flat symplectic tori.
//!
//! The torus is `[0,1)^{2n}` with the constant form `Ω = s·E`, where `E` is the
//! standard block form `dx¹∧dx² + dx³∧dx⁴ + …` and `s` is a multiple of `2π`.
//! A structure is the single-generator family
//!
//! ```text
//! J(x) = S(x) J0 S(x)⁻¹,   S(x) = exp(f(x) A0),   f(x) = ε sin(2π v·x + φ)
//! ```
//!
//! with `A0 ∈ sp(2n)`. Because `S` is generated by one matrix, every jet of `J`
//! is closed form: `∂_a J = f_a [A0, J]` and
//! `∂_a∂_b J = f_ab [A0, J] + f_a f_b [A0, [A0, J]]`.
//!
//! Index conventions: matrices are stored row-major with `J[m][j] = J^m_j`,
//! `β_{jk} = Ω_{jl} J^l_k`, and Christoffel symbols `Γ^m_{ls}` live at
//! `gamma[(m·d + l)·d + s]`.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Errors raised while building a structure.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("half-dimension must be at least 1, got {0}")]
    BadDimension(usize),
    #[error("{what} has shape {got}, expected {expected}")]
    BadShape {
        what: &'static str,
        got: String,
        expected: String,
    },
    #[error("omega_scale {0} is not a nonzero integer multiple of 2π")]
    NonIntegralPeriods(f64),
    #[error("A0 is not in sp(2n): max |A0ᵀΩ + ΩA0| = {defect:e}")]
    NonSymplecticGenerator { defect: f64 },
    #[error("metric not positive-definite at x = {point:?} (min eigenvalue {min_eig:e})")]
    NotPositive { point: Vec<f64>, min_eig: f64 },
}

/// Reference structure `J0` at `ε = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum J0Preset {
    /// `J0 = −E`, giving `β0 = s·Id`.
    Standard,
    /// A fixed symplectic conjugate of the standard structure with a
    /// non-diagonal constant metric that couples the planes.
    Tilted,
}

impl J0Preset {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "standard" => Some(Self::Standard),
            "tilted" => Some(Self::Tilted),
            _ => None,
        }
    }
}

/// Parameters of the family `J(x) = exp(fA0) J0 exp(−fA0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JFamilySpec {
    pub n: usize,
    /// `Ω = omega_scale · E`.
    pub omega_scale: f64,
    /// Row-major `2n × 2n` generator.
    pub a0: Vec<Vec<f64>>,
    pub epsilon: f64,
    /// Integer frequency covector `v`.
    pub wave: Vec<i64>,
    pub phase: f64,
    pub j0: J0Preset,
}

impl JFamilySpec {
    /// Flat Kähler structure with `Ω = 2π·E` and `J ≡ J0`.
    pub fn flat(n: usize) -> Self {
        let d = 2 * n;
        let mut wave = vec![0; d];
        wave[0] = 1;
        Self {
            n,
            omega_scale: 2.0 * PI,
            a0: vec![vec![0.0; d]; d],
            epsilon: 0.0,
            wave,
            phase: 0.0,
            j0: J0Preset::Standard,
        }
    }

    /// The shipped shear family: `A0 = diag(0,…,0,1,−1)` acting on the last
    /// symplectic plane, modulated along `x¹`. Gives
    /// `β = 2π·diag(1,…,1, e^{−2f}, e^{2f})`, non-Kähler for `n ≥ 2`.
    pub fn shear(n: usize, epsilon: f64) -> Self {
        let mut s = Self::flat(n);
        let d = 2 * n;
        s.a0[d - 2][d - 2] = 1.0;
        s.a0[d - 1][d - 1] = -1.0;
        s.epsilon = epsilon;
        s
    }

    pub fn dim(&self) -> usize {
        2 * self.n
    }
}

/// Standard block form `E` with `E[2p][2p+1] = 1`, `E[2p+1][2p] = −1`.
pub fn standard_form(n: usize) -> DMatrix<f64> {
    let d = 2 * n;
    let mut e = DMatrix::zeros(d, d);
    for p in 0..n {
        e[(2 * p, 2 * p + 1)] = 1.0;
        e[(2 * p + 1, 2 * p)] = -1.0;
    }
    e
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
}

fn to_matrix(rows: &[Vec<f64>], d: usize, what: &'static str) -> Result<DMatrix<f64>, GeometryError> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(GeometryError::BadShape {
            what,
            got: format!("{}x{}", rows.len(), rows.first().map_or(0, |r| r.len())),
            expected: format!("{d}x{d}"),
        });
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

/// Value, first and second partial derivatives of a matrix-valued field.
#[derive(Clone, Debug)]
pub struct MatrixJet {
    pub value: DMatrix<f64>,
    /// `d1[a] = ∂_a M`.
    pub d1: Vec<DMatrix<f64>>,
    /// `d2[a·d + b] = ∂_a∂_b M`.
    pub d2: Vec<DMatrix<f64>>,
}

impl MatrixJet {
    fn left_mul(&self, m: &DMatrix<f64>) -> MatrixJet {
        MatrixJet {
            value: m * &self.value,
            d1: self.d1.iter().map(|x| m * x).collect(),
            d2: self.d2.iter().map(|x| m * x).collect(),
        }
    }
}

/// Scalar profile `f` with gradient and Hessian (row-major).
#[derive(Clone, Debug)]
pub struct Profile {
    pub f: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

/// Curvature data at a point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvatureScalars {
    /// Scalar curvature of `β`.
    pub r: f64,
    /// `R_{ljkm} ω^{lj} ω^{km}`, with `R_{ljkm} = β(R(∂_k,∂_m)∂_l, ∂_j)`.
    pub romega: f64,
    /// `|R + ½ Romega + ½|∇J|²|`.
    pub lemma_residual: f64,
}

/// A compatible triple `(Ω, J, β)` on the flat torus.
#[derive(Clone, Debug)]
pub struct AlmostKahlerStructure {
    spec: JFamilySpec,
    d: usize,
    omega: DMatrix<f64>,
    omega_inv: DMatrix<f64>,
    a0: DMatrix<f64>,
    j0: DMatrix<f64>,
    /// `[A0, ·]` applied once and twice is taken on the fly; these are cached
    /// for the `f ↦ J` map.
    flat: bool,
}

/// Builds and validates a structure.
pub fn build_structure(spec: JFamilySpec) -> Result<AlmostKahlerStructure, GeometryError> {
    if spec.n == 0 {
        return Err(GeometryError::BadDimension(0));
    }
    let d = spec.dim();
    let chern = spec.omega_scale / (2.0 * PI);
    if !(chern.round().abs() >= 1.0 && (chern - chern.round()).abs() < 1e-12) {
        return Err(GeometryError::NonIntegralPeriods(spec.omega_scale));
    }
    if spec.wave.len() != d {
        return Err(GeometryError::BadShape {
            what: "wave_vector",
            got: spec.wave.len().to_string(),
            expected: d.to_string(),
        });
    }
    let a0 = to_matrix(&spec.a0, d, "A0")?;
    let omega = standard_form(spec.n) * spec.omega_scale;
    let omega_inv = omega.clone().try_inverse().expect("standard form is invertible");
    let defect = max_abs(&(a0.transpose() * &omega + &omega * &a0));
    if defect > 1e-12 * (1.0 + max_abs(&a0)) * spec.omega_scale.abs() {
        return Err(GeometryError::NonSymplecticGenerator { defect });
    }
    let j_std = -standard_form(spec.n) * spec.omega_scale.signum();
    let j0 = match spec.j0 {
        J0Preset::Standard => j_std,
        J0Preset::Tilted => {
            let t = (&omega_inv * tilt_matrix(d) * spec.omega_scale.abs()).exp();
            let t_inv = t.clone().try_inverse().expect("exponential is invertible");
            &t * j_std * t_inv
        }
    };
    let flat = spec.epsilon == 0.0 || max_abs(&a0) == 0.0;
    let s = AlmostKahlerStructure {
        spec,
        d,
        omega,
        omega_inv,
        a0,
        j0,
        flat,
    };
    // f only takes values in [−ε, ε]; positivity is checked along that range.
    let probes = 65;
    for i in 0..probes {
        let theta = 2.0 * PI * i as f64 / probes as f64;
        let x = s.point_with_theta(theta);
        let beta = s.metric_at(&x);
        let eig = beta.clone().symmetric_eigen();
        let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let asym = max_abs(&(&beta - beta.transpose()));
        if !(min_eig > 0.0) || asym > 1e-9 * max_abs(&beta) {
            return Err(GeometryError::NotPositive { point: x, min_eig });
        }
    }
    Ok(s)
}

/// Symmetric coupling matrix used by the tilted preset.
fn tilt_matrix(d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |a, b| {
        let base = 0.12 * ((1 + a + b) as f64).sin() + 0.05 * ((a * b) as f64).cos();
        if a == b {
            base + 0.08
        } else {
            base
        }
    })
}

fn commutator(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a * b - b * a
}

impl AlmostKahlerStructure {
    pub fn spec(&self) -> &JFamilySpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    /// Real dimension `2n`.
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn omega_inv(&self) -> &DMatrix<f64> {
        &self.omega_inv
    }

    pub fn j0(&self) -> &DMatrix<f64> {
        &self.j0
    }

    /// True when `J` is constant (and hence `∇J ≡ 0`).
    pub fn is_flat(&self) -> bool {
        self.flat
    }

    /// Integer `omega_scale / 2π`, the Chern number of each plane.
    pub fn chern_per_plane(&self) -> i64 {
        (self.spec.omega_scale / (2.0 * PI)).round() as i64
    }

    /// `∫ ωⁿ/n!` over the unit torus, i.e. the Pfaffian of `Ω`.
    pub fn volume(&self) -> f64 {
        self.spec.omega_scale.abs().powi(self.spec.n as i32)
    }

    /// `θ(x) = 2π v·x + φ`.
    pub fn theta(&self, x: &[f64]) -> f64 {
        let vx: f64 = self.spec.wave.iter().zip(x).map(|(v, xi)| *v as f64 * xi).sum();
        2.0 * PI * vx + self.spec.phase
    }

    /// Some point of the torus where the structure phase equals `theta`.
    pub fn point_with_theta(&self, theta: f64) -> Vec<f64> {
        let mut x = vec![0.0; self.d];
        if let Some((i, v)) = self.spec.wave.iter().enumerate().find(|(_, v)| **v != 0) {
            let t = (theta - self.spec.phase) / (2.0 * PI * *v as f64);
            x[i] = t.rem_euclid(1.0 / (v.unsigned_abs() as f64));
        }
        x
    }

    pub fn profile(&self, x: &[f64]) -> Profile {
        let th = self.theta(x);
        let eps = self.spec.epsilon;
        let v: Vec<f64> = self.spec.wave.iter().map(|w| 2.0 * PI * *w as f64).collect();
        let d = self.d;
        let (s, c) = th.sin_cos();
        let grad = v.iter().map(|va| eps * c * va).collect();
        let mut hess = vec![0.0; d * d];
        for a in 0..d {
            for b in 0..d {
                hess[a * d + b] = -eps * s * v[a] * v[b];
            }
        }
        Profile { f: eps * s, grad, hess }
    }

    /// `J` as a function of the scalar `f` alone.
    pub fn j_of_f(&self, f: f64) -> DMatrix<f64> {
        if f == 0.0 {
            return self.j0.clone();
        }
        let s = (&self.a0 * f).exp();
        let s_inv = (&self.a0 * (-f)).exp();
        s * &self.j0 * s_inv
    }

    /// Analytic jet of `J` at `x`.
    pub fn j_jet(&self, x: &[f64]) -> MatrixJet {
        let p = self.profile(x);
        let d = self.d;
        let j = self.j_of_f(p.f);
        let c1 = commutator(&self.a0, &j);
        let c2 = commutator(&self.a0, &c1);
        let d1 = (0..d).map(|a| &c1 * p.grad[a]).collect();
        let mut d2 = Vec::with_capacity(d * d);
        for a in 0..d {
            for b in 0..d {
                d2.push(&c1 * p.hess[a * d + b] + &c2 * (p.grad[a] * p.grad[b]));
            }
        }
        MatrixJet { value: j, d1, d2 }
    }

    /// Analytic jet of `β = ΩJ`.
    pub fn beta_jet(&self, x: &[f64]) -> MatrixJet {
        self.j_jet(x).left_mul(&self.omega)
    }

    /// `β_{jk} = Ω_{jl} J^l_k`, symmetrized (the asymmetry is at rounding level).
    pub fn metric_at(&self, x: &[f64]) -> DMatrix<f64> {
        let b = &self.omega * self.j_of_f(self.profile(x).f);
        (&b + b.transpose()) * 0.5
    }

    /// `β⁻¹ = −J Ω⁻¹`.
    pub fn metric_inverse_at(&self, x: &[f64]) -> DMatrix<f64> {
        let bi = -(self.j_of_f(self.profile(x).f) * &self.omega_inv);
        (&bi + bi.transpose()) * 0.5
    }

    /// Full geometric data at `x`.
    pub fn local(&self, x: &[f64]) -> LocalGeometry {
        LocalGeometry::new(self.d, &self.omega, self.j_jet(x))
    }

    /// Levi-Civita symbols of `β` at `x`.
    pub fn christoffel(&self, x: &[f64]) -> Vec<f64> {
        self.local(x).gamma
    }

    /// `∇_l J^m_j` at `x`, stored at `[(l·d + m)·d + j]`.
    pub fn nabla_j(&self, x: &[f64]) -> Vec<f64> {
        self.local(x).nabla_j()
    }

    pub fn nabla_j_norm_sq(&self, x: &[f64]) -> f64 {
        if self.flat {
            return 0.0;
        }
        self.local(x).nabla_j_norm_sq()
    }

    /// `q = −(5/24)|∇J|²`.
    pub fn q_density(&self, x: &[f64]) -> f64 {
        -5.0 / 24.0 * self.nabla_j_norm_sq(x)
    }

    /// Max residuals of `∇_l J^l_j = 0` and of `(∇_l J^m_j) v^j (Ωv)_m = 0`
    /// over random unit `v` and all `l`.
    pub fn check_trace_identities<R: Rng>(&self, x: &[f64], trials: usize, rng: &mut R) -> (f64, f64) {
        let g = self.local(x);
        let nj = g.nabla_j();
        let d = self.d;
        let mut trace = 0.0_f64;
        for j in 0..d {
            let t: f64 = (0..d).map(|l| nj[(l * d + l) * d + j]).sum();
            trace = trace.max(t.abs());
        }
        let mut vres = 0.0_f64;
        for _ in 0..trials.max(1) {
            let mut v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            v.iter_mut().for_each(|a| *a /= norm);
            let wv: Vec<f64> = (0..d)
                .map(|m| (0..d).map(|i| self.omega[(m, i)] * v[i]).sum())
                .collect();
            for l in 0..d {
                let mut acc = 0.0;
                for m in 0..d {
                    for j in 0..d {
                        acc += nj[(l * d + m) * d + j] * v[j] * wv[m];
                    }
                }
                vres = vres.max(acc.abs());
            }
        }
        (trace, vres)
    }

    pub fn curvature_scalars(&self, x: &[f64]) -> CurvatureScalars {
        self.local(x).curvature_scalars()
    }

    /// Max of `|∇J|²` over the uniform `grid_n^{2n}` grid.
    pub fn sup_nabla_j(&self, grid_n: usize) -> f64 {
        self.phase_classes(grid_n)
            .iter()
            .map(|(x, _)| self.nabla_j_norm_sq(x))
            .fold(0.0, f64::max)
    }

    /// Uniform-grid average of a function of the structure phase (anything
    /// derived from `J` alone qualifies).
    pub fn grid_average<F: Fn(&[f64]) -> f64>(&self, grid_n: usize, f: F) -> f64 {
        let classes = self.phase_classes(grid_n);
        let total: usize = classes.iter().map(|(_, c)| c).sum();
        classes.iter().map(|(x, c)| f(x) * *c as f64).sum::<f64>() / total as f64
    }

    /// Groups the `grid_n^{2n}` grid points by `v·i mod grid_n`, which fixes
    /// every structure-derived quantity. Returns a representative and the
    /// multiplicity of each class.
    pub fn phase_classes(&self, grid_n: usize) -> Vec<(Vec<f64>, usize)> {
        let n = grid_n as i64;
        // Residue distribution built one axis at a time: O(d·n²) instead of n^d.
        let mut counts = vec![0usize; grid_n];
        let mut reps: Vec<Option<Vec<i64>>> = vec![None; grid_n];
        counts[0] = 1;
        reps[0] = Some(Vec::new());
        for v in self.spec.wave.iter().take(self.d) {
            let mut next_counts = vec![0usize; grid_n];
            let mut next_reps: Vec<Option<Vec<i64>>> = vec![None; grid_n];
            for r in 0..grid_n {
                let Some(rep) = &reps[r] else { continue };
                for i in 0..n {
                    let t = (r as i64 + v * i).rem_euclid(n) as usize;
                    next_counts[t] += counts[r];
                    if next_reps[t].is_none() {
                        let mut x = rep.clone();
                        x.push(i);
                        next_reps[t] = Some(x);
                    }
                }
            }
            counts = next_counts;
            reps = next_reps;
        }
        reps.into_iter()
            .zip(counts)
            .filter_map(|(x, c)| x.map(|x| (x.iter().map(|i| *i as f64 / grid_n as f64).collect(), c)))
            .collect()
    }
}

/// Pointwise geometry derived from the jets of `J`: metric, inverse, Christoffel
/// symbols and their first derivatives.
#[derive(Clone, Debug)]
pub struct LocalGeometry {
    pub d: usize,
    pub omega: DMatrix<f64>,
    pub j: MatrixJet,
    pub beta: MatrixJet,
    pub beta_inv: DMatrix<f64>,
    /// `Γ^m_{ls}`.
    pub gamma: Vec<f64>,
}

impl LocalGeometry {
    pub fn new(d: usize, omega: &DMatrix<f64>, j: MatrixJet) -> Self {
        let beta = j.left_mul(omega);
        let beta_inv = beta
            .value
            .clone()
            .try_inverse()
            .expect("compatible metric is invertible");
        let gamma = christoffel_from(d, &beta_inv, &beta.d1);
        Self {
            d,
            omega: omega.clone(),
            j,
            beta,
            beta_inv,
            gamma,
        }
    }

    #[inline]
    pub fn g(&self, m: usize, l: usize, s: usize) -> f64 {
        self.gamma[(m * self.d + l) * self.d + s]
    }

    /// `∇_l J^m_j = ∂_l J^m_j + Γ^m_{ls} J^s_j − Γ^s_{lj} J^m_s`.
    pub fn nabla_j(&self) -> Vec<f64> {
        let d = self.d;
        let jv = &self.j.value;
        let mut out = vec![0.0; d * d * d];
        for l in 0..d {
            for m in 0..d {
                for j in 0..d {
                    let mut v = self.j.d1[l][(m, j)];
                    for s in 0..d {
                        v += self.g(m, l, s) * jv[(s, j)] - self.g(s, l, j) * jv[(m, s)];
                    }
                    out[(l * d + m) * d + j] = v;
                }
            }
        }
        out
    }

    /// `β^{la} β_{mb} β^{jc} ∇_l J^m_j ∇_a J^b_c`.
    pub fn nabla_j_norm_sq(&self) -> f64 {
        let d = self.d;
        let nj = self.nabla_j();
        let bi = &self.beta_inv;
        let b = &self.beta.value;
        // Raise l and j, lower m on one copy, then contract with the other.
        let mut acc = 0.0;
        for a in 0..d {
            for bb in 0..d {
                for c in 0..d {
                    let mut t = 0.0;
                    for l in 0..d {
                        let bla = bi[(l, a)];
                        if bla == 0.0 {
                            continue;
                        }
                        for m in 0..d {
                            let bmb = b[(m, bb)];
                            if bmb == 0.0 {
                                continue;
                            }
                            for j in 0..d {
                                t += bla * bmb * bi[(j, c)] * nj[(l * d + m) * d + j];
                            }
                        }
                    }
                    acc += t * nj[(a * d + bb) * d + c];
                }
            }
        }
        acc
    }

    /// `−β^{ja} ∇_j J^m_k ∇_a J^k_m`, equal to the full norm for compatible `J`.
    pub fn nabla_j_mixed_trace(&self) -> f64 {
        let d = self.d;
        let nj = self.nabla_j();
        let mut acc = 0.0;
        for j in 0..d {
            for a in 0..d {
                let bja = self.beta_inv[(j, a)];
                if bja == 0.0 {
                    continue;
                }
                for m in 0..d {
                    for k in 0..d {
                        acc += bja * nj[(j * d + m) * d + k] * nj[(a * d + k) * d + m];
                    }
                }
            }
        }
        -acc
    }

    /// `∂_c Γ^m_{ls}` at `[c][(m·d + l)·d + s]`.
    pub fn dgamma(&self) -> Vec<Vec<f64>> {
        let d = self.d;
        let bi = &self.beta_inv;
        let db = &self.beta.d1;
        let ddb = &self.beta.d2;
        let mut out = Vec::with_capacity(d);
        for c in 0..d {
            let dbi = -(bi * &db[c] * bi);
            let mut dg = vec![0.0; d * d * d];
            for m in 0..d {
                for l in 0..d {
                    for s in 0..d {
                        let mut v = 0.0;
                        for r in 0..d {
                            let first = db[l][(r, s)] + db[s][(r, l)] - db[r][(l, s)];
                            let second = ddb[c * d + l][(r, s)] + ddb[c * d + s][(r, l)] - ddb[c * d + r][(l, s)];
                            v += 0.5 * (dbi[(m, r)] * first + bi[(m, r)] * second);
                        }
                        dg[(m * d + l) * d + s] = v;
                    }
                }
            }
            out.push(dg);
        }
        out
    }

    /// `R^a_{bcd}` (the components of `R(∂_c,∂_d)∂_b`) at `[((a·d + b)·d + c)·d + dd]`.
    pub fn riemann(&self) -> Vec<f64> {
        let d = self.d;
        let dg = self.dgamma();
        let mut r = vec![0.0; d * d * d * d];
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    for e in 0..d {
                        let mut v = dg[c][(a * d + e) * d + b] - dg[e][(a * d + c) * d + b];
                        for f in 0..d {
                            v += self.g(a, c, f) * self.g(f, e, b) - self.g(a, e, f) * self.g(f, c, b);
                        }
                        r[((a * d + b) * d + c) * d + e] = v;
                    }
                }
            }
        }
        r
    }

    pub fn curvature_scalars(&self) -> CurvatureScalars {
        let d = self.d;
        let rr = self.riemann();
        let bi = &self.beta_inv;
        let b = &self.beta.value;
        let idx = |a: usize, bb: usize, c: usize, e: usize| ((a * d + bb) * d + c) * d + e;
        let mut scalar = 0.0;
        for bb in 0..d {
            for e in 0..d {
                let ric: f64 = (0..d).map(|a| rr[idx(a, bb, a, e)]).sum();
                scalar += bi[(bb, e)] * ric;
            }
        }
        // ω^{lj} = β^{la} β^{jb} Ω_{ab}
        let w_up = bi * &self.omega * bi.transpose();
        // R_{ljkm} = β(R(∂_k,∂_m)∂_l, ∂_j) = β_{je} R^e_{lkm}
        let mut romega = 0.0;
        for l in 0..d {
            for j in 0..d {
                let wlj = w_up[(l, j)];
                if wlj == 0.0 {
                    continue;
                }
                for k in 0..d {
                    for m in 0..d {
                        let wkm = w_up[(k, m)];
                        if wkm == 0.0 {
                            continue;
                        }
                        let low: f64 = (0..d).map(|e| b[(j, e)] * rr[idx(e, l, k, m)]).sum();
                        romega += low * wlj * wkm;
                    }
                }
            }
        }
        let nj2 = self.nabla_j_norm_sq();
        CurvatureScalars {
            r: scalar,
            romega,
            lemma_residual: (scalar + 0.5 * romega + 0.5 * nj2).abs(),
        }
    }
}

/// `Γ^m_{ls} = ½ β^{mr}(∂_l β_{rs} + ∂_s β_{rl} − ∂_r β_{ls})`.
pub fn christoffel_from(d: usize, beta_inv: &DMatrix<f64>, dbeta: &[DMatrix<f64>]) -> Vec<f64> {
    let mut low = vec![0.0; d * d * d];
    for r in 0..d {
        for l in 0..d {
            for s in 0..d {
                low[(r * d + l) * d + s] = 0.5 * (dbeta[l][(r, s)] + dbeta[s][(r, l)] - dbeta[r][(l, s)]);
            }
        }
    }
    let mut g = vec![0.0; d * d * d];
    for m in 0..d {
        for r in 0..d {
            let bmr = beta_inv[(m, r)];
            if bmr == 0.0 {
                continue;
            }
            for ls in 0..d * d {
                g[m * d * d + ls] += bmr * low[r * d * d + ls];
            }
        }
    }
    g
}

/// Finite-difference oracles with 4th-order central stencils.
pub mod fd {
    use super::*;

    /// Default step, balancing truncation against rounding for O(1) tensors.
    pub const STEP: f64 = 1e-3;

    fn stencil<F: Fn(&[f64]) -> DMatrix<f64>>(f: &F, x: &[f64], a: usize, h: f64) -> DMatrix<f64> {
        let shifted = |t: f64| {
            let mut y = x.to_vec();
            y[a] += t;
            f(&y)
        };
        (shifted(-2.0 * h) - shifted(2.0 * h) + (shifted(h) - shifted(-h)) * 8.0) / (12.0 * h)
    }

    /// `∂_a J` from values of `J`.
    pub fn dj(s: &AlmostKahlerStructure, x: &[f64], h: f64) -> Vec<DMatrix<f64>> {
        let f = |y: &[f64]| s.j_of_f(s.profile(y).f);
        (0..s.dim()).map(|a| stencil(&f, x, a, h)).collect()
    }

    /// `∂_a∂_b J` from the analytic first derivatives.
    pub fn ddj(s: &AlmostKahlerStructure, x: &[f64], h: f64) -> Vec<DMatrix<f64>> {
        let d = s.dim();
        let mut out = Vec::with_capacity(d * d);
        for a in 0..d {
            for b in 0..d {
                let f = |y: &[f64]| s.j_jet(y).d1[b].clone();
                out.push(stencil(&f, x, a, h));
            }
        }
        out
    }

    /// Geometry assembled purely from finite differences of `J`.
    pub fn local(s: &AlmostKahlerStructure, x: &[f64], h: f64) -> LocalGeometry {
        let jet = MatrixJet {
            value: s.j_of_f(s.profile(x).f),
            d1: dj(s, x, h),
            d2: ddj(s, x, h),
        };
        LocalGeometry::new(s.dim(), s.omega(), jet)
    }

    /// Max discrepancy between analytic and FD jets of `J` (first and second
    /// partials) and of `∇J`, each measured in max norm relative to
    /// `max(1, |analytic tensor|)`, so O(1) tensors are compared absolutely.
    pub fn jet_discrepancy(s: &AlmostKahlerStructure, x: &[f64], h: f64) -> f64 {
        let an = s.local(x);
        let num = local(s, x, h);
        let rel = |a: &[f64], b: &[f64]| {
            let scale = a.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
            a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max) / scale
        };
        let flatten = |ms: &[DMatrix<f64>]| ms.iter().flat_map(|m| m.iter().cloned()).collect::<Vec<_>>();
        let e1 = rel(&flatten(&an.j.d1), &flatten(&num.j.d1));
        let e2 = rel(&flatten(&an.j.d2), &flatten(&num.j.d2));
        let e3 = rel(&an.nabla_j(), &num.nabla_j());
        e1.max(e2).max(e3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_point(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| rng.gen_range(0.0..1.0)).collect()
    }

    #[test]
    fn flat_structure_has_constant_metric() {
        let s = build_structure(JFamilySpec::flat(2)).unwrap();
        let b = s.metric_at(&[0.3, 0.1, 0.7, 0.2]);
        let expect = DMatrix::<f64>::identity(4, 4) * (2.0 * PI);
        assert!(max_abs(&(b - expect)) < 1e-14);
        assert_eq!(s.nabla_j_norm_sq(&[0.1, 0.2, 0.3, 0.4]), 0.0);
        assert_eq!(s.q_density(&[0.5, 0.2, 0.3, 0.4]), 0.0);
    }

    #[test]
    fn j_squares_to_minus_identity_and_is_compatible() {
        let s = build_structure(JFamilySpec::shear(2, 0.4)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let x = random_point(&mut rng, 4);
            let j = s.j_jet(&x).value;
            let id = DMatrix::<f64>::identity(4, 4);
            assert!(max_abs(&(&j * &j + &id)) < 1e-12);
            // Ω(Ju, Jv) = Ω(u, v)  ⇔  JᵀΩJ = Ω
            assert!(max_abs(&(j.transpose() * s.omega() * &j - s.omega())) < 1e-12);
            let b = s.metric_at(&x);
            assert!((b.determinant() - s.omega().determinant()).abs() < 1e-9 * s.omega().determinant());
            // periodicity
            let mut y = x.clone();
            y[0] += 1.0;
            assert!(max_abs(&(s.j_jet(&y).value - j)) < 1e-12);
        }
    }

    #[test]
    fn exponential_of_generator_is_symplectic() {
        let s = build_structure(JFamilySpec::shear(2, 0.4)).unwrap();
        for f in [-0.4, -0.1, 0.0, 0.25, 0.4] {
            let m = (&s.a0 * f).exp();
            assert!(max_abs(&(m.transpose() * s.omega() * &m - s.omega())) < 1e-12);
        }
    }

    #[test]
    fn shear_metric_matches_closed_form() {
        let s = build_structure(JFamilySpec::shear(2, 0.4)).unwrap();
        let x = [0.1, 0.3, 0.5, 0.7];
        let f = 0.4 * (2.0 * PI * 0.1).sin();
        let b = s.metric_at(&x);
        let expect = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            1.0,
            1.0,
            (-2.0 * f).exp(),
            (2.0 * f).exp(),
        ])) * (2.0 * PI);
        assert!(max_abs(&(b - expect)) < 1e-12);
    }

    #[test]
    fn rejects_non_symplectic_generator() {
        let mut spec = JFamilySpec::shear(2, 0.4);
        spec.a0[0][0] = 1.0;
        assert!(matches!(
            build_structure(spec),
            Err(GeometryError::NonSymplecticGenerator { .. })
        ));
    }

    #[test]
    fn rejects_non_integral_periods() {
        let mut spec = JFamilySpec::flat(1);
        spec.omega_scale = 5.0;
        assert!(matches!(
            build_structure(spec),
            Err(GeometryError::NonIntegralPeriods(_))
        ));
    }

    #[test]
    fn shear_norm_matches_closed_form() {
        // β = 2π diag(1,1,e^{−2f},e^{2f}) gives |∇J|² = 4 f'² / π.
        let s = build_structure(JFamilySpec::shear(2, 0.4)).unwrap();
        for x1 in [0.0, 0.05, 0.125, 0.3, 0.61] {
            let x = [x1, 0.2, 0.4, 0.9];
            let fp = 0.4 * 2.0 * PI * (2.0 * PI * x1).cos();
            let expect = 4.0 * fp * fp / PI;
            let got = s.nabla_j_norm_sq(&x);
            assert!((got - expect).abs() < 1e-10 * (1.0 + expect), "{got} vs {expect}");
        }
    }

    #[test]
    fn mixed_trace_equals_full_norm() {
        let s = build_structure(JFamilySpec::shear(2, 0.4)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let x = random_point(&mut rng, 4);
            let g = s.local(&x);
            assert!((g.nabla_j_norm_sq() - g.nabla_j_mixed_trace()).abs() < 1e-10);
        }
    }

    #[test]
    fn two_dimensional_structures_are_parallel() {
        let s = build_structure(JFamilySpec::shear(1, 0.5)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let x = random_point(&mut rng, 2);
            assert!(s.nabla_j(&x).iter().all(|v| v.abs() < 1e-10));
            let (t, v) = s.check_trace_identities(&x, 10, &mut rng);
            assert!(t < 1e-10 && v < 1e-10);
            let c = s.curvature_scalars(&x);
            assert!(c.lemma_residual < 1e-7, "{c:?}");
        }
    }

    #[test]
    fn curvature_lemma_holds_for_shear_family() {
        let s = build_structure(JFamilySpec::shear(2, 0.4)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = random_point(&mut rng, 4);
            let c = s.curvature_scalars(&x);
            assert!(c.lemma_residual < 1e-7, "{c:?}");
        }
    }

    #[test]
    fn jets_match_finite_differences() {
        let s = build_structure(JFamilySpec::shear(2, 0.4)).unwrap();
        for x in [[0.0; 4], [0.13, 0.4, 0.2, 0.8]] {
            let e = fd::jet_discrepancy(&s, &x, fd::STEP);
            assert!(e < 1e-8, "{e:e}");
        }
    }

    #[test]
    fn tilted_preset_is_compatible_and_flat() {
        let mut spec = JFamilySpec::flat(2);
        spec.j0 = J0Preset::Tilted;
        let s = build_structure(spec).unwrap();
        let b = s.metric_at(&[0.0; 4]);
        assert!(b[(0, 2)].abs() > 1e-3, "tilt should couple planes");
        assert_eq!(s.nabla_j_norm_sq(&[0.2; 4]), 0.0);
    }

    #[test]
    fn grid_average_counts_every_point() {
        let s = build_structure(JFamilySpec::shear(2, 0.4)).unwrap();
        let classes = s.phase_classes(8);
        assert_eq!(classes.iter().map(|c| c.1).sum::<usize>(), 8usize.pow(4));
        assert!((s.grid_average(8, |_| 1.0) - 1.0).abs() < 1e-15);
        let qbar = s.grid_average(32, |x| s.q_density(x));
        assert!(qbar < 0.0);
    }

    #[test]
    fn sup_is_stable_under_refinement() {
        let s = build_structure(JFamilySpec::shear(2, 0.4)).unwrap();
        let a = s.sup_nabla_j(16);
        let b = s.sup_nabla_j(32);
        assert!(b >= a);
        assert!((b - a) / b < 0.01);
    }
}
