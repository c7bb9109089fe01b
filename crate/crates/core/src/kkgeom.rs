//! Kaluza–Klein metric on the trivialized circle bundle `Z = S¹ × X`.
//!
//! Coordinates are `z = (θ, x¹, …, x^{2n})`. With the symmetric gauge
//! `a_k(x) = ½ (x − c)^j Ω_{jk}` (so `a(c) = 0`, `∂_j a_k = ½Ω_{jk}`) the metric is
//!
//! ```text
//! g_00 = 1,   g_0j = a_j,   g_jk = β_jk + a_j a_k
//! ```
//!
//! Geodesics are integrated in Hamiltonian form `ż = g⁻¹p`,
//! `ṗ_μ = ½ vᵀ(∂_μ g)v` with classical RK4; `θ` is cyclic so `p_θ` is conserved
//! exactly and the energy `½ pᵀg⁻¹p` is the quality metric.

use crate::geometry::{AlmostKahlerStructure, LocalGeometry};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KkError {
    #[error("invalid geodesic request: {0}")]
    InvalidInput(String),
    #[error("energy drift {achieved:e} exceeds {allowed:e} with step {step:e}")]
    Drift { achieved: f64, allowed: f64, step: f64 },
}

/// Relative energy drift tolerated by [`geodesic_integrate`].
pub const MAX_DRIFT: f64 = 1e-8;

/// The metric `g` on `S¹ × X` in a symmetric gauge centred at `center`.
#[derive(Clone, Debug)]
pub struct KKMetric<'a> {
    s: &'a AlmostKahlerStructure,
    center: Vec<f64>,
}

impl<'a> KKMetric<'a> {
    pub fn new(s: &'a AlmostKahlerStructure, center: &[f64]) -> Self {
        assert_eq!(center.len(), s.dim());
        Self {
            s,
            center: center.to_vec(),
        }
    }

    pub fn structure(&self) -> &AlmostKahlerStructure {
        self.s
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    /// Total dimension `2n + 1`.
    pub fn dim(&self) -> usize {
        self.s.dim() + 1
    }

    /// `a_k(x) = ½ (x − c)^j Ω_{jk}`.
    pub fn gauge(&self, x: &[f64]) -> Vec<f64> {
        let d = self.s.dim();
        let om = self.s.omega();
        (0..d)
            .map(|k| 0.5 * (0..d).map(|j| (x[j] - self.center[j]) * om[(j, k)]).sum::<f64>())
            .collect()
    }

    fn assemble(&self, beta: &DMatrix<f64>, a: &[f64]) -> DMatrix<f64> {
        let d = self.s.dim();
        let mut g = DMatrix::zeros(d + 1, d + 1);
        g[(0, 0)] = 1.0;
        for j in 0..d {
            g[(0, j + 1)] = a[j];
            g[(j + 1, 0)] = a[j];
            for k in 0..d {
                g[(j + 1, k + 1)] = beta[(j, k)] + a[j] * a[k];
            }
        }
        g
    }

    pub fn metric(&self, z: &[f64]) -> DMatrix<f64> {
        let x = &z[1..];
        self.assemble(&self.s.metric_at(x), &self.gauge(x))
    }

    pub fn inverse(&self, z: &[f64]) -> DMatrix<f64> {
        self.metric(z).try_inverse().expect("Kaluza–Klein metric is invertible")
    }

    /// The block inverse `[[1 + aβ⁻¹a, −(β⁻¹a)ᵀ], [−β⁻¹a, β⁻¹]]`.
    pub fn inverse_block(&self, z: &[f64]) -> DMatrix<f64> {
        let x = &z[1..];
        let d = self.s.dim();
        let bi = self.s.metric_inverse_at(x);
        let a = DVector::from_vec(self.gauge(x));
        let bia = &bi * &a;
        let mut g = DMatrix::zeros(d + 1, d + 1);
        g[(0, 0)] = 1.0 + a.dot(&bia);
        for j in 0..d {
            g[(0, j + 1)] = -bia[j];
            g[(j + 1, 0)] = -bia[j];
            for k in 0..d {
                g[(j + 1, k + 1)] = bi[(j, k)];
            }
        }
        g
    }

    /// Metric together with analytic first and second derivatives
    /// (`d1[μ]`, `d2[μ·(2n+1) + ν]`; all θ-derivatives vanish).
    pub fn jets(&self, z: &[f64]) -> (DMatrix<f64>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
        let x = &z[1..];
        let d = self.s.dim();
        let m = d + 1;
        let bj = self.s.beta_jet(x);
        let beta = (&bj.value + bj.value.transpose()) * 0.5;
        let a = self.gauge(x);
        let om = self.s.omega();
        let g = self.assemble(&beta, &a);
        let mut d1 = vec![DMatrix::zeros(m, m)];
        for i in 0..d {
            let mut t = DMatrix::zeros(m, m);
            for k in 0..d {
                let dak = 0.5 * om[(i, k)];
                t[(0, k + 1)] = dak;
                t[(k + 1, 0)] = dak;
                for l in 0..d {
                    t[(k + 1, l + 1)] = bj.d1[i][(k, l)] + dak * a[l] + a[k] * 0.5 * om[(i, l)];
                }
            }
            d1.push(t);
        }
        let mut d2 = vec![DMatrix::zeros(m, m); m * m];
        for i in 0..d {
            for j in 0..d {
                let mut t = DMatrix::zeros(m, m);
                for k in 0..d {
                    for l in 0..d {
                        t[(k + 1, l + 1)] =
                            bj.d2[i * d + j][(k, l)] + 0.25 * (om[(i, k)] * om[(j, l)] + om[(j, k)] * om[(i, l)]);
                    }
                }
                d2[(i + 1) * m + (j + 1)] = t;
            }
        }
        (g, d1, d2)
    }

    /// `Γ^μ_{νρ}` at `[(μ·m + ν)·m + ρ]` from analytic derivatives.
    pub fn christoffel(&self, z: &[f64]) -> Vec<f64> {
        let (g, d1, _) = self.jets(z);
        christoffel_of(&g, &d1)
    }
}

fn christoffel_of(g: &DMatrix<f64>, dg: &[DMatrix<f64>]) -> Vec<f64> {
    let m = g.nrows();
    let gi = g.clone().try_inverse().expect("invertible metric");
    crate::geometry::christoffel_from(m, &gi, dg)
}

/// Residuals of each Christoffel-table entry at the gauge centre, comparing
/// finite-difference symbols of `g` against the closed forms.
#[derive(Clone, Debug, Serialize)]
pub struct ChristoffelResiduals {
    /// `Γ^0_00 = Γ^j_00 = 0`.
    pub gamma_00: f64,
    /// `Γ^0_0j = ½(Jα)_j`, zero at the centre.
    pub gamma0_0j: f64,
    /// `Γ^j_0k = −½ J_k^j` with `J_k^j = β_{ka} J^a_b β^{bj}` (equal to `+½ J^j_k`).
    pub gammaj_0k: f64,
    /// `Γ^j_lk = F^j_lk`, the Levi-Civita symbols of `β`.
    pub gammaj_lk: f64,
    /// `Γ^0_jk = ½(∂_jα_k + ∂_kα_j)`, zero in the symmetric gauge.
    pub gamma0_jk: f64,
    /// The same entry read with the indices of `J` in matrix order
    /// (`−½ J^j_k`); differs from the true symbol whenever `J ≠ 0`.
    pub gammaj_0k_matrix_order: f64,
    pub max: f64,
}

/// Compares FD Christoffel symbols of `g` at the centre against the table.
pub fn kk_christoffel_check(s: &AlmostKahlerStructure, center: &[f64]) -> ChristoffelResiduals {
    let m = KKMetric::new(s, center);
    let d = s.dim();
    let dm = d + 1;
    let mut z = vec![0.0];
    z.extend_from_slice(center);
    let h = 1e-4;
    let dg: Vec<DMatrix<f64>> = (0..dm)
        .map(|mu| {
            let at = |t: f64| {
                let mut y = z.clone();
                y[mu] += t;
                m.metric(&y)
            };
            (at(-2.0 * h) - at(2.0 * h) + (at(h) - at(-h)) * 8.0) / (12.0 * h)
        })
        .collect();
    let gam = christoffel_of(&m.metric(&z), &dg);
    let gv = |a: usize, b: usize, c: usize| gam[(a * dm + b) * dm + c];

    let local: LocalGeometry = s.local(center);
    let beta = &local.beta.value;
    let bi = &local.beta_inv;
    let j = &local.j.value;
    // J_k^j = (β J β⁻¹)_{kj}
    let j_mixed = beta * j * bi;

    let mut r = ChristoffelResiduals {
        gamma_00: 0.0,
        gamma0_0j: 0.0,
        gammaj_0k: 0.0,
        gammaj_lk: 0.0,
        gamma0_jk: 0.0,
        gammaj_0k_matrix_order: 0.0,
        max: 0.0,
    };
    r.gamma_00 = (0..dm).map(|a| gv(a, 0, 0).abs()).fold(0.0, f64::max);
    for jj in 0..d {
        r.gamma0_0j = r.gamma0_0j.max(gv(0, 0, jj + 1).abs());
        for k in 0..d {
            let sym = gv(jj + 1, 0, k + 1);
            r.gammaj_0k = r.gammaj_0k.max((sym + 0.5 * j_mixed[(k, jj)]).abs());
            r.gammaj_0k_matrix_order = r.gammaj_0k_matrix_order.max((sym + 0.5 * j[(jj, k)]).abs());
            r.gamma0_jk = r.gamma0_jk.max(gv(0, jj + 1, k + 1).abs());
            for l in 0..d {
                let f = local.g(jj, l, k);
                r.gammaj_lk = r.gammaj_lk.max((gv(jj + 1, l + 1, k + 1) - f).abs());
            }
        }
    }
    r.max = [r.gamma_00, r.gamma0_0j, r.gammaj_0k, r.gammaj_lk, r.gamma0_jk]
        .into_iter()
        .fold(0.0, f64::max);
    r
}

/// Sampled geodesic with integrator statistics.
#[derive(Clone, Debug, Serialize)]
pub struct GeodesicPath {
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    pub energies: Vec<f64>,
    pub step: f64,
    pub max_drift: f64,
}

impl GeodesicPath {
    /// CSV with columns `t, theta, x1.., energy`.
    pub fn to_csv(&self) -> String {
        let d = self.positions.first().map_or(1, |p| p.len()) - 1;
        let mut out = String::from("t,theta");
        for i in 1..=d {
            out.push_str(&format!(",x{i}"));
        }
        out.push_str(",energy\n");
        for ((t, z), e) in self.times.iter().zip(&self.positions).zip(&self.energies) {
            out.push_str(&format!("{t:.12e}"));
            for c in z {
                out.push_str(&format!(",{c:.12e}"));
            }
            out.push_str(&format!(",{e:.12e}\n"));
        }
        out
    }
}

struct Phase {
    z: DVector<f64>,
    p: DVector<f64>,
}

fn hamiltonian_rhs(m: &KKMetric, z: &DVector<f64>, p: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let (g, d1, _) = m.jets(z.as_slice());
    let gi = g.try_inverse().expect("invertible metric");
    let v = &gi * p;
    let dp = DVector::from_iterator(v.len(), d1.iter().map(|dg| 0.5 * v.dot(&(dg * &v))));
    (v, dp)
}

fn energy(m: &KKMetric, z: &DVector<f64>, p: &DVector<f64>) -> f64 {
    let gi = m.inverse(z.as_slice());
    0.5 * p.dot(&(&gi * p))
}

/// Integrates the geodesic with `z(0) = z0`, `ż(0) = v0` on `[0, t_end]`.
pub fn geodesic_integrate(
    m: &KKMetric,
    z0: &[f64],
    v0: &[f64],
    t_end: f64,
    steps: usize,
) -> Result<GeodesicPath, KkError> {
    let dm = m.dim();
    if z0.len() != dm || v0.len() != dm {
        return Err(KkError::InvalidInput(format!("expected vectors of length {dm}")));
    }
    if steps < 100 {
        return Err(KkError::InvalidInput(format!("steps = {steps} < 100")));
    }
    if v0.iter().all(|v| *v == 0.0) {
        return Err(KkError::InvalidInput("zero initial velocity".into()));
    }
    let h = t_end / steps as f64;
    let z = DVector::from_column_slice(z0);
    let p = m.metric(z0) * DVector::from_column_slice(v0);
    let mut st = Phase { z, p };
    let e0 = energy(m, &st.z, &st.p);
    let mut path = GeodesicPath {
        times: Vec::with_capacity(steps + 1),
        positions: Vec::with_capacity(steps + 1),
        velocities: Vec::with_capacity(steps + 1),
        energies: Vec::with_capacity(steps + 1),
        step: h,
        max_drift: 0.0,
    };
    let record = |path: &mut GeodesicPath, t: f64, st: &Phase, e: f64| {
        let v = m.inverse(st.z.as_slice()) * &st.p;
        path.times.push(t);
        path.positions.push(st.z.iter().cloned().collect());
        path.velocities.push(v.iter().cloned().collect());
        path.energies.push(e);
    };
    record(&mut path, 0.0, &st, e0);
    for i in 0..steps {
        let (k1z, k1p) = hamiltonian_rhs(m, &st.z, &st.p);
        let (k2z, k2p) = hamiltonian_rhs(m, &(&st.z + &k1z * (h / 2.0)), &(&st.p + &k1p * (h / 2.0)));
        let (k3z, k3p) = hamiltonian_rhs(m, &(&st.z + &k2z * (h / 2.0)), &(&st.p + &k2p * (h / 2.0)));
        let (k4z, k4p) = hamiltonian_rhs(m, &(&st.z + &k3z * h), &(&st.p + &k3p * h));
        st.z += (k1z + k2z * 2.0 + k3z * 2.0 + k4z) * (h / 6.0);
        st.p += (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (h / 6.0);
        let e = energy(m, &st.z, &st.p);
        path.max_drift = path.max_drift.max(((e - e0) / e0).abs());
        record(&mut path, (i + 1) as f64 * h, &st, e);
    }
    if path.max_drift > MAX_DRIFT {
        return Err(KkError::Drift {
            achieved: path.max_drift,
            allowed: MAX_DRIFT,
            step: h,
        });
    }
    Ok(path)
}

/// Geodesic along `∂_θ` from `(0, x0)` over one period; returns the maximum
/// base-point deviation `|x(t) − x0|`.
pub fn fiber_deviation(m: &KKMetric, x0: &[f64], steps: usize) -> Result<f64, KkError> {
    let mut z0 = vec![0.0];
    z0.extend_from_slice(x0);
    let mut v0 = vec![0.0; m.dim()];
    v0[0] = 1.0;
    let path = geodesic_integrate(m, &z0, &v0, 2.0 * std::f64::consts::PI, steps)?;
    Ok(path
        .positions
        .iter()
        .map(|z| {
            z[1..]
                .iter()
                .zip(x0)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max))
}

/// Result of the radial Taylor fit of `G_00` in Fermi coordinates.
#[derive(Clone, Debug, Serialize)]
pub struct FermiFit {
    /// Mean quadratic coefficient per unit `|z|²` (expected `−¼`).
    pub a2_coeff: f64,
    /// Largest `|cubic coefficient|` over the sampled directions (expected `0`).
    pub a3_coeff: f64,
    /// Largest deviation of any quadratic coefficient from the mean.
    pub a2_spread: f64,
    /// Per-direction coefficients `(c1, …, c6)`.
    pub coefficients: Vec<[f64; FIT_ORDER]>,
    pub radii: Vec<f64>,
    /// Condition number of the scaled design matrix.
    pub condition_number: f64,
    pub max_fit_residual: f64,
    pub flagged: bool,
}

/// Fit conditioning above which the result is flagged.
pub const MAX_CONDITION: f64 = 1e10;

const FERMI_STEPS: usize = 200;

/// Highest power of `r` in the radial fit. Going to sixth order leaves the
/// cubic estimate with an `O(r⁴)` bias from the seventh-order term.
pub const FIT_ORDER: usize = 6;

/// One geodesic plus its variational flow. Returns `G_00 = g(∂_s, ∂_s)` at the
/// endpoint `exp_{p0}(V)`, where `∂_s = ∂_θ + J(1)` and `J` is the Jacobi field
/// with `J(0) = 0`, `J̇(0) = −Γ_0 V` (the fiber-transport derivative of the frame).
fn g00_at(m: &KKMetric, z0: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let dm = m.dim();
    let (g0, d10, _) = m.jets(z0.as_slice());
    let gam = christoffel_of(&g0, &d10);
    let w = DVector::from_fn(dm, |mu, _| {
        -(0..dm).map(|nu| gam[(mu * dm) * dm + nu] * v[nu]).sum::<f64>()
    });
    let mut z = z0.clone();
    let mut p = &g0 * v;
    let mut dz = DVector::zeros(dm);
    let mut dp = &g0 * w;
    let rhs = |z: &DVector<f64>, p: &DVector<f64>, dz: &DVector<f64>, dp: &DVector<f64>| {
        let (g, d1, d2) = m.jets(z.as_slice());
        let gi = g.try_inverse().expect("invertible metric");
        let vel = &gi * p;
        let mut dgz = DMatrix::zeros(dm, dm);
        for (i, dg) in d1.iter().enumerate() {
            dgz += dg * dz[i];
        }
        let dvel = -(&gi * dgz * &gi) * p + &gi * dp;
        let pdot = DVector::from_fn(dm, |mu, _| 0.5 * vel.dot(&(&d1[mu] * &vel)));
        let dpdot = DVector::from_fn(dm, |mu, _| {
            let mut hmu = DMatrix::zeros(dm, dm);
            for i in 0..dm {
                if dz[i] != 0.0 {
                    hmu += &d2[mu * dm + i] * dz[i];
                }
            }
            vel.dot(&(&d1[mu] * &dvel)) + 0.5 * vel.dot(&(hmu * &vel))
        });
        (vel, pdot, dvel, dpdot)
    };
    let h = 1.0 / FERMI_STEPS as f64;
    for _ in 0..FERMI_STEPS {
        let (a1, b1, c1, e1) = rhs(&z, &p, &dz, &dp);
        let (a2, b2, c2, e2) = rhs(
            &(&z + &a1 * (h / 2.0)),
            &(&p + &b1 * (h / 2.0)),
            &(&dz + &c1 * (h / 2.0)),
            &(&dp + &e1 * (h / 2.0)),
        );
        let (a3, b3, c3, e3) = rhs(
            &(&z + &a2 * (h / 2.0)),
            &(&p + &b2 * (h / 2.0)),
            &(&dz + &c2 * (h / 2.0)),
            &(&dp + &e2 * (h / 2.0)),
        );
        let (a4, b4, c4, e4) = rhs(&(&z + &a3 * h), &(&p + &b3 * h), &(&dz + &c3 * h), &(&dp + &e3 * h));
        z += (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (h / 6.0);
        p += (b1 + b2 * 2.0 + b3 * 2.0 + b4) * (h / 6.0);
        dz += (c1 + c2 * 2.0 + c3 * 2.0 + c4) * (h / 6.0);
        dp += (e1 + e2 * 2.0 + e3 * 2.0 + e4) * (h / 6.0);
    }
    let mut ds = dz;
    ds[0] += 1.0;
    let g = m.metric(z.as_slice());
    ds.dot(&(&g * &ds))
}

fn inv_sqrt_spd(b: &DMatrix<f64>) -> DMatrix<f64> {
    let e = b.clone().symmetric_eigen();
    let mut out = DMatrix::zeros(b.nrows(), b.ncols());
    for (i, lam) in e.eigenvalues.iter().enumerate() {
        let v = e.eigenvectors.column(i);
        out += &v * v.transpose() / lam.sqrt();
    }
    out
}

/// Fits `G_00(r ŷ) = 1 + c1 r + … + c6 r⁶` along several unit
/// directions `ŷ` of a β-orthonormal horizontal frame at `x0`, sampling `±r`
/// for every radius.
pub fn fermi_expansion_check(s: &AlmostKahlerStructure, x0: &[f64], radii: &[f64]) -> Result<FermiFit, KkError> {
    if radii.len() < 4 {
        return Err(KkError::InvalidInput("need at least 4 radii".into()));
    }
    if radii.windows(2).any(|w| w[1] >= w[0]) || radii.iter().any(|r| *r <= 0.0) {
        return Err(KkError::InvalidInput("radii must be positive and decreasing".into()));
    }
    let d = s.dim();
    let m = KKMetric::new(s, x0);
    let mut z0 = DVector::zeros(d + 1);
    for i in 0..d {
        z0[i + 1] = x0[i];
    }
    let frame = inv_sqrt_spd(&s.metric_at(x0));
    let mut dirs: Vec<DVector<f64>> = (0..d)
        .map(|i| DVector::from_fn(d, |j, _| (i == j) as u8 as f64))
        .collect();
    dirs.push(DVector::from_element(d, 1.0 / (d as f64).sqrt()));
    dirs.push(DVector::from_fn(
        d,
        |j, _| if j % 2 == 0 { 1.0 } else { -1.0 } / (d as f64).sqrt(),
    ));

    let rmax = radii[0];
    let mut samples = Vec::new();
    for r in radii {
        samples.push(*r);
        samples.push(-*r);
    }
    let design = DMatrix::from_fn(samples.len(), FIT_ORDER, |i, j| (samples[i] / rmax).powi(j as i32 + 1));
    let sv = design.clone().svd(true, true);
    let smax = sv.singular_values.max();
    let smin = sv.singular_values.min();
    let condition_number = smax / smin;

    let mut coefficients = Vec::new();
    let mut max_fit_residual = 0.0_f64;
    for dir in &dirs {
        let yv = &frame * dir;
        let rhs = DVector::from_iterator(
            samples.len(),
            samples.iter().map(|r| {
                let mut v = DVector::zeros(d + 1);
                for i in 0..d {
                    v[i + 1] = r * yv[i];
                }
                g00_at(&m, &z0, &v) - 1.0
            }),
        );
        let sol = sv.solve(&rhs, 1e-14).expect("SVD solve");
        let resid = (&design * &sol - &rhs).amax();
        max_fit_residual = max_fit_residual.max(resid);
        coefficients.push(std::array::from_fn(|j| sol[j] / rmax.powi(j as i32 + 1)));
    }
    let a2 = coefficients.iter().map(|c| c[1]).sum::<f64>() / coefficients.len() as f64;
    let a2_spread = coefficients.iter().map(|c| (c[1] - a2).abs()).fold(0.0, f64::max);
    let a3 = coefficients.iter().map(|c| c[2].abs()).fold(0.0, f64::max);
    Ok(FermiFit {
        a2_coeff: a2,
        a3_coeff: a3,
        a2_spread,
        coefficients,
        radii: radii.to_vec(),
        condition_number,
        max_fit_residual,
        flagged: condition_number > MAX_CONDITION,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_structure, JFamilySpec};
    use std::f64::consts::PI;

    fn shear() -> AlmostKahlerStructure {
        build_structure(JFamilySpec::shear(2, 0.4)).unwrap()
    }

    #[test]
    fn flat_metric_at_center_is_diagonal() {
        let s = build_structure(JFamilySpec::flat(2)).unwrap();
        let c = [0.3, 0.2, 0.1, 0.6];
        let m = KKMetric::new(&s, &c);
        let mut z = vec![1.0];
        z.extend_from_slice(&c);
        let g = m.metric(&z);
        let mut expect = DMatrix::identity(5, 5) * (2.0 * PI);
        expect[(0, 0)] = 1.0;
        assert_eq!(g, expect);
    }

    #[test]
    fn inverse_matches_block_formula() {
        let s = shear();
        let m = KKMetric::new(&s, &[0.1, 0.2, 0.3, 0.4]);
        for z in [[0.0, 0.5, 0.1, 0.9, 0.3], [2.0, 0.05, 0.7, 0.2, 0.8]] {
            let g = m.metric(&z);
            let gi = m.inverse_block(&z);
            assert!((&g * &gi - DMatrix::identity(5, 5)).amax() < 1e-12);
            assert!((gi - m.inverse(&z)).amax() < 1e-12);
        }
    }

    #[test]
    fn analytic_metric_derivatives_match_fd() {
        let s = shear();
        let m = KKMetric::new(&s, &[0.1, 0.2, 0.3, 0.4]);
        let z = [0.3, 0.2, 0.5, 0.7, 0.1];
        let (_, d1, d2) = m.jets(&z);
        let h = 1e-3;
        let st = |f: &dyn Fn(f64) -> DMatrix<f64>| (f(-2.0 * h) - f(2.0 * h) + (f(h) - f(-h)) * 8.0) / (12.0 * h);
        for mu in 0..5 {
            let shift = |t: f64| {
                let mut y = z.to_vec();
                y[mu] += t;
                y
            };
            for nu in 0..5 {
                let fd = st(&|t| m.jets(&shift(t)).1[nu].clone());
                let e = (fd - &d2[mu * 5 + nu]).amax();
                assert!(e < 1e-6, "{mu} {nu} {e:e}");
            }
            let fd = st(&|t| m.metric(&shift(t)));
            assert!((fd - &d1[mu]).amax() < 1e-7);
        }
    }

    #[test]
    fn christoffel_table_at_center() {
        let flat = build_structure(JFamilySpec::flat(2)).unwrap();
        let r = kk_christoffel_check(&flat, &[0.2, 0.3, 0.4, 0.5]);
        assert!(r.max < 1e-10, "{r:?}");
        let r = kk_christoffel_check(&shear(), &[0.1, 0.3, 0.4, 0.5]);
        assert!(r.max < 1e-6, "{r:?}");
    }

    #[test]
    fn fiber_is_geodesic() {
        let s = shear();
        let m = KKMetric::new(&s, &[0.0; 4]);
        let dev = fiber_deviation(&m, &[0.3, 0.1, 0.6, 0.2], 400).unwrap();
        assert!(dev < 1e-9, "{dev}");
    }

    #[test]
    fn flat_horizontal_geodesic_is_straight() {
        let s = build_structure(JFamilySpec::flat(2)).unwrap();
        let x0 = [0.2, 0.3, 0.4, 0.5];
        let m = KKMetric::new(&s, &x0);
        let u = [0.3, -0.2, 0.1, 0.25];
        let mut z0 = vec![0.0];
        z0.extend_from_slice(&x0);
        let a = m.gauge(&x0);
        let mut v0 = vec![-(0..4).map(|j| a[j] * u[j]).sum::<f64>()];
        v0.extend_from_slice(&u);
        let path = geodesic_integrate(&m, &z0, &v0, 1.0, 200).unwrap();
        for (t, z) in path.times.iter().zip(&path.positions) {
            for j in 0..4 {
                assert!((z[j + 1] - x0[j] - t * u[j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn geodesics_are_time_reversible() {
        let s = shear();
        let m = KKMetric::new(&s, &[0.1, 0.0, 0.2, 0.0]);
        let z0 = [0.0, 0.1, 0.2, 0.3, 0.4];
        let v0 = [0.3, 0.05, -0.02, 0.04, 0.03];
        let fwd = geodesic_integrate(&m, &z0, &v0, 1.0, 400).unwrap();
        let end = fwd.positions.last().unwrap();
        let back_v: Vec<f64> = fwd.velocities.last().unwrap().iter().map(|v| -v).collect();
        let back = geodesic_integrate(&m, end, &back_v, 1.0, 400).unwrap();
        let fin = back.positions.last().unwrap();
        for (a, b) in fin.iter().zip(&z0) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(fwd.max_drift < MAX_DRIFT);
    }

    #[test]
    fn rejects_short_integrations() {
        let s = shear();
        let m = KKMetric::new(&s, &[0.0; 4]);
        assert!(geodesic_integrate(&m, &[0.0; 5], &[1.0, 0.0, 0.0, 0.0, 0.0], 1.0, 10).is_err());
        assert!(geodesic_integrate(&m, &[0.0; 5], &[0.0; 5], 1.0, 200).is_err());
    }

    #[test]
    fn flat_fermi_quadratic_coefficient() {
        let s = build_structure(JFamilySpec::flat(2)).unwrap();
        let fit = fermi_expansion_check(&s, &[0.2, 0.3, 0.4, 0.5], &[0.4, 0.3, 0.2, 0.1]).unwrap();
        assert!((fit.a2_coeff + 0.25).abs() < 1e-4, "{fit:?}");
        assert!(fit.a3_coeff < 1e-6, "{fit:?}");
        assert!(!fit.flagged);
    }

    #[test]
    fn perturbed_fermi_cubic_vanishes_at_fourth_order() {
        let s = shear();
        let x0 = [0.1, 0.2, 0.3, 0.4];
        let coarse = fermi_expansion_check(&s, &x0, &[0.2, 0.15, 0.1, 0.05]).unwrap();
        let fine = fermi_expansion_check(&s, &x0, &[0.1, 0.075, 0.05, 0.025]).unwrap();
        assert!((coarse.a2_coeff + 0.25).abs() < 1e-4);
        assert!(coarse.a3_coeff < 1e-4);
        assert!(coarse.a3_coeff / fine.a3_coeff >= 4.0);
    }
}
