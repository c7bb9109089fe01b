//! Lattice discretization of `□_k = Δ_k − nk` on sections of `L^k` over the
//! torus, and its low-lying spectrum.
//!
//! Sections are represented by their values on the grid `h·Z^{2n} ∩ [0,1)^{2n}`,
//! `h = 1/N`, in the symmetric gauge `a_k(x) = ½(x − c)^j Ω_jk` centred at `c`.
//! Values outside the fundamental domain follow from the magnetic translation
//! rule `ψ(x + m) = e^{ikχ_m(x)} ψ(x)`.
//!
//! Since `det β = det Ω` is constant the Bochner Laplacian reduces to
//! `Δ_k = −(∂_j − ika_j) β^{jl} (∂_l − ika_l)`, discretized in flux form as
//! `Σ D_j^* W^{jl} D_l` with covariant forward differences
//! `D_j ψ(x) = (T_j(x)ψ(x + he_j) − ψ(x))/h` and Peierls links
//! `T_j(x) = e^{−ik∫a}` along the edge.

mod eigen;

pub use eigen::{
    chfsi, dense_eigenpairs, DenseHermitian, LinearOperator, SolverOptions, SpectrumResult, SpectrumTarget,
};

use crate::geometry::AlmostKahlerStructure;
use crate::C64;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantizationError {
    #[error("level k must be at least 1")]
    BadLevel,
    #[error("grid N = {n} under-resolves level k = {k}: the rule N ≥ 6√k requires N ≥ {required}")]
    ResolutionTooLow { n: usize, k: u32, required: usize },
    #[error("flux k·Ω_{a}{b}/2π = {value} is not an integer")]
    NonIntegralFlux { a: usize, b: usize, value: f64 },
    #[error("gauge center has length {got}, expected {expected}")]
    BadCenter { got: usize, expected: usize },
    #[error("requested {requested} eigenvalues but at most {allowed} are allowed at this level")]
    TooManyEigenvalues { requested: usize, allowed: usize },
    #[error("threshold {threshold} is not below a·k = {limit}")]
    ThresholdTooHigh { threshold: f64, limit: f64 },
}

/// Smallest admissible grid for level `k`.
pub fn min_grid(k: u32) -> usize {
    (6.0 * (k as f64).sqrt()).ceil() as usize
}

/// Default grid: the resolution rule, but never below 8.
pub fn auto_grid(k: u32) -> usize {
    min_grid(k).max(8)
}

/// `a_k(x) = ½(x − c)^j Ω_jk`.
pub fn gauge_potential(s: &AlmostKahlerStructure, center: &[f64], x: &[f64]) -> Vec<f64> {
    let d = s.dim();
    let om = s.omega();
    (0..d)
        .map(|k| 0.5 * (0..d).map(|j| (x[j] - center[j]) * om[(j, k)]).sum::<f64>())
        .collect()
}

/// `∫ a` along the straight segment from `x` to `x + len·e_j`. The gauge is
/// linear, so the midpoint rule is exact.
pub fn link_integral(s: &AlmostKahlerStructure, center: &[f64], x: &[f64], j: usize, len: f64) -> f64 {
    let mut mid = x.to_vec();
    mid[j] += 0.5 * len;
    len * gauge_potential(s, center, &mid)[j]
}

/// `∮ a` around the rectangle spanned by `la·e_a` and `lb·e_b` at `x`.
pub fn loop_integral(
    s: &AlmostKahlerStructure,
    center: &[f64],
    x: &[f64],
    a: usize,
    b: usize,
    la: f64,
    lb: f64,
) -> f64 {
    let mut p = x.to_vec();
    let mut total = link_integral(s, center, &p, a, la);
    p[a] += la;
    total += link_integral(s, center, &p, b, lb);
    p[b] += lb;
    total -= link_integral(
        s,
        center,
        &{
            let mut q = p.clone();
            q[a] -= la;
            q
        },
        a,
        la,
    );
    p[a] -= la;
    total -= link_integral(
        s,
        center,
        &{
            let mut q = p.clone();
            q[b] -= lb;
            q
        },
        b,
        lb,
    );
    total
}

/// Magnetic translation cocycle:
/// `χ_m(x) = ½ m^j Ω_jk x^k + ½ Σ_p Ω_{2p,2p+1} m^{2p} m^{2p+1} − ½ c^j Ω_jk m^k`,
/// so that `ψ(x + m) = e^{ikχ_m(x)} ψ(x)`.
pub fn transition_phase(s: &AlmostKahlerStructure, center: &[f64], m: &[i64], x: &[f64]) -> f64 {
    let d = s.dim();
    let om = s.omega();
    let mut chi = 0.0;
    for j in 0..d {
        for k in 0..d {
            chi += 0.5 * m[j] as f64 * om[(j, k)] * x[k];
            chi -= 0.5 * center[j] * om[(j, k)] * m[k] as f64;
        }
    }
    for p in 0..s.n() {
        chi += 0.5 * om[(2 * p, 2 * p + 1)] * (m[2 * p] * m[2 * p + 1]) as f64;
    }
    chi
}

/// Refuses a level at which some `k·Ω_ab/2π` is not an integer, i.e. where
/// the translation cocycle would not close.
pub fn check_flux(omega: &nalgebra::DMatrix<f64>, k: u32) -> Result<(), QuantizationError> {
    for a in 0..omega.nrows() {
        for b in 0..omega.ncols() {
            let value = k as f64 * omega[(a, b)] / (2.0 * PI);
            if (value - value.round()).abs() > 1e-9 {
                return Err(QuantizationError::NonIntegralFlux { a, b, value });
            }
        }
    }
    Ok(())
}

/// Build record written next to every spectrum.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct OperatorMetadata {
    pub grid: usize,
    pub dim: usize,
    pub k: u32,
    /// `k·Ω_{2p,2p+1}/2π` per symplectic plane.
    pub flux: Vec<i64>,
    pub gauge_center: Vec<f64>,
    pub shift: f64,
    pub norm_bound: f64,
    pub mixed_terms: bool,
    pub build_hash: String,
}

/// Sparse Hermitian lattice realization of `□_k`.
#[derive(Clone, Debug)]
pub struct HermitianOperator {
    s: AlmostKahlerStructure,
    k: u32,
    n_grid: usize,
    d: usize,
    len: usize,
    h: f64,
    center: Vec<f64>,
    strides: Vec<usize>,
    partner: Vec<usize>,
    wave: Vec<i64>,
    /// Interior and wrapping link factors, indexed by the partner coordinate.
    link_int: Vec<Vec<C64>>,
    link_wrap: Vec<Vec<C64>>,
    /// `β^{jj}/h²` at `x ± ½he_j`, indexed by `v·i mod N`.
    w_plus: Vec<Vec<f64>>,
    w_minus: Vec<Vec<f64>>,
    /// `β^{jl}/h²` at `x + ½h(e_j + e_l)` for `j ≠ l`, row-major in `(j, l)`.
    w_mixed: Option<Vec<Vec<f64>>>,
    shift: f64,
    norm_bound: f64,
    metadata: OperatorMetadata,
}

struct RowScratch {
    phase: Vec<usize>,
    tf: Vec<C64>,
    tb: Vec<C64>,
}

impl RowScratch {
    fn new(n: usize) -> Self {
        Self {
            phase: vec![0; n],
            tf: vec![C64::new(0.0, 0.0); n],
            tb: vec![C64::new(0.0, 0.0); n],
        }
    }
}

/// Builds `□_k` on an `N^{2n}` grid with gauge centre `0`.
pub fn build_operator(
    s: &AlmostKahlerStructure,
    k: u32,
    n_grid: usize,
) -> Result<HermitianOperator, QuantizationError> {
    build_operator_centered(s, k, n_grid, &vec![0.0; s.dim()])
}

/// Builds `□_k` in the symmetric gauge centred at `center`.
pub fn build_operator_centered(
    s: &AlmostKahlerStructure,
    k: u32,
    n_grid: usize,
    center: &[f64],
) -> Result<HermitianOperator, QuantizationError> {
    if k == 0 {
        return Err(QuantizationError::BadLevel);
    }
    let required = min_grid(k);
    if n_grid < required {
        return Err(QuantizationError::ResolutionTooLow { n: n_grid, k, required });
    }
    let d = s.dim();
    if center.len() != d {
        return Err(QuantizationError::BadCenter {
            got: center.len(),
            expected: d,
        });
    }
    let om = s.omega();
    let kf = k as f64;
    check_flux(om, k)?;

    let nn = n_grid;
    let h = 1.0 / nn as f64;
    let mut strides = vec![1usize; d];
    for a in (0..d - 1).rev() {
        strides[a] = strides[a + 1] * nn;
    }
    let len = strides[0] * nn;
    let partner: Vec<usize> = (0..d).map(|j| j ^ 1).collect();

    let mut link_int = vec![vec![C64::new(0.0, 0.0); nn]; d];
    let mut link_wrap = vec![vec![C64::new(0.0, 0.0); nn]; d];
    for j in 0..d {
        let p = partner[j];
        let mut unit = vec![0i64; d];
        unit[j] = 1;
        for ip in 0..nn {
            let mut x = vec![0.0; d];
            x[p] = ip as f64 * h;
            let phase = -kf * link_integral(s, center, &x, j, h);
            link_int[j][ip] = C64::from_polar(1.0, phase);
            // From x_j = 1 − h the edge lands on x' + e_j with x'_j = 0.
            let wrap = kf * transition_phase(s, center, &unit, &x);
            x[j] = 1.0 - h;
            let phase = -kf * link_integral(s, center, &x, j, h);
            link_wrap[j][ip] = C64::from_polar(1.0, phase + wrap);
        }
    }

    let wave = s.spec().wave.clone();
    let inv_h2 = 1.0 / (h * h);
    let table: Vec<nalgebra::DMatrix<f64>> = (0..2 * nn)
        .map(|idx| {
            let theta = 2.0 * PI * idx as f64 / (2 * nn) as f64 + s.spec().phase;
            s.metric_inverse_at(&s.point_with_theta(theta))
        })
        .collect();
    let half = |p: usize, off: i64| -> usize { (2 * p as i64 + off).rem_euclid(2 * nn as i64) as usize };
    let mut w_plus = vec![vec![0.0; nn]; d];
    let mut w_minus = vec![vec![0.0; nn]; d];
    for j in 0..d {
        for p in 0..nn {
            w_plus[j][p] = table[half(p, wave[j])][(j, j)] * inv_h2;
            w_minus[j][p] = table[half(p, -wave[j])][(j, j)] * inv_h2;
        }
    }
    let max_off = table
        .iter()
        .flat_map(|m| (0..d).flat_map(move |j| (0..d).filter(move |l| *l != j).map(move |l| m[(j, l)].abs())))
        .fold(0.0, f64::max);
    let max_diag = table
        .iter()
        .flat_map(|m| (0..d).map(move |j| m[(j, j)].abs()))
        .fold(0.0, f64::max);
    let w_mixed = if max_off > 1e-14 * max_diag {
        let mut w = vec![vec![0.0; nn]; d * d];
        for j in 0..d {
            for l in 0..d {
                if j != l {
                    for p in 0..nn {
                        w[j * d + l][p] = table[half(p, wave[j] + wave[l])][(j, l)] * inv_h2;
                    }
                }
            }
        }
        Some(w)
    } else {
        None
    };

    let shift = -(s.n() as f64) * kf;
    // Gershgorin: each diagonal stencil row has absolute sum 2(w₊ + w₋), each
    // ordered mixed pair touches four entries.
    let mut bound = (0..nn)
        .map(|p| (0..d).map(|j| 2.0 * (w_plus[j][p] + w_minus[j][p])).sum::<f64>())
        .fold(0.0, f64::max);
    if w_mixed.is_some() {
        bound += 4.0 * (d * (d - 1)) as f64 * max_off * inv_h2;
    }

    let flux = (0..s.n())
        .map(|p| (kf * om[(2 * p, 2 * p + 1)] / (2.0 * PI)).round() as i64)
        .collect();
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(s.spec()).expect("spec serializes"));
    hasher.update(format!("k={k};N={nn};c={center:?}").as_bytes());
    let metadata = OperatorMetadata {
        grid: nn,
        dim: d,
        k,
        flux,
        gauge_center: center.to_vec(),
        shift,
        norm_bound: bound + shift.abs(),
        mixed_terms: w_mixed.is_some(),
        build_hash: hex::encode(hasher.finalize()),
    };

    Ok(HermitianOperator {
        s: s.clone(),
        k,
        n_grid: nn,
        d,
        len,
        h,
        center: center.to_vec(),
        strides,
        partner,
        wave,
        link_int,
        link_wrap,
        w_plus,
        w_minus,
        w_mixed,
        shift,
        norm_bound: bound,
        metadata,
    })
}

impl HermitianOperator {
    pub fn structure(&self) -> &AlmostKahlerStructure {
        &self.s
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn grid(&self) -> usize {
        self.n_grid
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn metadata(&self) -> &OperatorMetadata {
        &self.metadata
    }

    /// The constant `−nk` added to `Δ_k`.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// Flat index of a grid point.
    pub fn index(&self, coords: &[usize]) -> usize {
        coords.iter().zip(&self.strides).map(|(c, s)| c * s).sum()
    }

    pub fn coords(&self, mut idx: usize) -> Vec<usize> {
        let mut c = vec![0; self.d];
        for a in 0..self.d {
            c[a] = idx / self.strides[a];
            idx %= self.strides[a];
        }
        c
    }

    /// Physical position of a grid point.
    pub fn position(&self, coords: &[usize]) -> Vec<f64> {
        coords.iter().map(|c| *c as f64 * self.h).collect()
    }

    /// Link factor on the edge from `coords` to `coords + e_j`.
    pub fn link(&self, j: usize, coords: &[usize]) -> C64 {
        let p = coords[self.partner[j]];
        if coords[j] == self.n_grid - 1 {
            self.link_wrap[j][p]
        } else {
            self.link_int[j][p]
        }
    }

    fn step(&self, coords: &mut [usize], idx: usize, j: usize, forward: bool) -> usize {
        let n = self.n_grid;
        let s = self.strides[j];
        if forward {
            if coords[j] == n - 1 {
                coords[j] = 0;
                idx + s - n * s
            } else {
                coords[j] += 1;
                idx + s
            }
        } else if coords[j] == 0 {
            coords[j] = n - 1;
            idx + n * s - s
        } else {
            coords[j] -= 1;
            idx - s
        }
    }

    /// Largest deviation of a plaquette holonomy from `e^{−ikΩ_ab h²}` over
    /// every elementary plaquette, boundary ones included.
    pub fn plaquette_flux_defect(&self) -> f64 {
        let d = self.d;
        let om = self.s.omega();
        let kf = self.k as f64;
        (0..self.len)
            .into_par_iter()
            .map(|idx| {
                let c = self.coords(idx);
                let mut worst = 0.0_f64;
                for a in 0..d {
                    for b in a + 1..d {
                        let mut ca = c.clone();
                        self.step(&mut ca, idx, a, true);
                        let mut cb = c.clone();
                        self.step(&mut cb, idx, b, true);
                        let hol =
                            self.link(a, &c) * self.link(b, &ca) * self.link(a, &cb).conj() * self.link(b, &c).conj();
                        let expect = C64::from_polar(1.0, -kf * om[(a, b)] * self.h * self.h);
                        worst = worst.max((hol - expect).norm());
                    }
                }
                worst
            })
            .reduce(|| 0.0, f64::max)
    }

    /// `⟨u, v⟩` on grid vectors (unweighted).
    pub fn inner(u: &[C64], v: &[C64]) -> C64 {
        u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
    }

    /// Applies the operator to one row along the last (contiguous) axis.
    /// `c` holds the row's leading coordinates; `r` is its first index.
    fn apply_row(&self, x: &[C64], out: &mut [C64], c: &mut [usize], r: usize, scratch: &mut RowScratch) {
        let n = self.n_grid;
        let d = self.d;
        let last = d - 1;
        let pb: i64 = (0..last).map(|a| c[a] as i64 * self.wave[a]).sum();
        if self.wave[last] == 0 {
            self.apply_row_uniform(x, out, c, r, pb.rem_euclid(n as i64) as usize);
            if self.w_mixed.is_some() {
                let p = pb.rem_euclid(n as i64) as usize;
                for (i, o) in out.iter_mut().enumerate() {
                    c[last] = i;
                    *o += self.mixed_site(x, r + i, c, p);
                }
            }
            return;
        }
        for (i, p) in scratch.phase.iter_mut().enumerate() {
            *p = (pb + self.wave[last] * i as i64).rem_euclid(n as i64) as usize;
        }
        let xr = &x[r..r + n];
        for (o, xi) in out.iter_mut().zip(xr) {
            *o = xi * self.shift;
        }
        for j in 0..last {
            let s = self.strides[j];
            let (rf, rb) = (
                if c[j] == n - 1 { r + s - n * s } else { r + s },
                if c[j] == 0 { r + n * s - s } else { r - s },
            );
            let tf_table = if c[j] == n - 1 {
                &self.link_wrap[j]
            } else {
                &self.link_int[j]
            };
            let tb_table = if c[j] == 0 {
                &self.link_wrap[j]
            } else {
                &self.link_int[j]
            };
            if self.partner[j] == last {
                scratch.tf.copy_from_slice(tf_table);
                for (t, v) in scratch.tb.iter_mut().zip(tb_table) {
                    *t = v.conj();
                }
            } else {
                let pc = c[self.partner[j]];
                scratch.tf.fill(tf_table[pc]);
                scratch.tb.fill(tb_table[pc].conj());
            }
            let (wp, wm) = (&self.w_plus[j], &self.w_minus[j]);
            let (xf, xb) = (&x[rf..rf + n], &x[rb..rb + n]);
            for i in 0..n {
                let p = scratch.phase[i];
                let (a, b) = (wp[p], wm[p]);
                out[i] += xr[i] * (a + b) - scratch.tf[i] * xf[i] * a - scratch.tb[i] * xb[i] * b;
            }
        }
        let pc = c[self.partner[last]];
        let (ti, tw) = (self.link_int[last][pc], self.link_wrap[last][pc]);
        let (wp, wm) = (&self.w_plus[last], &self.w_minus[last]);
        for i in 0..n {
            let p = scratch.phase[i];
            let (a, b) = (wp[p], wm[p]);
            let (f, tf) = if i == n - 1 { (0, tw) } else { (i + 1, ti) };
            let (bk, tb) = if i == 0 { (n - 1, tw) } else { (i - 1, ti) };
            out[i] += xr[i] * (a + b) - tf * xr[f] * a - tb.conj() * xr[bk] * b;
        }
        if self.w_mixed.is_some() {
            for i in 0..n {
                c[last] = i;
                out[i] += self.mixed_site(x, r + i, c, scratch.phase[i]);
            }
        }
    }

    /// Diagonal stencil on a row along which the structure is constant, so
    /// every weight and most links are constant too.
    fn apply_row_uniform(&self, x: &[C64], out: &mut [C64], c: &[usize], r: usize, p: usize) {
        let n = self.n_grid;
        let last = self.d - 1;
        let xr = &x[r..r + n];
        let mut diag = self.shift;
        out.fill(C64::new(0.0, 0.0));
        for j in 0..last {
            let (a, b) = (self.w_plus[j][p], self.w_minus[j][p]);
            diag += a + b;
            let s = self.strides[j];
            let rf = if c[j] == n - 1 { r + s - n * s } else { r + s };
            let rb = if c[j] == 0 { r + n * s - s } else { r - s };
            let tf_table = if c[j] == n - 1 {
                &self.link_wrap[j]
            } else {
                &self.link_int[j]
            };
            let tb_table = if c[j] == 0 {
                &self.link_wrap[j]
            } else {
                &self.link_int[j]
            };
            let (xf, xb) = (&x[rf..rf + n], &x[rb..rb + n]);
            if self.partner[j] == last {
                for i in 0..n {
                    out[i] -= tf_table[i] * xf[i] * a + tb_table[i].conj() * xb[i] * b;
                }
            } else {
                let pc = c[self.partner[j]];
                let cf = tf_table[pc] * a;
                let cb = tb_table[pc].conj() * b;
                for i in 0..n {
                    out[i] -= cf * xf[i] + cb * xb[i];
                }
            }
        }
        let (a, b) = (self.w_plus[last][p], self.w_minus[last][p]);
        diag += a + b;
        let pc = c[self.partner[last]];
        let (ti, tw) = (self.link_int[last][pc], self.link_wrap[last][pc]);
        let (cf, cb) = (ti * a, ti.conj() * b);
        for i in 1..n - 1 {
            out[i] -= cf * xr[i + 1] + cb * xr[i - 1];
        }
        out[0] -= cf * xr[1] + tw.conj() * b * xr[n - 1];
        out[n - 1] -= tw * a * xr[0] + cb * xr[n - 2];
        for (o, xi) in out.iter_mut().zip(xr) {
            *o += xi * diag;
        }
    }

    /// `Σ_{j≠l} D_j^* W^{jl} D_l ψ` at one site.
    fn mixed_site(&self, x: &[C64], idx: usize, c: &[usize], p: usize) -> C64 {
        let w = self.w_mixed.as_ref().expect("mixed weights present");
        let d = self.d;
        let n = self.n_grid as i64;
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..d {
            for l in 0..d {
                if j == l {
                    continue;
                }
                let table = &w[j * d + l];
                // g(y) = W (D_l ψ)(y); both 1/h factors live in W.
                let mut cl = c.to_vec();
                let il = self.step(&mut cl, idx, l, true);
                let g_here = table[p] * (self.link(l, c) * x[il] - x[idx]);
                let mut cj = c.to_vec();
                let ij = self.step(&mut cj, idx, j, false);
                let pj = (p as i64 - self.wave[j]).rem_euclid(n) as usize;
                let mut cjl = cj.clone();
                let ijl = self.step(&mut cjl, ij, l, true);
                let g_back = table[pj] * (self.link(l, &cj) * x[ijl] - x[ij]);
                acc += self.link(j, &cj).conj() * g_back - g_here;
            }
        }
        acc
    }

    /// Dense matrix, for small grids in tests.
    pub fn to_dense(&self) -> nalgebra::DMatrix<C64> {
        let n = self.len;
        let mut m = nalgebra::DMatrix::zeros(n, n);
        let mut e = vec![C64::new(0.0, 0.0); n];
        let mut col = vec![C64::new(0.0, 0.0); n];
        for j in 0..n {
            e[j] = C64::new(1.0, 0.0);
            self.apply(&e, &mut col);
            for i in 0..n {
                m[(i, j)] = col[i];
            }
            e[j] = C64::new(0.0, 0.0);
        }
        m
    }
}

impl LinearOperator for HermitianOperator {
    fn len(&self) -> usize {
        self.len
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        self.apply_combine(x, x, 1.0, 0.0, 0.0, y);
    }

    fn apply_combine(&self, y: &[C64], prev: &[C64], alpha: f64, beta: f64, gamma: f64, out: &mut [C64]) {
        assert_eq!(y.len(), self.len);
        assert_eq!(prev.len(), self.len);
        assert_eq!(out.len(), self.len);
        let n = self.n_grid;
        let chunk = self.strides[0];
        let plain = alpha == 1.0 && beta == 0.0 && gamma == 0.0;
        out.par_chunks_mut(chunk).enumerate().for_each(|(i0, block)| {
            let mut c = vec![0usize; self.d];
            c[0] = i0;
            let mut scratch = RowScratch::new(n);
            let base = i0 * chunk;
            for (row, o) in block.chunks_mut(n).enumerate() {
                let r = base + row * n;
                self.apply_row(y, o, &mut c, r, &mut scratch);
                if !plain {
                    for ((v, yi), xi) in o.iter_mut().zip(&y[r..r + n]).zip(&prev[r..r + n]) {
                        *v = *v * alpha + yi * beta + xi * gamma;
                    }
                }
                // Advance the odometer over the axes between the first and last.
                let mut a = self.d - 1;
                while a > 1 {
                    a -= 1;
                    c[a] += 1;
                    if c[a] < n {
                        break;
                    }
                    c[a] = 0;
                }
            }
        });
    }

    fn lower_bound(&self) -> f64 {
        self.shift
    }

    fn upper_bound(&self) -> f64 {
        self.norm_bound + self.shift
    }
}

/// Lowest eigenpairs of `□_k`, with the level-dependent limits on what may be
/// requested: at most `2k^n + 20` values, or a threshold below `a·k`.
pub fn lowest_eigenpairs(
    a: &HermitianOperator,
    target: SpectrumTarget,
    threshold_a: f64,
    opts: &SolverOptions,
) -> Result<SpectrumResult, QuantizationError> {
    let k = a.k() as f64;
    let allowed = 2 * (a.k() as usize).pow(a.structure().n() as u32) + 20;
    match target {
        SpectrumTarget::Count(c) | SpectrumTarget::CountWithEdge(c) if c > allowed => {
            return Err(QuantizationError::TooManyEigenvalues { requested: c, allowed })
        }
        SpectrumTarget::Below(t) if t >= threshold_a * k => {
            return Err(QuantizationError::ThresholdTooHigh {
                threshold: t,
                limit: threshold_a * k,
            })
        }
        _ => {}
    }
    Ok(chfsi(a, target, opts))
}
