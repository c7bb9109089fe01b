//! Gaussian coherent states centred at a grid point, written in the
//! operator's gauge, and the probes evaluated on them.

use super::AnalysisError;
use crate::quantization::{transition_phase, HermitianOperator, LinearOperator};
use crate::C64;
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

pub const MIN_POINTS_PER_EFOLDING: f64 = 6.0;

/// Images whose Gaussian exponent exceeds this are dropped.
const TAIL_EXPONENT: f64 = 14.0;
const THETA_TABLE: usize = 4096;

#[derive(Clone, Debug, Serialize)]
pub struct QuasimodeVector {
    #[serde(skip)]
    pub psi: Vec<C64>,
    pub x0: Vec<f64>,
    pub k: u32,
    pub grid: usize,
    /// Gaussian parameter `k + n/2`.
    pub kappa: f64,
    /// Continuum normalization with respect to `ωⁿ/n!`.
    pub lambda_k: f64,
    /// E-folding length of the amplitude along the stiffest metric direction.
    pub width: f64,
    pub points_per_efolding: f64,
}

/// `β` sampled over the structure phase; every metric quantity depends on the
/// point only through it.
struct MetricTable {
    values: Vec<Vec<f64>>,
}

impl MetricTable {
    fn new(op: &HermitianOperator) -> Self {
        let s = op.structure();
        let values = (0..=THETA_TABLE)
            .map(|i| {
                let x = s.point_with_theta(2.0 * PI * i as f64 / THETA_TABLE as f64);
                s.metric_at(&x).iter().cloned().collect()
            })
            .collect();
        Self { values }
    }

    fn quad(&self, theta: f64, d: &[f64], out: &mut [f64]) -> f64 {
        let t = theta.rem_euclid(2.0 * PI) / (2.0 * PI) * THETA_TABLE as f64;
        let i = (t.floor() as usize).min(THETA_TABLE - 1);
        let w = t - i as f64;
        let (a, b) = (&self.values[i], &self.values[i + 1]);
        for (o, (x, y)) in out.iter_mut().zip(a.iter().zip(b)) {
            *o = (1.0 - w) * x + w * y;
        }
        let n = d.len();
        let mut q = 0.0;
        for c in 0..n {
            for r in 0..n {
                q += d[r] * out[c * n + r] * d[c];
            }
        }
        q
    }
}

struct Scratch {
    x: Vec<f64>,
    m: Vec<i64>,
    y: Vec<f64>,
    buf: Vec<f64>,
}

struct ImageSum<'a> {
    d: usize,
    kf: f64,
    kappa: f64,
    x0: &'a [f64],
    center: &'a [f64],
    shift: &'a [f64],
    wave: &'a [f64],
    theta0: f64,
    tens: &'a [f64],
    table: &'a MetricTable,
    /// Euclidean bound on the displacement of any image that survives.
    radius2: f64,
    reach: &'a [f64],
    op: &'a HermitianOperator,
}

impl ImageSum<'_> {
    /// Adds the images `x + m` over the remaining axes `a..`, pruning on the
    /// partial Euclidean length.
    fn visit(&self, a: usize, r2: f64, w: &mut Scratch, acc: &mut C64) {
        if a == self.d {
            self.leaf(w, acc);
            return;
        }
        let base = w.x[a] - self.x0[a];
        let lo = (-base - self.reach[a]).ceil() as i64;
        let hi = (-base + self.reach[a]).floor() as i64;
        for m in lo..=hi {
            let y = base + m as f64;
            let r = r2 + y * y;
            if r > self.radius2 {
                continue;
            }
            w.m[a] = m;
            w.y[a] = y;
            self.visit(a + 1, r, w, acc);
        }
    }

    fn leaf(&self, w: &mut Scratch, acc: &mut C64) {
        let d = self.d;
        let y = &w.y;
        let vy: f64 = self.wave.iter().zip(y.iter()).map(|(v, yi)| v * yi).sum();
        let expo = 0.25 * self.kappa * self.table.quad(self.theta0 + PI * vy, y, &mut w.buf);
        if expo > TAIL_EXPONENT {
            return;
        }
        let mut cubic = 0.0;
        for a in 0..d {
            for b in 0..d {
                let row = &self.tens[(a * d + b) * d..(a * d + b + 1) * d];
                let inner: f64 = row.iter().zip(y.iter()).map(|(t, yc)| t * yc).sum();
                cubic += y[a] * y[b] * inner;
            }
        }
        let gauge: f64 = (0..d).map(|a| self.shift[a] * (w.x[a] + w.m[a] as f64)).sum();
        let chi = transition_phase(self.op.structure(), self.center, &w.m, &w.x);
        *acc += C64::from_polar((-expo).exp(), self.kf * (gauge - cubic / 12.0 - chi));
    }
}

/// Minimal-image displacement from `x0` to `x` on the unit torus.
pub fn nearest_image(x: &[f64], x0: &[f64]) -> Vec<f64> {
    x.iter().zip(x0).map(|(a, b)| (a - b) - (a - b).round()).collect()
}

/// Gaussian coherent state at the grid point `x0` for the level and grid of
/// `op`.
///
/// Amplitude `exp(−κ d²/4)` with `d²` the squared geodesic distance to cubic
/// order, `β_ij(x0 + y/2) y^i y^j`. The phase carries the normal-coordinate
/// gauge at `x0` into the operator gauge: the linear shift of centre plus the
/// cubic term `−(k/12) y^a Ω_ab Γ^b_mn y^m y^n`. Images are summed with the
/// translation cocycle so the result is a section.
pub fn coherent_state(op: &HermitianOperator, x0: &[f64]) -> Result<QuasimodeVector, AnalysisError> {
    let s = op.structure();
    let d = s.dim();
    let n_grid = op.grid();
    let h = op.spacing();
    if x0.len() != d {
        return Err(AnalysisError::DimensionMismatch { got: x0.len(), dim: d });
    }
    let mut snapped = Vec::with_capacity(d);
    for &x in x0 {
        let t = x * n_grid as f64;
        if (t - t.round()).abs() > 1e-9 {
            return Err(AnalysisError::OffGrid {
                x0: x0.to_vec(),
                n: n_grid,
            });
        }
        snapped.push((t.round() as i64).rem_euclid(n_grid as i64) as f64 * h);
    }
    let x0 = snapped;
    let k = op.k();
    let kf = k as f64;
    let kappa = kf + 0.5 * s.n() as f64;

    let beta0 = s.metric_at(&x0);
    let eig = SymmetricEigen::new(beta0.clone());
    let lmax = eig.eigenvalues.max();
    let width = 2.0 / (kappa * lmax).sqrt();
    let points = width / h;
    if points < MIN_POINTS_PER_EFOLDING {
        return Err(AnalysisError::UnderResolved {
            points,
            required: MIN_POINTS_PER_EFOLDING,
        });
    }

    let om = s.omega();
    let gamma = s.christoffel(&x0);
    // T_amn = Ω_ab Γ^b_mn
    let mut tens = vec![0.0; d * d * d];
    for a in 0..d {
        for m in 0..d {
            for nn in 0..d {
                tens[(a * d + m) * d + nn] = (0..d).map(|b| om[(a, b)] * gamma[(b * d + m) * d + nn]).sum();
            }
        }
    }
    let table = MetricTable::new(op);
    // Reach of the Gaussian: per axis from the largest inverse metric entry,
    // overall from the smallest metric eigenvalue.
    let mut worst_inv = vec![0.0f64; d];
    let mut softest = f64::INFINITY;
    for i in 0..=256 {
        let x = s.point_with_theta(2.0 * PI * i as f64 / 256.0);
        let inv = s.metric_inverse_at(&x);
        for a in 0..d {
            worst_inv[a] = worst_inv[a].max(inv[(a, a)]);
        }
        softest = softest.min(SymmetricEigen::new(s.metric_at(&x)).eigenvalues.min());
    }
    let reach: Vec<f64> = worst_inv
        .iter()
        .map(|w| (4.0 * TAIL_EXPONENT * w / kappa).sqrt() * 1.01)
        .collect();
    let radius2 = 4.0 * TAIL_EXPONENT / (kappa * softest) * 1.02;
    let wave: Vec<f64> = s.spec().wave.iter().map(|w| *w as f64).collect();
    let theta0 = s.theta(&x0);
    let center = op.center().to_vec();
    // g(y) = ½ (x0 − c)^j Ω_jk y^k
    let shift: Vec<f64> = (0..d)
        .map(|kk| 0.5 * (0..d).map(|j| (x0[j] - center[j]) * om[(j, kk)]).sum::<f64>())
        .collect();

    let sum = ImageSum {
        d,
        kf,
        kappa,
        x0: &x0,
        center: &center,
        shift: &shift,
        wave: &wave,
        theta0,
        tens: &tens,
        table: &table,
        radius2,
        reach: &reach,
        op,
    };
    let total = n_grid.pow(d as u32);
    let mut psi = vec![C64::new(0.0, 0.0); total];
    psi.par_iter_mut().enumerate().for_each_init(
        || Scratch {
            x: vec![0.0; d],
            m: vec![0; d],
            y: vec![0.0; d],
            buf: vec![0.0; d * d],
        },
        |w, (idx, out)| {
            let mut rest = idx;
            for a in (0..d).rev() {
                w.x[a] = (rest % n_grid) as f64 * h;
                rest /= n_grid;
            }
            let mut acc = C64::new(0.0, 0.0);
            sum.visit(0, 0.0, w, &mut acc);
            *out = acc;
        },
    );
    let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    let inv = 1.0 / norm2.sqrt();
    psi.par_iter_mut().for_each(|z| *z *= inv);
    let lambda_k = 1.0 / (norm2 * h.powi(d as i32) * s.volume()).sqrt();
    Ok(QuasimodeVector {
        psi,
        x0,
        k,
        grid: n_grid,
        kappa,
        lambda_k,
        width,
        points_per_efolding: points,
    })
}

/// `⟨ψ, Aψ⟩/⟨ψ, ψ⟩`.
pub fn rayleigh_quotient(op: &HermitianOperator, q: &QuasimodeVector) -> f64 {
    let mut y = vec![C64::new(0.0, 0.0); q.psi.len()];
    op.apply(&q.psi, &mut y);
    HermitianOperator::inner(&q.psi, &y).re / HermitianOperator::inner(&q.psi, &q.psi).re
}

/// `‖(A − target)ψ‖/‖ψ‖`.
pub fn residual_norm(op: &HermitianOperator, q: &QuasimodeVector, target: f64) -> f64 {
    let mut y = vec![C64::new(0.0, 0.0); q.psi.len()];
    op.apply(&q.psi, &mut y);
    let r: f64 = y.iter().zip(&q.psi).map(|(a, p)| (a - p * target).norm_sqr()).sum();
    let n: f64 = q.psi.iter().map(|p| p.norm_sqr()).sum();
    (r / n).sqrt()
}

fn weighted_mean<F: Fn(&[f64]) -> f64 + Sync>(op: &HermitianOperator, q: &QuasimodeVector, f: F) -> f64 {
    // Fixed chunks summed in order keep the result independent of the thread count.
    const CHUNK: usize = 4096;
    let partial: Vec<(f64, f64)> = q
        .psi
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, block)| {
            let mut acc = (0.0, 0.0);
            for (i, p) in block.iter().enumerate() {
                let x = op.position(&op.coords(c * CHUNK + i));
                let w = p.norm_sqr();
                acc.0 += w * f(&nearest_image(&x, &q.x0));
                acc.1 += w;
            }
            acc
        })
        .collect();
    let (num, den) = partial.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    num / den
}

/// Fraction of `|ψ|²` within Euclidean distance `r` of the centre.
pub fn mass_within(op: &HermitianOperator, q: &QuasimodeVector, r: f64) -> f64 {
    weighted_mean(op, q, |y| {
        if y.iter().map(|v| v * v).sum::<f64>() <= r * r {
            1.0
        } else {
            0.0
        }
    })
}

/// `⟨ψ, φψ⟩` for a polynomial `φ` of homogeneity `m` in the minimal-image
/// displacement `y`: `(β₀yy)^{m/2}` for even `m`, `y¹(β₀yy)^{(m−1)/2}` for odd.
pub fn localization_check(op: &HermitianOperator, q: &QuasimodeVector, m: u32) -> f64 {
    let beta0: DMatrix<f64> = op.structure().metric_at(&q.x0);
    let d = beta0.nrows();
    weighted_mean(op, q, |y| {
        let mut b = 0.0;
        for i in 0..d {
            for j in 0..d {
                b += y[i] * beta0[(i, j)] * y[j];
            }
        }
        if m % 2 == 0 {
            b.powi(m as i32 / 2)
        } else {
            y[0] * b.powi((m as i32 - 1) / 2)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_structure, JFamilySpec};
    use crate::quantization::build_operator;

    #[test]
    fn refuses_off_grid_centres_and_coarse_grids() {
        let s = build_structure(JFamilySpec::flat(1)).unwrap();
        let op = build_operator(&s, 4, 24).unwrap();
        assert!(matches!(
            coherent_state(&op, &[0.01, 0.0]),
            Err(AnalysisError::OffGrid { .. })
        ));
        assert!(matches!(
            coherent_state(&op, &[0.0]),
            Err(AnalysisError::DimensionMismatch { .. })
        ));
        let coarse = build_operator(&s, 9, 18).unwrap();
        assert!(matches!(
            coherent_state(&coarse, &[0.0, 0.0]),
            Err(AnalysisError::UnderResolved { .. })
        ));
    }

    #[test]
    fn flat_state_is_normalized_localized_and_nearly_holomorphic() {
        let s = build_structure(JFamilySpec::flat(1)).unwrap();
        let op = build_operator(&s, 12, 48).unwrap();
        let q = coherent_state(&op, &[0.25, 0.5]).unwrap();
        let n: f64 = q.psi.iter().map(|p| p.norm_sqr()).sum();
        assert!((n - 1.0).abs() < 1e-12);
        assert!(mass_within(&op, &q, 5.0 / 12f64.sqrt()) > 0.99);
        assert!(mass_within(&op, &q, 0.35) > 0.99);
        // the lowest Landau level Gaussian: r ≈ 0 up to discretization
        let r = rayleigh_quotient(&op, &q);
        assert!(r.abs() < 0.1, "r = {r}");
        // Λ_k vs (κ/2π)^{n/2}; image overlaps account for the difference
        assert!(
            (q.lambda_k / (q.kappa / (2.0 * PI)).sqrt() - 1.0).abs() < 0.02,
            "{}",
            q.lambda_k
        );
        // E[β₀yy] = 2n/κ for |ψ|² ∝ exp(−κβyy/2); odd moment vanishes
        let m2 = localization_check(&op, &q, 2);
        assert!((m2 / (2.0 / q.kappa) - 1.0).abs() < 0.02, "m2 = {m2}");
        // only the unpaired half-period row breaks the symmetry
        assert!(localization_check(&op, &q, 1).abs() < 1e-4);
    }

    #[test]
    fn state_is_a_section_of_the_bundle() {
        // A gauge-covariant construction gives the same quotient in any gauge.
        let s = build_structure(JFamilySpec::shear(1, 0.3)).unwrap();
        let op = build_operator(&s, 3, 32).unwrap();
        let moved = crate::quantization::build_operator_centered(&s, 3, 32, &[0.25, 0.5]).unwrap();
        let a = coherent_state(&op, &[0.0, 0.5]).unwrap();
        let b = coherent_state(&moved, &[0.0, 0.5]).unwrap();
        let ra = rayleigh_quotient(&op, &a);
        let rb = rayleigh_quotient(&moved, &b);
        assert!((ra - rb).abs() < 1e-9, "{ra} vs {rb}");
    }

    #[test]
    fn exact_eigenvector_residual_is_the_eigenvalue_offset() {
        let s = build_structure(JFamilySpec::flat(1)).unwrap();
        let op = build_operator(&s, 2, 12).unwrap();
        let opts = crate::quantization::SolverOptions {
            keep_vectors: true,
            ..Default::default()
        };
        let r = crate::quantization::dense_eigenpairs(&op, crate::quantization::SpectrumTarget::Count(1), &opts);
        let v = r.vectors.unwrap().remove(0);
        let q = QuasimodeVector {
            psi: v,
            x0: vec![0.0, 0.0],
            k: 2,
            grid: 12,
            kappa: 3.0,
            lambda_k: 1.0,
            width: 1.0,
            points_per_efolding: 10.0,
        };
        let target = 0.7;
        assert!((residual_norm(&op, &q, target) - (r.eigenvalues[0] - target).abs()).abs() < 1e-10);
        assert!((rayleigh_quotient(&op, &q) - r.eigenvalues[0]).abs() < 1e-10);
    }
}
