//! Post-processing of spectra: low-cluster extraction, count and density
//! checks, and coherent-state probes of the local density.

mod quasimode;

pub use quasimode::{
    coherent_state, localization_check, mass_within, nearest_image, rayleigh_quotient, residual_norm, QuasimodeVector,
    MIN_POINTS_PER_EFOLDING,
};

use crate::geometry::AlmostKahlerStructure;
use crate::quantization::SpectrumResult;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("count check needs at least 3 levels, got {got}")]
    TooFewLevels { got: usize },
    #[error("centre {x0:?} is not a grid point of the {n}-grid")]
    OffGrid { x0: Vec<f64>, n: usize },
    #[error("centre has {got} coordinates, the torus has {dim}")]
    DimensionMismatch { got: usize, dim: usize },
    #[error("coherent state under-resolved: {points:.2} grid points per e-folding, need {required}")]
    UnderResolved { points: f64, required: f64 },
}

/// Eigenvalues below the first clear gap of a low spectrum.
#[derive(Clone, Debug, Serialize)]
pub struct ClusterReport {
    pub k: u32,
    pub cluster: Vec<f64>,
    pub n_k: usize,
    /// `k^n` times the product of the Chern integers of the planes.
    pub expected: usize,
    /// First eigenvalue above the gap, when the spectrum reaches it.
    pub gap_edge: Option<f64>,
    pub gap: f64,
    pub mean: f64,
    pub variance: f64,
    /// `m_p = (1/n_k) Σ λ^p` for `p = 1..4`.
    pub moments: Vec<f64>,
    /// Why the run cannot be used downstream, if it cannot.
    pub flag: Option<String>,
}

impl ClusterReport {
    pub fn accepted(&self) -> bool {
        self.flag.is_none() && self.n_k == self.expected
    }
}

pub fn expected_count(s: &AlmostKahlerStructure, k: u32) -> usize {
    let per_plane = s.chern_per_plane().unsigned_abs() as usize * k as usize;
    per_plane.pow(s.n() as u32)
}

/// Splits the spectrum at the largest gap that opens from an eigenvalue in
/// `(−k/2, 3k/2)`. A gap narrower than `k/2`, or a spectrum that stops inside
/// the window, flags the run.
pub fn extract_cluster(spec: &SpectrumResult, k: u32, expected: usize) -> ClusterReport {
    let mut ev = spec.eigenvalues.clone();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let kf = k as f64;
    let (lo, hi) = (-0.5 * kf, 1.5 * kf);
    let mut best: Option<(usize, f64)> = None;
    for i in 0..ev.len().saturating_sub(1) {
        if ev[i] > lo && ev[i] < hi {
            let g = ev[i + 1] - ev[i];
            if best.map_or(true, |(_, b)| g > b) {
                best = Some((i, g));
            }
        }
    }
    let truncated = ev.last().map_or(true, |v| *v < hi) && best.map_or(true, |(_, g)| g < 0.5 * kf);
    let (split, gap, flag) = match best {
        _ if ev.is_empty() => (0, 0.0, Some("empty spectrum".to_string())),
        _ if truncated => (
            ev.len(),
            0.0,
            Some(format!(
                "spectrum ends at {:.4} inside the window, before any gap",
                ev.last().unwrap()
            )),
        ),
        Some((i, g)) if g >= 0.5 * kf => (i + 1, g, None),
        Some((i, g)) => (
            i + 1,
            g,
            Some(format!("largest gap {g:.4} is below k/2 = {:.1}", 0.5 * kf)),
        ),
        None => (0, 0.0, Some("no eigenvalue inside the cluster window".to_string())),
    };
    let cluster = ev[..split].to_vec();
    let n_k = cluster.len();
    let moments: Vec<f64> = (1..=4)
        .map(|p| {
            if n_k == 0 {
                0.0
            } else {
                cluster.iter().map(|l| l.powi(p)).sum::<f64>() / n_k as f64
            }
        })
        .collect();
    let mean = moments[0];
    let variance = if n_k == 0 {
        0.0
    } else {
        cluster.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n_k as f64
    };
    ClusterReport {
        k,
        n_k,
        expected,
        gap_edge: ev.get(split).copied().filter(|_| flag.is_none()),
        gap,
        mean,
        variance,
        moments,
        cluster,
        flag,
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

#[derive(Clone, Debug, Serialize)]
pub struct CountSummary {
    pub ks: Vec<u32>,
    pub observed: Vec<usize>,
    pub expected: Vec<usize>,
    /// Log-log slope of `n_k` against `k`.
    pub slope: f64,
    /// `n_k / (k^n vol)` averaged over the levels.
    pub proportionality: f64,
    /// Levels whose count is off or whose run was flagged.
    pub mismatches: Vec<u32>,
    pub pass: bool,
}

/// Exact count comparison over several levels; `vol` is `∫ωⁿ/n!`.
pub fn count_check(reports: &[ClusterReport], n: usize, vol: f64) -> Result<CountSummary, AnalysisError> {
    if reports.len() < 3 {
        return Err(AnalysisError::TooFewLevels { got: reports.len() });
    }
    let ks: Vec<u32> = reports.iter().map(|r| r.k).collect();
    let observed: Vec<usize> = reports.iter().map(|r| r.n_k).collect();
    let mismatches: Vec<u32> = reports.iter().filter(|r| !r.accepted()).map(|r| r.k).collect();
    let usable: Vec<&ClusterReport> = reports.iter().filter(|r| r.n_k > 0).collect();
    let slope = if usable.len() >= 2 {
        let x: Vec<f64> = usable.iter().map(|r| r.k as f64).collect();
        let y: Vec<f64> = usable.iter().map(|r| r.n_k as f64).collect();
        loglog_slope(&x, &y)
    } else {
        f64::NAN
    };
    let proportionality = usable
        .iter()
        .map(|r| r.n_k as f64 / ((r.k as f64).powi(n as i32) * vol))
        .sum::<f64>()
        / usable.len().max(1) as f64;
    Ok(CountSummary {
        ks,
        observed,
        expected: reports.iter().map(|r| r.expected).collect(),
        pass: mismatches.is_empty() && (slope - n as f64).abs() <= 0.01,
        slope,
        proportionality,
        mismatches,
    })
}

/// Test functions for the spectral-density comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum TestFunction {
    Constant,
    Power(u32),
    /// `exp(−(t − center)²/width²)`.
    Bump {
        center: f64,
        width: f64,
    },
}

impl TestFunction {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            TestFunction::Constant => 1.0,
            TestFunction::Power(p) => t.powi(p as i32),
            TestFunction::Bump { center, width } => (-((t - center) / width).powi(2)).exp(),
        }
    }

    /// Lipschitz constant on `[−r, r]`.
    pub fn lipschitz(&self, r: f64) -> f64 {
        match *self {
            TestFunction::Constant => 0.0,
            TestFunction::Power(0) => 0.0,
            TestFunction::Power(p) => p as f64 * r.powi(p as i32 - 1),
            TestFunction::Bump { width, .. } => std::f64::consts::SQRT_2 * (-0.5f64).exp() / width,
        }
    }

    pub fn name(&self) -> String {
        match *self {
            TestFunction::Constant => "one".into(),
            TestFunction::Power(p) => format!("t^{p}"),
            TestFunction::Bump { center, width } => format!("bump({center},{width})"),
        }
    }
}

/// `t, t², t³, t⁴` and two Gaussian bumps over the range of the density.
pub fn default_test_functions() -> Vec<TestFunction> {
    let mut f: Vec<TestFunction> = (1..=4).map(TestFunction::Power).collect();
    f.push(TestFunction::Bump {
        center: -0.5,
        width: 0.5,
    });
    f.push(TestFunction::Bump {
        center: 0.0,
        width: 1.0,
    });
    f
}

#[derive(Clone, Debug, Serialize)]
pub struct DensityDelta {
    pub function: String,
    pub cluster_average: f64,
    pub torus_average: f64,
    pub delta: f64,
}

/// `Δ_f = |(1/n_k) Σ f(λ) − avg_X f(q)|` with `q = −(5/24)|∇J|²` averaged on
/// the uniform `grid_n` grid.
pub fn density_compare(
    report: &ClusterReport,
    s: &AlmostKahlerStructure,
    fset: &[TestFunction],
    grid_n: usize,
) -> Vec<DensityDelta> {
    fset.iter()
        .map(|f| {
            let cluster_average = report.cluster.iter().map(|l| f.eval(*l)).sum::<f64>() / report.n_k.max(1) as f64;
            let torus_average = s.grid_average(grid_n, |x| f.eval(s.q_density(x)));
            DensityDelta {
                function: f.name(),
                cluster_average,
                torus_average,
                delta: (cluster_average - torus_average).abs(),
            }
        })
        .collect()
}

/// Coefficient `c` in `λ̄_k ≈ c·avg|∇J|²`; the predicted density has
/// `c = −5/24`.
pub fn fitted_density_coefficient(report: &ClusterReport, s: &AlmostKahlerStructure, grid_n: usize) -> f64 {
    report.mean / s.grid_average(grid_n, |x| s.nabla_j_norm_sq(x))
}

/// Exponent `α` of a `C·k^{−α}` fit.
pub fn decay_exponent(ks: &[u32], values: &[f64]) -> f64 {
    let x: Vec<f64> = ks.iter().map(|k| *k as f64).collect();
    let y: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    -loglog_slope(&x, &y)
}

/// Pairs `(i, j)` with `q_i < q_j − margin` but `r_i ≥ r_j`.
pub fn ordering_violations(q: &[f64], r: &[f64], margin: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..q.len() {
        for j in 0..q.len() {
            if q[i] < q[j] - margin && r[i] >= r[j] {
                out.push((i, j));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_structure, JFamilySpec};

    fn spectrum(ev: &[f64]) -> SpectrumResult {
        SpectrumResult {
            eigenvalues: ev.to_vec(),
            residuals: vec![0.0; ev.len()],
            iterations: 1,
            matvecs: 0,
            wall_time_s: 0.0,
            converged: true,
            norm_estimate: 1.0,
            tolerance: 1e-8,
            edge_estimates: 0,
            vectors: None,
        }
    }

    #[test]
    fn landau_like_spectrum_splits_at_the_gap() {
        let r = extract_cluster(&spectrum(&[-0.01, 0.0, 0.01, 0.02, 3.9, 4.0]), 2, 4);
        assert!(r.accepted());
        assert_eq!(r.n_k, 4);
        assert_eq!(r.gap_edge, Some(3.9));
        assert!(r.gap_edge.unwrap() > r.cluster.last().unwrap() + 1.0);
        assert!((r.moments[1] - r.variance - r.mean * r.mean).abs() < 1e-15);
    }

    #[test]
    fn truncated_or_gapless_spectra_are_flagged() {
        let r = extract_cluster(&spectrum(&[0.0, 0.01, 0.02]), 2, 4);
        assert!(r.flag.as_deref().unwrap().contains("before any gap"));
        let r = extract_cluster(
            &spectrum(&[0.0, 0.3, 0.6, 0.9, 1.2, 1.5, 1.9, 2.3, 2.7, 3.1, 3.5]),
            2,
            4,
        );
        assert!(r.flag.is_some());
        assert!(!r.accepted());
        assert!(extract_cluster(&spectrum(&[]), 2, 1).flag.is_some());
    }

    #[test]
    fn counts_and_slope_on_exact_squares() {
        let reports: Vec<ClusterReport> = (1..=4u32)
            .map(|k| {
                let mut ev = vec![0.0; (k * k) as usize];
                ev.push(2.0 * k as f64);
                extract_cluster(&spectrum(&ev), k, (k * k) as usize)
            })
            .collect();
        let c = count_check(&reports, 2, 1.0).unwrap();
        assert_eq!(c.observed, vec![1, 4, 9, 16]);
        assert!((c.slope - 2.0).abs() < 1e-12);
        assert!(c.pass);
        assert!((c.proportionality - 1.0).abs() < 1e-12);
        assert_eq!(
            count_check(&reports[..2], 2, 1.0).unwrap_err(),
            AnalysisError::TooFewLevels { got: 2 }
        );
    }

    #[test]
    fn count_mismatch_names_the_level() {
        let mut reports = Vec::new();
        for k in 1..=3u32 {
            let mut ev = vec![0.0; (k * k) as usize];
            if k == 2 {
                ev.pop();
            }
            ev.push(2.0 * k as f64);
            reports.push(extract_cluster(&spectrum(&ev), k, (k * k) as usize));
        }
        let c = count_check(&reports, 2, 1.0).unwrap();
        assert_eq!(c.mismatches, vec![2]);
        assert!(!c.pass);
    }

    #[test]
    fn constant_function_has_zero_delta_and_flat_case_is_small() {
        let flat = build_structure(JFamilySpec::flat(2)).unwrap();
        let r = extract_cluster(&spectrum(&[-0.05, 0.0, 0.02, 0.04, 8.1]), 2, 4);
        let mut f = default_test_functions();
        f.push(TestFunction::Constant);
        let d = density_compare(&r, &flat, &f, 16);
        assert_eq!(d.last().unwrap().delta, 0.0);
        for (fi, di) in f.iter().zip(&d) {
            assert!(di.delta <= 0.05 * 2.0 * fi.lipschitz(0.1).max(1e-300) + 1e-15, "{di:?}");
        }
    }

    #[test]
    fn shear_torus_average_matches_closed_form() {
        // avg of −(5/24)·4f'²/π with f' = 2πε cos θ is −(5/24)·8π ε².
        let s = build_structure(JFamilySpec::shear(2, 0.4)).unwrap();
        let r = extract_cluster(&spectrum(&[0.0, 0.0, 0.0, 0.0, 8.0]), 2, 4);
        let d = density_compare(&r, &s, &[TestFunction::Power(1)], 32);
        let want = -5.0 / 24.0 * 8.0 * std::f64::consts::PI * 0.16;
        assert!(
            (d[0].torus_average - want).abs() < 1e-10,
            "{} vs {want}",
            d[0].torus_average
        );
    }

    #[test]
    fn decay_and_ordering_helpers() {
        let ks = [4u32, 6, 8, 10];
        let v: Vec<f64> = ks.iter().map(|k| 3.0 * (*k as f64).powf(-0.5)).collect();
        assert!((decay_exponent(&ks, &v) - 0.5).abs() < 1e-12);
        assert!(ordering_violations(&[-1.0, 0.0], &[-0.9, 0.1], 0.2).is_empty());
        assert_eq!(ordering_violations(&[-1.0, 0.0], &[0.3, 0.1], 0.2), vec![(0, 1)]);
    }
}
