//! Task execution: geometry → operator → spectrum → analysis.

use crate::config::{ExperimentConfig, Task};
use crate::report::{Criterion, RunReport, Status, TaskReport};
use akspec_core::analysis::{
    coherent_state, count_check, decay_exponent, default_test_functions, density_compare, expected_count,
    extract_cluster, fitted_density_coefficient, localization_check, loglog_slope, mass_within, ordering_violations,
    rayleigh_quotient, residual_norm, ClusterReport, CountSummary, DensityDelta, TestFunction,
};
use akspec_core::geometry::{build_structure, fd, AlmostKahlerStructure};
use akspec_core::kkgeom::{fermi_expansion_check, fiber_deviation, geodesic_integrate, kk_christoffel_check, KKMetric};
use akspec_core::oscillator::{
    apply_l0, gaussian_moment_oracle, ground_state, u2, u4, CRational, ContractionCoefficients,
};
use akspec_core::quantization::{build_operator, lowest_eigenpairs, OperatorMetadata, SpectrumResult, SpectrumTarget};
use anyhow::{Context, Result};
use num::{BigInt, BigRational};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Grid used for torus averages of functions of the structure phase.
const AVERAGE_GRID: usize = 256;
/// Ordering margin for Rayleigh quotients against the predicted density.
const ORDER_MARGIN: f64 = 0.2;

/// Output of the spectrum task for one level.
#[derive(Clone, Debug, Serialize)]
pub struct LevelSpectrum {
    pub k: u32,
    pub grid: usize,
    pub metadata: OperatorMetadata,
    pub spectrum: SpectrumResult,
    pub cluster: ClusterReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct DensityRow {
    pub k: u32,
    pub deltas: Vec<DensityDelta>,
    pub fitted_coefficient: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeRow {
    pub k: u32,
    pub grid: usize,
    pub point: usize,
    pub x0: Vec<f64>,
    pub q_x0: f64,
    pub r_k: f64,
    pub residual: f64,
    /// `⟨ψ, φ_m ψ⟩` for `m = 1..4`.
    pub localization: Vec<f64>,
    pub mass_fraction: f64,
    /// `Λ_k / (κ/2π)^{n/2}`; differs from 1 by image overlap and grid effects.
    pub lambda_ratio: f64,
}

#[derive(Default)]
struct Results {
    levels: Vec<LevelSpectrum>,
    count: Option<CountSummary>,
    density: Vec<DensityRow>,
    probes: Vec<ProbeRow>,
    slopes: serde_json::Map<String, serde_json::Value>,
}

/// Runs every configured task and writes the artifacts into `out`.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    let start = Instant::now();
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let s = build_structure(cfg.structure.clone()).context("building the structure")?;
    let mut res = Results::default();
    let mut tasks = Vec::new();
    for task in &cfg.tasks {
        let t0 = Instant::now();
        let mut rep = TaskReport::new(task.name());
        let outcome = match task {
            Task::GeometryCheck => geometry_check(cfg, &s, out, &mut rep),
            Task::KkgeomCheck => kkgeom_check(&s, out, &mut rep),
            Task::OscillatorCheck => oscillator_check(cfg, &s, &mut rep),
            Task::Spectrum => spectrum_task(cfg, &s, out, &mut rep, &mut res),
            Task::Density => density_task(&s, out, &mut rep, &mut res),
            Task::Quasimode => quasimode_task(cfg, &s, out, &mut rep, &mut res),
        };
        if let Err(e) = outcome {
            rep.status = Status::Fail;
            rep.message = Some(format!("{e:#}"));
        }
        rep.settle();
        rep.wall_time_s = t0.elapsed().as_secs_f64();
        tasks.push(rep);
    }
    let mut plot_inputs = Vec::new();
    for t in &tasks {
        plot_inputs.extend(t.artifacts.iter().filter(|a| a.ends_with(".csv")).cloned());
    }
    let mut report = RunReport {
        tool_version: VERSION.to_string(),
        config_name: cfg.name.clone(),
        config_hash: cfg.hash.clone(),
        tasks,
        results: json!({
            "clusters": res.levels.iter().map(|l| &l.cluster).collect::<Vec<_>>(),
            "count": res.count,
            "density": res.density,
            "rayleigh": res.probes,
            "slopes": res.slopes,
        }),
        wall_time_s: 0.0,
    };
    if !plot_inputs.is_empty() {
        write_file(out, "plot.gp", &plot_script(&plot_inputs))?;
    }
    report.wall_time_s = start.elapsed().as_secs_f64();
    write_file(out, "report.json", &serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
}

fn random_point(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(0.0..1.0)).collect()
}

fn geometry_check(cfg: &ExperimentConfig, s: &AlmostKahlerStructure, out: &Path, rep: &mut TaskReport) -> Result<()> {
    let d = s.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.solver.seed);
    let (mut trace, mut contraction) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let x = random_point(&mut rng, d);
        let (t, v) = s.check_trace_identities(&x, 10, &mut rng);
        trace = trace.max(t);
        contraction = contraction.max(v);
    }
    rep.push(Criterion::at_most("j_trace_lemma", trace, 1e-10));
    rep.push(Criterion::at_most("v_contraction_lemma", contraction, 1e-10));
    let mut csv = String::new();
    for a in 1..=d {
        write!(csv, "x{a},")?;
    }
    csv.push_str("normJ2,q,R,Romega,lemma_residual\n");
    let mut lemma = 0.0f64;
    for _ in 0..20 {
        let x = random_point(&mut rng, d);
        let c = s.curvature_scalars(&x);
        lemma = lemma.max(c.lemma_residual);
        for v in &x {
            write!(csv, "{v:.12e},")?;
        }
        writeln!(
            csv,
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.3e}",
            s.nabla_j_norm_sq(&x),
            s.q_density(&x),
            c.r,
            c.romega,
            c.lemma_residual
        )?;
    }
    write_file(out, "probes.csv", &csv)?;
    rep.artifacts.push("probes.csv".into());
    rep.push(Criterion::at_most("curvature_lemma", lemma, 1e-7));
    let mut jets = 0.0f64;
    for _ in 0..5 {
        jets = jets.max(fd::jet_discrepancy(s, &random_point(&mut rng, d), fd::STEP));
    }
    rep.push(Criterion::at_most("jet_cross_validation", jets, 1e-8));
    rep.message = Some(format!("sup |∇J|² = {:.6}", s.sup_nabla_j(AVERAGE_GRID)));
    Ok(())
}

fn kkgeom_check(s: &AlmostKahlerStructure, out: &Path, rep: &mut TaskReport) -> Result<()> {
    let d = s.dim();
    let x0: Vec<f64> = (0..d).map(|i| 0.1 * (i + 1) as f64).collect();
    let m = KKMetric::new(s, &vec![0.0; d]);
    let dev = fiber_deviation(&m, &x0, 400)?;
    let mut z0 = vec![0.0];
    z0.extend_from_slice(&x0);
    let mut v0 = vec![0.0; d + 1];
    v0[0] = 1.0;
    let path = geodesic_integrate(&m, &z0, &v0, 2.0 * std::f64::consts::PI, 400)?;
    write_file(out, "fiber_geodesic.csv", &path.to_csv())?;
    rep.artifacts.push("fiber_geodesic.csv".into());
    rep.push(Criterion::at_most("fiber_geodesic_deviation", dev, 1e-9));
    let ch = kk_christoffel_check(s, &x0);
    rep.push(Criterion::at_most("christoffel_table", ch.max, 1e-6));
    let coarse = fermi_expansion_check(s, &x0, &[0.2, 0.15, 0.1, 0.05])?;
    let fine = fermi_expansion_check(s, &x0, &[0.1, 0.075, 0.05, 0.025])?;
    rep.push(Criterion::within("fermi_a2_over_z2", coarse.a2_coeff, -0.25, 1e-4));
    rep.push(Criterion::at_most("fermi_a3", coarse.a3_coeff, 1e-4));
    // Below rounding level there is nothing left to improve.
    let ratio = if coarse.a3_coeff <= 1e-10 {
        f64::INFINITY
    } else {
        coarse.a3_coeff / fine.a3_coeff
    };
    rep.push(Criterion::at_least("fermi_a3_halving_gain", ratio, 4.0));
    rep.push(Criterion::holds(
        "fermi_fit_conditioning",
        !coarse.flagged && !fine.flagged,
        "not flagged",
    ));
    write_file(
        out,
        "fermi.json",
        &serde_json::to_string_pretty(&json!({ "coarse": coarse, "fine": fine }))?,
    )?;
    rep.artifacts.push("fermi.json".into());
    Ok(())
}

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Eigenvalues of `L0` on the first three levels and the solvability shift
/// against the Wick oracle.
pub fn oscillator_summary(d: usize, seed: u64, samples: usize) -> OscillatorSummary {
    let u0 = ground_state(d);
    let ground_zero = apply_l0(&u0).is_zero();
    let level = |deg: usize| -> Option<i64> {
        // Common eigenvalue over every index tuple, if there is one.
        let mut common = None;
        let mut tuples = vec![vec![]];
        for _ in 0..deg {
            tuples = tuples
                .into_iter()
                .flat_map(|t: Vec<usize>| {
                    (0..d).map(move |i| {
                        let mut t = t.clone();
                        t.push(i);
                        t
                    })
                })
                .collect();
        }
        for t in tuples {
            let (state, shift) = match deg {
                2 => (u2(d, t[0], t[1]), 2),
                _ => (u4(d, t[0], t[1], t[2], t[3]), 4),
            };
            let lifted = state.shift_freq(shift);
            let image = apply_l0(&lifted);
            let found = (-8..=8).find(|c| image == lifted.scale(&CRational::from_int(*c)));
            match (found, common) {
                (None, _) => return None,
                (Some(c), None) => common = Some(c),
                (Some(c), Some(p)) if c != p => return None,
                _ => {}
            }
        }
        common
    };
    let level2 = level(2);
    let level4 = level(4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let small = |rng: &mut ChaCha8Rng| rat(rng.gen_range(-20..=20), rng.gen_range(1..=7));
    let mut agree = 0;
    for _ in 0..samples {
        let c0 = small(&mut rng);
        let c2: Vec<_> = (0..d * d).map(|_| small(&mut rng)).collect();
        let c4: Vec<_> = (0..d.pow(4)).map(|_| small(&mut rng)).collect();
        let c = ContractionCoefficients::new(d, c0, &c2, &c4).expect("dimensions match");
        if gaussian_moment_oracle(&c.polynomial()).ok() == Some(c.solvability_shift()) {
            agree += 1;
        }
    }
    OscillatorSummary {
        ground_zero,
        level2,
        level4,
        oracle_agreement: agree,
        samples,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OscillatorSummary {
    pub ground_zero: bool,
    /// `c` with `L0(e^{is}U_ij) = c·e^{is}U_ij` for every `i, j`.
    pub level2: Option<i64>,
    /// `c` with `L0(e^{2is}U_ijkl) = c·e^{2is}U_ijkl` for every index tuple.
    pub level4: Option<i64>,
    pub oracle_agreement: usize,
    pub samples: usize,
}

fn oscillator_check(cfg: &ExperimentConfig, s: &AlmostKahlerStructure, rep: &mut TaskReport) -> Result<()> {
    let o = oscillator_summary(s.dim(), cfg.solver.seed, 100);
    rep.push(Criterion::holds("l0_ground_state", o.ground_zero, "L0 U0 = 0"));
    rep.push(Criterion::holds(
        "l0_level_one_sign_as_stated",
        o.level2 == Some(-2),
        format!("eigenvalue −2 (exact value {:?})", o.level2),
    ));
    rep.push(Criterion::holds(
        "l0_level_two_sign_as_stated",
        o.level4 == Some(-4),
        format!("eigenvalue −4 (exact value {:?})", o.level4),
    ));
    rep.push(Criterion::at_least(
        "solvability_vs_wick",
        o.oracle_agreement as f64,
        o.samples as f64,
    ));
    rep.message = Some(format!(
        "exact eigenvalues: level 1 {:?}, level 2 {:?}",
        o.level2, o.level4
    ));
    Ok(())
}

fn spectrum_task(
    cfg: &ExperimentConfig,
    s: &AlmostKahlerStructure,
    out: &Path,
    rep: &mut TaskReport,
    res: &mut Results,
) -> Result<()> {
    let mut csv = String::from("k,N,index,lambda,residual\n");
    let mut metas = Vec::new();
    for &k in &cfg.k_list {
        let grid = cfg.grid.grid_for(k);
        let op = build_operator(s, k, grid)?;
        let expected = expected_count(s, k);
        let spectrum = lowest_eigenpairs(
            &op,
            SpectrumTarget::CountWithEdge(expected),
            cfg.threshold_a,
            &cfg.solver,
        )?;
        for (i, (l, r)) in spectrum.eigenvalues.iter().zip(&spectrum.residuals).enumerate() {
            writeln!(csv, "{k},{grid},{i},{l:.12e},{r:.3e}")?;
        }
        let cluster = extract_cluster(&spectrum, k, expected);
        eprintln!(
            "spectrum k = {k}, N = {grid}: {} eigenvalues in {:.1} s",
            spectrum.eigenvalues.len(),
            spectrum.wall_time_s
        );
        let kf = k as f64;
        rep.push(Criterion::at_most(
            format!("k{k}_residual"),
            spectrum.max_residual(),
            spectrum.tolerance,
        ));
        if let Some(flag) = &cluster.flag {
            rep.status = Status::Flagged;
            rep.message = Some(format!("k = {k}: {flag}"));
        }
        rep.push(Criterion::within(
            format!("k{k}_count"),
            cluster.n_k as f64,
            expected as f64,
            0.0,
        ));
        // Lower end of the interval certified by the edge residual.
        let edge_residual = spectrum.residuals.get(cluster.n_k).copied().unwrap_or(0.0);
        let edge = cluster.gap_edge.unwrap_or(f64::NAN) - edge_residual;
        rep.push(Criterion::at_least(
            format!("k{k}_gap_edge_over_k"),
            edge / kf,
            cfg.threshold_a,
        ));
        if s.is_flat() {
            let spread = spectrum.eigenvalues[..expected.min(spectrum.eigenvalues.len())]
                .iter()
                .fold(0.0f64, |m, l| m.max(l.abs()));
            rep.push(Criterion::at_most(
                format!("k{k}_kahler_cluster_over_k"),
                spread / kf,
                0.05,
            ));
            let next = spectrum.eigenvalues.get(expected).copied().unwrap_or(f64::NAN)
                - spectrum.residuals.get(expected).copied().unwrap_or(0.0);
            rep.push(Criterion::at_least(format!("k{k}_kahler_next_over_k"), next / kf, 1.5));
        }
        metas.push(op.metadata().clone());
        res.levels.push(LevelSpectrum {
            k,
            grid,
            metadata: op.metadata().clone(),
            spectrum,
            cluster,
        });
    }
    write_file(out, "spectrum.csv", &csv)?;
    write_file(out, "operators.json", &serde_json::to_string_pretty(&metas)?)?;
    rep.artifacts.push("spectrum.csv".into());
    rep.artifacts.push("operators.json".into());
    if res.levels.len() >= 3 {
        let clusters: Vec<ClusterReport> = res.levels.iter().map(|l| l.cluster.clone()).collect();
        let c = count_check(&clusters, s.n(), s.volume())?;
        rep.push(Criterion::holds(
            "exact_counts",
            c.mismatches.is_empty(),
            format!("mismatched k: {:?}", c.mismatches),
        ));
        rep.push(Criterion::within("count_slope", c.slope, s.n() as f64, 0.01));
        res.count = Some(c);
    }
    Ok(())
}

fn density_task(s: &AlmostKahlerStructure, out: &Path, rep: &mut TaskReport, res: &mut Results) -> Result<()> {
    let accepted: Vec<&LevelSpectrum> = res.levels.iter().filter(|l| l.cluster.accepted()).collect();
    if accepted.len() != res.levels.len() || accepted.is_empty() {
        rep.status = Status::Skipped;
        rep.message = Some("some levels have no accepted cluster".into());
        return Ok(());
    }
    let mut fset = default_test_functions();
    fset.push(TestFunction::Constant);
    let mut csv = String::from("k,function,cluster_average,torus_average,delta\n");
    for l in &accepted {
        let deltas = density_compare(&l.cluster, s, &fset, AVERAGE_GRID);
        for d in &deltas {
            writeln!(
                csv,
                "{},{},{:.12e},{:.12e},{:.12e}",
                l.k, d.function, d.cluster_average, d.torus_average, d.delta
            )?;
        }
        let fitted = if s.sup_nabla_j(AVERAGE_GRID) <= 1e-12 {
            f64::NAN
        } else {
            fitted_density_coefficient(&l.cluster, s, AVERAGE_GRID)
        };
        res.density.push(DensityRow {
            k: l.k,
            deltas,
            fitted_coefficient: fitted,
        });
    }
    write_file(out, "density.csv", &csv)?;
    rep.artifacts.push("density.csv".into());
    let linear = |row: &DensityRow| row.deltas[0].delta;
    let one = |row: &DensityRow| row.deltas.last().unwrap().delta;
    rep.push(Criterion::at_most(
        "constant_function_delta",
        res.density.iter().map(one).fold(0.0, f64::max),
        0.0,
    ));
    let first = res.density.first().unwrap();
    let last = res.density.last().unwrap();
    // Surfaces and flat structures are Kähler: q vanishes identically.
    let qs: Vec<f64> = s
        .phase_classes(AVERAGE_GRID)
        .iter()
        .map(|(x, _)| s.q_density(x))
        .collect();
    let spread = qs.iter().cloned().fold(f64::MIN, f64::max) - qs.iter().cloned().fold(f64::MAX, f64::min);
    if s.is_flat() || spread <= 1e-12 {
        for row in &res.density {
            let radius = accepted
                .iter()
                .find(|l| l.k == row.k)
                .map(|l| l.cluster.cluster.iter().fold(0.0f64, |m, v| m.max(v.abs())))
                .unwrap_or(0.0);
            for (f, d) in fset.iter().zip(&row.deltas) {
                let bound = 0.05 * row.k as f64 * f.lipschitz(radius.max(1e-12));
                rep.push(Criterion::at_most(
                    format!("k{}_{}_kahler_delta", row.k, d.function),
                    d.delta,
                    bound,
                ));
            }
        }
    } else {
        if res.density.len() >= 2 {
            rep.push(Criterion::holds(
                "linear_delta_trend",
                linear(last) < linear(first),
                format!(
                    "Δ(k={}) = {:.4} < Δ(k={}) = {:.4}",
                    last.k,
                    linear(last),
                    first.k,
                    linear(first)
                ),
            ));
        }
        rep.push(Criterion::at_most(
            "linear_delta_over_spread",
            linear(last) / spread,
            0.25,
        ));
        rep.message = Some(format!(
            "fitted λ̄/avg|∇J|² at k = {}: {:.4} (predicted −5/24 = {:.4})",
            last.k,
            last.fitted_coefficient,
            -5.0 / 24.0
        ));
    }
    Ok(())
}

fn quasimode_task(
    cfg: &ExperimentConfig,
    s: &AlmostKahlerStructure,
    out: &Path,
    rep: &mut TaskReport,
    res: &mut Results,
) -> Result<()> {
    let d = s.dim();
    let n = s.n() as i32;
    let mut header = String::from("k,N,point");
    for a in 0..d {
        write!(header, ",x{}", a + 1)?;
    }
    header.push_str(",q,r,residual,loc1,loc2,loc3,loc4,mass,lambda_ratio\n");
    let mut csv = header;
    for &k in &cfg.k_list {
        let grid = cfg.quasimode_grid_for(k);
        let op = build_operator(s, k, grid)?;
        for (p, x0) in cfg.x0_list.iter().enumerate() {
            let q = coherent_state(&op, x0)?;
            let qx = s.q_density(x0);
            let row = ProbeRow {
                k,
                grid,
                point: p,
                x0: q.x0.clone(),
                q_x0: qx,
                r_k: rayleigh_quotient(&op, &q),
                residual: residual_norm(&op, &q, qx),
                localization: (1..=4).map(|m| localization_check(&op, &q, m)).collect(),
                mass_fraction: mass_within(&op, &q, 5.0 / (k as f64).sqrt()),
                lambda_ratio: q.lambda_k / (q.kappa / (2.0 * std::f64::consts::PI)).powi(n).sqrt(),
            };
            write!(csv, "{k},{grid},{p}")?;
            for c in &row.x0 {
                write!(csv, ",{c:.6}")?;
            }
            writeln!(
                csv,
                ",{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}",
                row.q_x0,
                row.r_k,
                row.residual,
                row.localization[0],
                row.localization[1],
                row.localization[2],
                row.localization[3],
                row.mass_fraction,
                row.lambda_ratio
            )?;
            eprintln!("quasimode k = {k}, point {p}: r = {:.4}, q = {:.4}", row.r_k, row.q_x0);
            res.probes.push(row);
        }
    }
    write_file(out, "quasimode.csv", &csv)?;
    rep.artifacts.push("quasimode.csv".into());

    let probes = &res.probes;
    rep.push(Criterion::at_least(
        "mass_within_5_over_sqrt_k",
        probes.iter().map(|p| p.mass_fraction).fold(1.0, f64::min),
        0.99,
    ));
    let kmax = *cfg.k_list.last().unwrap();
    let top: Vec<&ProbeRow> = probes.iter().filter(|p| p.k == kmax).collect();
    let qs: Vec<f64> = top.iter().map(|p| p.q_x0).collect();
    let rs: Vec<f64> = top.iter().map(|p| p.r_k).collect();
    let bad = ordering_violations(&qs, &rs, ORDER_MARGIN);
    rep.push(Criterion::holds(
        "rayleigh_order_matches_q",
        bad.is_empty(),
        format!("no pair with q_i < q_j − {ORDER_MARGIN} and r_i ≥ r_j at k = {kmax} (violations: {bad:?})"),
    ));
    if s.is_flat() && kmax >= 8 {
        let worst = top.iter().map(|p| p.r_k.abs()).fold(0.0, f64::max);
        rep.push(Criterion::at_most(format!("k{kmax}_kahler_rayleigh"), worst, 0.1));
        for p in probes {
            rep.push(Criterion::at_most(
                format!("k{}_p{}_kahler_residual_over_sqrt_k", p.k, p.point),
                p.residual / (p.k as f64).sqrt(),
                0.1,
            ));
        }
    }
    if cfg.k_list.len() >= 2 {
        let ks: Vec<f64> = cfg.k_list.iter().map(|k| *k as f64).collect();
        for (pi, _) in cfg.x0_list.iter().enumerate() {
            let rows: Vec<&ProbeRow> = probes.iter().filter(|p| p.point == pi).collect();
            let qx = rows[0].q_x0;
            let gaps: Vec<f64> = rows.iter().map(|p| (p.r_k - p.q_x0).abs()).collect();
            let alpha = decay_exponent(&cfg.k_list, &gaps);
            res.slopes.insert(format!("p{pi}_rayleigh_alpha"), json!(alpha));
            if qx.abs() >= 0.2 {
                rep.push(Criterion::at_least(format!("p{pi}_rayleigh_alpha"), alpha, 0.4));
            }
            let res_slope = loglog_slope(&ks, &rows.iter().map(|p| p.residual).collect::<Vec<_>>());
            res.slopes.insert(format!("p{pi}_residual_slope"), json!(res_slope));
            for m in [2usize, 4] {
                let vals: Vec<f64> = rows.iter().map(|p| p.localization[m - 1]).collect();
                let slope = loglog_slope(&ks, &vals);
                res.slopes.insert(format!("p{pi}_localization_m{m}"), json!(slope));
                rep.push(Criterion::within(
                    format!("p{pi}_localization_m{m}_slope"),
                    slope,
                    -(m as f64) / 2.0,
                    0.15,
                ));
            }
        }
    }
    Ok(())
}

/// gnuplot script over the CSV artifacts only.
pub fn plot_script(csvs: &[String]) -> String {
    let mut g =
        String::from("set datafile separator ','\nset key autotitle columnhead\nset terminal pngcairo size 900,600\n");
    for c in csvs {
        match c.as_str() {
            "spectrum.csv" => g.push_str(
                "set output 'spectrum.png'\nset xlabel 'index'\nset ylabel 'lambda'\n\
                 plot 'spectrum.csv' using 3:4:1 with points palette title 'eigenvalues by k'\n",
            ),
            "density.csv" => g.push_str(
                "set output 'density.png'\nset logscale xy\nset xlabel 'k'\nset ylabel 'delta'\n\
                 plot 'density.csv' using 1:(strcol(2) eq 't^1' ? $5 : 1/0) with linespoints title 'f(t) = t'\n\
                 unset logscale\n",
            ),
            "quasimode.csv" => g.push_str(
                "set output 'quasimode.png'\nset xlabel 'q(x0)'\nset ylabel 'r_k'\n\
                 plot 'quasimode.csv' using (column('q')):(column('r')):1 with points palette title 'Rayleigh quotients'\n",
            ),
            _ => {}
        }
    }
    g
}
