//! Acceptance criteria, one test and one PASS/FAIL line each. Heavy runs are
//! shared and every test holds a global lock, so timings are not distorted
//! by neighbours.

use akspec::report::RunReport;
use akspec_core::geometry::{build_structure, JFamilySpec};
use akspec_core::quantization::{build_operator, lowest_eigenpairs, SolverOptions, SpectrumTarget};
use akspec_validation::{all_pass, config_text, criteria, describe, run_text, verdict};
use std::sync::{Mutex, MutexGuard, OnceLock};
use tempfile::TempDir;

static LOCK: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

struct Run {
    report: RunReport,
    wall: f64,
    dir: TempDir,
}

fn run(text: &str) -> Run {
    let dir = tempfile::tempdir().unwrap();
    let (report, wall) = run_text(text, dir.path());
    Run { report, wall, dir }
}

fn baseline() -> &'static Run {
    static R: OnceLock<Run> = OnceLock::new();
    R.get_or_init(|| run(&config_text("kahler-baseline.toml")))
}

fn perturbed() -> &'static Run {
    static R: OnceLock<Run> = OnceLock::new();
    R.get_or_init(|| run(&config_text("perturbed.toml")))
}

/// The baseline config with the shear deformation switched on.
fn sheared_baseline(tasks: &str) -> String {
    config_text("kahler-baseline.toml")
        .replace("epsilon = 0.0", "epsilon = 0.4\na0 = \"shear\"")
        .lines()
        .map(|l| {
            if l.starts_with("tasks = ") {
                format!("tasks = [{tasks}]")
            } else {
                l.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn criterion_01_kahler_baseline() {
    let _g = serial();
    let r = baseline();
    let cs = criteria(&r.report, "spectrum", |n| {
        n.contains("kahler") || n.ends_with("_residual")
    });
    let fast = r.wall <= 600.0;
    let pass = all_pass(&cs) && cs.len() >= 12 && fast;
    let detail = format!("{} | run {:.1} s (limit 600 s)", describe(&cs), r.wall);
    assert!(verdict(1, "Kähler baseline clusters", pass, &detail), "{detail}");
}

#[test]
fn criterion_02_cluster_counts() {
    let _g = serial();
    let flat = criteria(&baseline().report, "spectrum", |n| {
        n.ends_with("_count") || n == "exact_counts" || n == "count_slope"
    });
    let sheared = run(&sheared_baseline("\"spectrum\""));
    let bent = criteria(&sheared.report, "spectrum", |n| {
        n.ends_with("_count") || n == "exact_counts" || n == "count_slope"
    });
    let slope = |r: &RunReport| {
        r.task("spectrum")
            .and_then(|t| t.criteria.iter().find(|c| c.name == "count_slope"))
            .map(|c| c.value)
    };
    let pass = all_pass(&flat) && all_pass(&bent) && flat.len() == 6 && bent.len() == 6;
    let detail = format!(
        "ε=0: {} (slope {:?}) | ε=0.4: {} (slope {:?})",
        describe(&flat),
        slope(&baseline().report),
        describe(&bent),
        slope(&sheared.report)
    );
    assert!(verdict(2, "cluster counts k² and slope 2", pass, &detail), "{detail}");
}

#[test]
fn criterion_03_landau_gap_oracle() {
    let _g = serial();
    let k = 4u32;
    let first = (k * k) as usize;
    // Second Landau level on T⁴ has multiplicity n·k² = 2k².
    let total = 3 * first;
    let s = build_structure(JFamilySpec::flat(2)).unwrap();
    let opts = SolverOptions::default();
    let solve = |n_grid: usize| {
        let op = build_operator(&s, k, n_grid).unwrap();
        lowest_eigenpairs(&op, SpectrumTarget::Count(total), 1.0, &opts).unwrap()
    };
    let coarse = solve(12);
    let fine = solve(24);
    let deviation = |l: &[f64]| l[..first].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let center = fine.eigenvalues[first..total].iter().sum::<f64>() / (total - first) as f64;
    let target = 2.0 * k as f64;
    let ratio = deviation(&coarse.eigenvalues) / deviation(&fine.eigenvalues);
    let pass = (center - target).abs() <= 0.05 * target && ratio >= 3.0 && coarse.converged && fine.converged;
    let detail = format!(
        "second cluster centre {center:.4} (want 8 ± 0.4) | first-cluster deviation N=12 {:.4e}, N=24 {:.4e}, ratio {ratio:.2} (want ≥ 3)",
        deviation(&coarse.eigenvalues),
        deviation(&fine.eigenvalues)
    );
    assert!(verdict(3, "Landau gap oracle", pass, &detail), "{detail}");
}

#[test]
fn criterion_04_density_convergence() {
    let _g = serial();
    let r = perturbed();
    let cs = criteria(&r.report, "density", |n| {
        n == "linear_delta_trend" || n == "linear_delta_over_spread"
    });
    let sweep: f64 = ["spectrum", "density"]
        .iter()
        .filter_map(|t| r.report.task(t))
        .map(|t| t.wall_time_s)
        .sum();
    let status = r
        .report
        .task("density")
        .map(|t| format!("{:?}", t.status))
        .unwrap_or_default();
    let message = r
        .report
        .task("density")
        .and_then(|t| t.message.clone())
        .unwrap_or_default();
    let pass = all_pass(&cs) && cs.len() == 2 && sweep <= 7200.0;
    let detail = format!(
        "{} | {message} | status {status} | sweep {sweep:.0} s (limit 7200 s)",
        describe(&cs)
    );
    assert!(
        verdict(4, "density convergence for f(t) = t", pass, &detail),
        "{detail}"
    );
}

#[test]
fn criterion_05_pointwise_quasimodes() {
    let _g = serial();
    let r = perturbed();
    let cs = criteria(&r.report, "quasimode", |n| {
        n == "rayleigh_order_matches_q" || n.ends_with("_rayleigh_alpha")
    });
    let pass = all_pass(&cs) && cs.iter().any(|c| c.name == "rayleigh_order_matches_q") && cs.len() >= 2;
    let detail = describe(&cs);
    assert!(verdict(5, "Rayleigh quotients track q", pass, &detail), "{detail}");
}

#[test]
fn criterion_06_localization_slopes() {
    let _g = serial();
    let r = perturbed();
    let cs = criteria(&r.report, "quasimode", |n| n.contains("_localization_m"));
    let pass = all_pass(&cs) && !cs.is_empty();
    let slopes: Vec<String> = cs.iter().map(|c| format!("{}={:.3}", c.name, c.value)).collect();
    let detail = format!("{} | {}", describe(&cs), slopes.join(" "));
    assert!(verdict(6, "localization slopes −m/2", pass, &detail), "{detail}");
}

#[test]
fn criterion_07_geometry_identities() {
    let _g = serial();
    let r = run(&sheared_baseline("\"geometry-check\""));
    let cs = criteria(&r.report, "geometry-check", |_| true);
    let pass = all_pass(&cs) && cs.len() == 4 && r.wall <= 60.0;
    let detail = format!("{} | {:.2} s (limit 60 s)", describe(&cs), r.wall);
    assert!(verdict(7, "geometry identity suite", pass, &detail), "{detail}");
}

#[test]
fn criterion_08_oscillator_exactness() {
    let _g = serial();
    let r = run(&sheared_baseline("\"oscillator-check\""));
    let cs = criteria(&r.report, "oscillator-check", |_| true);
    let pass = all_pass(&cs) && cs.len() == 4;
    let message = r
        .report
        .task("oscillator-check")
        .and_then(|t| t.message.clone())
        .unwrap_or_default();
    let detail = format!("{} | {message}", describe(&cs));
    assert!(
        verdict(8, "oscillator relations and solvability shift", pass, &detail),
        "{detail}"
    );
}

#[test]
fn criterion_09_kaluza_klein() {
    let _g = serial();
    let r = run(&sheared_baseline("\"kkgeom-check\""));
    let cs = criteria(&r.report, "kkgeom-check", |_| true);
    let values: Vec<String> = cs.iter().map(|c| format!("{}={:.3e}", c.name, c.value)).collect();
    let pass = all_pass(&cs) && cs.len() == 6;
    let detail = format!("{} | {}", describe(&cs), values.join(" "));
    assert!(verdict(9, "Kaluza–Klein suite", pass, &detail), "{detail}");
}

#[test]
fn criterion_10_reproducibility() {
    let _g = serial();
    let text = sheared_baseline("\"spectrum\"").replace("k_list = [1, 2, 3, 4]", "k_list = [1, 2, 3]");
    let (a, b) = (run(&text), run(&text));
    let read = |r: &Run| std::fs::read(r.dir.path().join("spectrum.csv")).unwrap();
    let (ca, cb) = (read(&a), read(&b));
    let pass = !ca.is_empty() && ca == cb;
    let detail = format!("spectrum.csv {} bytes, identical: {}", ca.len(), ca == cb);
    assert!(verdict(10, "byte-identical eigenvalue CSVs", pass, &detail), "{detail}");
}
