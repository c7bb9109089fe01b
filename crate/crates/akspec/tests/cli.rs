//! End-to-end runs of the `akspec` binary on small configs.

use std::path::Path;
use std::process::Command;

const SMALL: &str = r#"
name = "small"
tasks = ["spectrum", "density"]
k_list = [1, 2, 3]
output_dir = "unused"

[structure]
n = 1
epsilon = 0.3
a0 = "shear"

[grid]
rule = "auto"

[solver]
seed = 5
"#;

fn akspec(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_akspec"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.toml");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn validate_lists_every_violation_and_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL
        .replace("k_list = [1, 2, 3]", "k_list = []")
        .replace("seed = 5", "");
    let out = akspec(&["validate", &write_config(dir.path(), &text)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("k_list"), "{err}");
    assert!(err.contains("solver.seed"), "{err}");
}

#[test]
fn version_prints_the_crate_version() {
    let out = akspec(&["version"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn runs_are_byte_reproducible_and_reports_point_at_real_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let run = akspec(&["run", &cfg, "--out", out.to_str().unwrap(), "--workers", "1"]);
        assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stdout));
    }
    for name in ["spectrum.csv", "density.csv", "operators.json"] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("report.json")).unwrap()).unwrap();
    for task in report["tasks"].as_array().unwrap() {
        for art in task["artifacts"].as_array().unwrap() {
            assert!(a.join(art.as_str().unwrap()).exists(), "{art}");
        }
    }
    let header = std::fs::read_to_string(a.join("spectrum.csv")).unwrap();
    assert!(header.starts_with("k,N,index,lambda,residual\n"));
    let plot = std::fs::read_to_string(a.join("plot.gp")).unwrap();
    assert!(plot.contains("'spectrum.csv'") && !plot.contains(".json"));
}

#[test]
fn output_directory_can_come_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &SMALL
            .replace("k_list = [1, 2, 3]", "k_list = [1]")
            .replace(", \"density\"", ""),
    );
    let target = dir.path().join("env-out");
    let out = Command::new(env!("CARGO_BIN_EXE_akspec"))
        .args(["run", &cfg])
        .env("AKSPEC_OUTPUT_DIR", &target)
        .output()
        .unwrap();
    assert!(out.status.code().is_some_and(|c| c != 1));
    assert!(target.join("report.json").exists());
}
