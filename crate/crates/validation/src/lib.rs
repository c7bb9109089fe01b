//! Helpers shared by the acceptance suite: run a shipped config, pick
//! criteria out of the report, print one verdict line per criterion.
//!
//! Lives in its own package so that the suite runs after every other test
//! target and an honest failure here does not hide their results.

use akspec::config;
use akspec::report::{Criterion, RunReport};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Shipped experiment configs.
pub fn config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn config_text(name: &str) -> String {
    let p = config_dir().join(name);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

/// Runs a config given as TOML text; returns the report and its wall time.
pub fn run_text(text: &str, out: &Path) -> (RunReport, f64) {
    let raw = config::parse(text).unwrap_or_else(|v| panic!("config: {v:?}"));
    let cfg = config::build(&raw).unwrap_or_else(|v| panic!("config: {v:?}"));
    let t0 = Instant::now();
    let report = akspec::run::run(&cfg, out).expect("run completes");
    (report, t0.elapsed().as_secs_f64())
}

/// Criteria of `task` whose name satisfies `pred`.
pub fn criteria<'a>(report: &'a RunReport, task: &str, pred: impl Fn(&str) -> bool) -> Vec<&'a Criterion> {
    report
        .task(task)
        .map(|t| t.criteria.iter().filter(|c| pred(&c.name)).collect())
        .unwrap_or_default()
}

/// All selected criteria present and passing.
pub fn all_pass(cs: &[&Criterion]) -> bool {
    !cs.is_empty() && cs.iter().all(|c| c.pass)
}

/// `name=value (bound)` for the failing ones, or a count when all pass.
pub fn describe(cs: &[&Criterion]) -> String {
    let bad: Vec<String> = cs
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("{}={:.4e} (want {})", c.name, c.value, c.bound))
        .collect();
    if cs.is_empty() {
        "no criteria evaluated".into()
    } else if bad.is_empty() {
        format!("{} checks ok", cs.len())
    } else {
        bad.join("; ")
    }
}

/// Prints the verdict line straight to stdout (bypassing test capture).
pub fn verdict(id: u32, title: &str, pass: bool, detail: &str) -> bool {
    let line = format!(
        "{} criterion {id:>2} {title}: {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    pass
}
