//! Experiment description: a single TOML file, validated as a whole.

use akspec_core::geometry::{J0Preset, JFamilySpec};
use akspec_core::quantization::{auto_grid, min_grid, SolverOptions};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    GeometryCheck,
    KkgeomCheck,
    OscillatorCheck,
    Spectrum,
    Density,
    Quasimode,
}

impl Task {
    pub const ALL: [Task; 6] = [
        Task::GeometryCheck,
        Task::KkgeomCheck,
        Task::OscillatorCheck,
        Task::Spectrum,
        Task::Density,
        Task::Quasimode,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Task::GeometryCheck => "geometry-check",
            Task::KkgeomCheck => "kkgeom-check",
            Task::OscillatorCheck => "oscillator-check",
            Task::Spectrum => "spectrum",
            Task::Density => "density",
            Task::Quasimode => "quasimode",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == s)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The file as written. Everything is optional here so that validation can
/// report every problem at once.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub name: Option<String>,
    pub tasks: Option<Vec<String>>,
    pub k_list: Option<Vec<i64>>,
    pub x0_list: Option<Vec<Vec<f64>>>,
    pub output_dir: Option<String>,
    pub structure: Option<RawStructure>,
    pub grid: Option<RawGrid>,
    pub solver: Option<RawSolver>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawStructure {
    pub n: Option<i64>,
    pub epsilon: Option<f64>,
    /// `"shear"` or omitted.
    pub a0: Option<String>,
    pub a0_matrix: Option<Vec<Vec<f64>>>,
    pub j0: Option<String>,
    pub wave: Option<Vec<i64>>,
    pub phase: Option<f64>,
    pub omega_scale: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGrid {
    /// `"auto"` or `"explicit"`.
    pub rule: Option<String>,
    pub n: Option<i64>,
    pub quasimode_n: Option<i64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSolver {
    pub tol: Option<f64>,
    pub max_iter: Option<i64>,
    pub seed: Option<u64>,
    pub block: Option<i64>,
    pub guard: Option<i64>,
    pub threshold_a: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum GridRule {
    Auto,
    Explicit(usize),
}

impl GridRule {
    pub fn grid_for(&self, k: u32) -> usize {
        match self {
            GridRule::Auto => auto_grid(k),
            GridRule::Explicit(n) => *n,
        }
    }
}

/// A validated experiment.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub name: String,
    pub tasks: Vec<Task>,
    pub k_list: Vec<u32>,
    pub x0_list: Vec<Vec<f64>>,
    pub output_dir: PathBuf,
    pub structure: JFamilySpec,
    pub grid: GridRule,
    pub quasimode_grid: Option<usize>,
    pub solver: SolverOptions,
    pub threshold_a: f64,
    /// SHA-256 of the canonical JSON form of the file contents.
    pub hash: String,
}

impl ExperimentConfig {
    pub fn has(&self, t: Task) -> bool {
        self.tasks.contains(&t)
    }

    /// Grid used for coherent states at level `k`.
    pub fn quasimode_grid_for(&self, k: u32) -> usize {
        self.quasimode_grid.unwrap_or_else(|| self.grid.grid_for(k))
    }
}

/// One violated key.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub key: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

pub fn parse(text: &str) -> Result<RawConfig, Vec<Violation>> {
    toml::from_str(text).map_err(|e| {
        vec![Violation {
            key: "<file>".into(),
            message: e.message().to_string(),
        }]
    })
}

pub fn load(path: &Path) -> Result<RawConfig, Vec<Violation>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        vec![Violation {
            key: "<file>".into(),
            message: format!("{}: {e}", path.display()),
        }]
    })?;
    parse(&text)
}

/// SHA-256 of the config re-serialized as JSON with sorted keys, so that key
/// order and formatting do not matter.
pub fn config_hash(raw: &RawConfig) -> String {
    let value = serde_json::to_value(raw).expect("config serializes");
    hex::encode(Sha256::digest(serde_json::to_string(&value).expect("json").as_bytes()))
}

/// Every violation in the file; empty for a runnable config.
pub fn validate(raw: &RawConfig) -> Vec<Violation> {
    match build(raw) {
        Ok(_) => Vec::new(),
        Err(v) => v,
    }
}

/// Validates and resolves defaults.
pub fn build(raw: &RawConfig) -> Result<ExperimentConfig, Vec<Violation>> {
    let mut bad = Vec::new();
    let mut fail = |key: &str, message: String| {
        bad.push(Violation {
            key: key.to_string(),
            message,
        })
    };

    let mut tasks = Vec::new();
    match &raw.tasks {
        None => fail("tasks", "missing".into()),
        Some(t) if t.is_empty() => fail("tasks", "no tasks listed".into()),
        Some(t) => {
            for name in t {
                match Task::parse(name) {
                    Some(task) if !tasks.contains(&task) => tasks.push(task),
                    Some(_) => fail("tasks", format!("`{name}` listed twice")),
                    None => fail(
                        "tasks",
                        format!(
                            "unknown task `{name}` (expected one of {})",
                            Task::ALL.map(|t| t.name()).join(", ")
                        ),
                    ),
                }
            }
        }
    }
    tasks.sort();
    let needs_spectrum = tasks
        .iter()
        .any(|t| matches!(t, Task::Spectrum | Task::Density | Task::Quasimode));
    if tasks.contains(&Task::Density) && !tasks.contains(&Task::Spectrum) {
        fail("tasks", "`density` needs `spectrum`".into());
    }

    let mut k_list = Vec::new();
    match &raw.k_list {
        None if needs_spectrum => fail("k_list", "missing".into()),
        None => {}
        Some(ks) if ks.is_empty() => fail("k_list", "must be nonempty".into()),
        Some(ks) => {
            if ks.iter().any(|k| *k < 1 || *k > u32::MAX as i64) {
                fail("k_list", "levels must be positive integers".into());
            } else if ks.windows(2).any(|w| w[1] <= w[0]) {
                fail("k_list", "must be strictly increasing".into());
            } else {
                k_list = ks.iter().map(|k| *k as u32).collect();
            }
        }
    }

    let output_dir = match &raw.output_dir {
        Some(d) if !d.is_empty() => PathBuf::from(d),
        _ => {
            fail("output_dir", "missing".into());
            PathBuf::new()
        }
    };

    let structure = build_structure_spec(raw.structure.as_ref(), &mut fail);
    let n = structure.as_ref().map(|s| s.n);

    let (grid, quasimode_grid) = match &raw.grid {
        None => {
            fail("grid", "missing [grid] section".into());
            (GridRule::Auto, None)
        }
        Some(g) => {
            let rule = match (g.rule.as_deref(), g.n) {
                (Some("auto"), None) => GridRule::Auto,
                (Some("auto"), Some(_)) => {
                    fail("grid.n", "only used with rule = \"explicit\"".into());
                    GridRule::Auto
                }
                (Some("explicit"), Some(nn)) if nn >= 2 => GridRule::Explicit(nn as usize),
                (Some("explicit"), Some(nn)) => {
                    fail("grid.n", format!("{nn} is not a usable grid size"));
                    GridRule::Auto
                }
                (Some("explicit"), None) => {
                    fail("grid.n", "required with rule = \"explicit\"".into());
                    GridRule::Auto
                }
                (Some(other), _) => {
                    fail("grid.rule", format!("`{other}` is neither \"auto\" nor \"explicit\""));
                    GridRule::Auto
                }
                (None, _) => {
                    fail("grid.rule", "missing".into());
                    GridRule::Auto
                }
            };
            if let (GridRule::Explicit(nn), Some(kmax)) = (&rule, k_list.last()) {
                let need = min_grid(*kmax);
                if *nn < need {
                    fail(
                        "grid.n",
                        format!("N = {nn} violates the resolution rule N ≥ 6√k = {need} for k = {kmax}"),
                    );
                }
            }
            let qn = match g.quasimode_n {
                Some(q) if q < 2 => {
                    fail("grid.quasimode_n", format!("{q} is not a usable grid size"));
                    None
                }
                Some(q) => {
                    if let Some(kmax) = k_list.last() {
                        if (q as usize) < min_grid(*kmax) {
                            fail(
                                "grid.quasimode_n",
                                format!(
                                    "N = {q} violates the resolution rule N ≥ 6√k = {} for k = {kmax}",
                                    min_grid(*kmax)
                                ),
                            );
                        }
                    }
                    Some(q as usize)
                }
                None => None,
            };
            (rule, qn)
        }
    };

    let mut solver = SolverOptions::default();
    let mut threshold_a = 1.0;
    match &raw.solver {
        None => fail("solver", "missing [solver] section".into()),
        Some(s) => {
            match s.seed {
                Some(seed) => solver.seed = seed,
                None => fail("solver.seed", "missing (runs must be seeded)".into()),
            }
            if let Some(t) = s.tol {
                if t.is_finite() && t > 0.0 {
                    solver.tol = t;
                } else {
                    fail("solver.tol", format!("{t} is not a positive tolerance"));
                }
            }
            if let Some(m) = s.max_iter {
                if m >= 1 {
                    solver.max_iter = m as usize;
                } else {
                    fail("solver.max_iter", "must be at least 1".into());
                }
            }
            if let Some(b) = s.block {
                if b >= 1 {
                    solver.block = b as usize;
                } else {
                    fail("solver.block", "must be at least 1".into());
                }
            }
            if let Some(g) = s.guard {
                if g >= 8 {
                    solver.guard = g as usize;
                } else {
                    fail("solver.guard", "must be at least 8".into());
                }
            }
            if let Some(a) = s.threshold_a {
                if a.is_finite() && a > 0.0 {
                    threshold_a = a;
                } else {
                    fail("solver.threshold_a", format!("{a} is not positive"));
                }
            }
        }
    }

    let x0_list = raw.x0_list.clone().unwrap_or_default();
    if tasks.contains(&Task::Quasimode) && x0_list.is_empty() {
        fail("x0_list", "`quasimode` needs at least one centre".into());
    }
    if let Some(n) = n {
        for (i, x) in x0_list.iter().enumerate() {
            if x.len() != 2 * n {
                fail(
                    &format!("x0_list[{i}]"),
                    format!("has {} coordinates, expected {}", x.len(), 2 * n),
                );
            } else if tasks.contains(&Task::Quasimode) {
                for k in &k_list {
                    let nn = quasimode_grid.unwrap_or_else(|| grid.grid_for(*k));
                    if x.iter()
                        .any(|c| ((c * nn as f64) - (c * nn as f64).round()).abs() > 1e-9)
                    {
                        fail(
                            &format!("x0_list[{i}]"),
                            format!("{x:?} is not a point of the {nn}-grid used at k = {k}"),
                        );
                        break;
                    }
                }
            }
        }
    }

    if !bad.is_empty() {
        return Err(bad);
    }
    Ok(ExperimentConfig {
        name: raw.name.clone().unwrap_or_else(|| "experiment".into()),
        tasks,
        k_list,
        x0_list,
        output_dir,
        structure: structure.expect("validated"),
        grid,
        quasimode_grid,
        solver,
        threshold_a,
        hash: config_hash(raw),
    })
}

fn build_structure_spec(raw: Option<&RawStructure>, fail: &mut impl FnMut(&str, String)) -> Option<JFamilySpec> {
    let Some(r) = raw else {
        fail("structure", "missing [structure] section".into());
        return None;
    };
    let n = match r.n {
        Some(n) if n >= 1 => n as usize,
        Some(n) => {
            fail("structure.n", format!("half-dimension must be at least 1, got {n}"));
            return None;
        }
        None => {
            fail("structure.n", "missing".into());
            return None;
        }
    };
    let d = 2 * n;
    let mut spec = JFamilySpec::flat(n);
    let epsilon = r.epsilon.unwrap_or(0.0);
    if !epsilon.is_finite() {
        fail("structure.epsilon", "must be finite".into());
    }
    spec.epsilon = epsilon;
    match (r.a0.as_deref(), &r.a0_matrix) {
        (Some(_), Some(_)) => fail("structure.a0", "give either a0 or a0_matrix, not both".into()),
        (Some("shear"), None) => spec.a0 = JFamilySpec::shear(n, epsilon).a0,
        (Some(other), None) => fail(
            "structure.a0",
            format!("unknown generator `{other}` (expected \"shear\")"),
        ),
        (None, Some(m)) => {
            if m.len() != d || m.iter().any(|row| row.len() != d) {
                fail("structure.a0_matrix", format!("must be {d}x{d}"));
            } else {
                spec.a0 = m.clone();
            }
        }
        (None, None) if epsilon != 0.0 => fail("structure.a0", "required when epsilon ≠ 0".into()),
        (None, None) => {}
    }
    if let Some(j0) = &r.j0 {
        match J0Preset::parse(j0) {
            Some(p) => spec.j0 = p,
            None => fail(
                "structure.j0",
                format!("unknown preset `{j0}` (expected \"standard\" or \"tilted\")"),
            ),
        }
    }
    if let Some(w) = &r.wave {
        if w.len() != d {
            fail("structure.wave", format!("has {} entries, expected {d}", w.len()));
        } else if w.iter().all(|v| *v == 0) {
            fail("structure.wave", "must be nonzero".into());
        } else {
            spec.wave = w.clone();
        }
    }
    if let Some(p) = r.phase {
        spec.phase = p;
    }
    if let Some(s) = r.omega_scale {
        let c = s / (2.0 * PI);
        if !s.is_finite() || s == 0.0 || (c - c.round()).abs() > 1e-9 {
            fail(
                "structure.omega_scale",
                format!("{s} is not a nonzero integer multiple of 2π"),
            );
        } else {
            spec.omega_scale = s;
        }
    }
    Some(spec)
}
