//! Experiment runner: TOML configs in, CSV/JSON artifacts and a pass/fail
//! report out.

pub mod config;
pub mod report;
pub mod run;
