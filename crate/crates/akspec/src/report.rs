//! Run and task reports, and the exit-code policy.

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    /// A cluster without a clear gap: downstream numbers are not meaningful.
    Flagged,
    /// Prerequisite task did not produce usable input.
    Skipped,
}

/// One quantitative check.
#[derive(Clone, Debug, Serialize)]
pub struct Criterion {
    pub name: String,
    pub value: f64,
    /// Human-readable bound, e.g. `<= 1e-10`.
    pub bound: String,
    pub pass: bool,
}

impl Criterion {
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound: format!("<= {bound:e}"),
            pass: value <= bound,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound: format!(">= {bound}"),
            pass: value >= bound,
        }
    }

    pub fn within(name: impl Into<String>, value: f64, target: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound: format!("{target} ± {tol}"),
            pass: (value - target).abs() <= tol,
        }
    }

    pub fn holds(name: impl Into<String>, pass: bool, bound: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value: if pass { 1.0 } else { 0.0 },
            bound: bound.into(),
            pass,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TaskReport {
    pub task: String,
    pub status: Status,
    pub criteria: Vec<Criterion>,
    pub artifacts: Vec<String>,
    pub wall_time_s: f64,
    pub message: Option<String>,
}

impl TaskReport {
    pub fn new(task: &str) -> Self {
        Self {
            task: task.to_string(),
            status: Status::Pass,
            criteria: Vec::new(),
            artifacts: Vec::new(),
            wall_time_s: 0.0,
            message: None,
        }
    }

    pub fn push(&mut self, c: Criterion) {
        self.criteria.push(c);
    }

    /// Status from the criteria, unless already flagged or skipped.
    pub fn settle(&mut self) {
        if self.status == Status::Pass && self.criteria.iter().any(|c| !c.pass) {
            self.status = Status::Fail;
        }
    }

    pub fn failed_criteria(&self) -> impl Iterator<Item = &Criterion> {
        self.criteria.iter().filter(|c| !c.pass)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub tool_version: String,
    pub config_name: String,
    pub config_hash: String,
    pub tasks: Vec<TaskReport>,
    pub results: serde_json::Value,
    pub wall_time_s: f64,
}

impl RunReport {
    /// 0 all pass, 2 any failure, 3 flagged without failures.
    pub fn exit_code(&self) -> i32 {
        if self
            .tasks
            .iter()
            .any(|t| matches!(t.status, Status::Fail | Status::Skipped))
        {
            2
        } else if self.tasks.iter().any(|t| t.status == Status::Flagged) {
            3
        } else {
            0
        }
    }

    pub fn task(&self, name: &str) -> Option<&TaskReport> {
        self.tasks.iter().find(|t| t.task == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(statuses: &[Status]) -> RunReport {
        RunReport {
            tool_version: "0".into(),
            config_name: "t".into(),
            config_hash: String::new(),
            tasks: statuses
                .iter()
                .map(|s| {
                    let mut t = TaskReport::new("x");
                    t.status = *s;
                    t
                })
                .collect(),
            results: serde_json::Value::Null,
            wall_time_s: 0.0,
        }
    }

    #[test]
    fn exit_codes_follow_the_worst_status() {
        assert_eq!(report(&[Status::Pass, Status::Pass]).exit_code(), 0);
        assert_eq!(report(&[Status::Pass, Status::Flagged]).exit_code(), 3);
        assert_eq!(report(&[Status::Flagged, Status::Fail]).exit_code(), 2);
    }

    #[test]
    fn settle_marks_failed_criteria() {
        let mut t = TaskReport::new("x");
        t.push(Criterion::at_most("a", 1.0, 2.0));
        t.settle();
        assert_eq!(t.status, Status::Pass);
        t.push(Criterion::within("b", 1.0, 0.0, 0.5));
        t.settle();
        assert_eq!(t.status, Status::Fail);
        assert_eq!(t.failed_criteria().count(), 1);
    }
}
