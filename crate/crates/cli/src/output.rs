//! Artifacts: trajectory CSVs, tables and the JSON summary.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use silicosis_core::moments::compute_moments;
use silicosis_core::{Error, State, Trajectory};

pub const SCHEMA_VERSION: u32 = 1;

/// How a check compares its value with its limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">")]
    Above,
    #[serde(rename = "holds")]
    Holds,
}

/// One pass/fail line of the summary. `operation` names the library
/// routine that produced `value`, so a failure can be traced and rerun.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub operation: &'static str,
    pub value: f64,
    pub relation: Relation,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, operation: &'static str, value: f64, limit: f64) -> Self {
        let passed = value <= limit;
        Self { name: name.into(), operation, value, relation: Relation::AtMost, limit, passed }
    }

    pub fn above(name: impl Into<String>, operation: &'static str, value: f64, limit: f64) -> Self {
        let passed = value > limit;
        Self { name: name.into(), operation, value, relation: Relation::Above, limit, passed }
    }

    /// A yes/no property; `value` is 1 when it holds.
    pub fn holds(name: impl Into<String>, operation: &'static str, ok: bool) -> Self {
        Self {
            name: name.into(),
            operation,
            value: if ok { 1.0 } else { 0.0 },
            relation: Relation::Holds,
            limit: 1.0,
            passed: ok,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub name: &'static str,
    pub module: &'static str,
    pub message: String,
}

impl From<&Error> for ErrorReport {
    fn from(e: &Error) -> Self {
        Self { name: e.name(), module: e.module(), message: e.to_string() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    pub command: &'static str,
    pub passed: bool,
    pub seed: Option<u64>,
    pub checks: Vec<Check>,
    pub results: serde_json::Value,
    pub error: Option<ErrorReport>,
    pub artifacts: Vec<String>,
}

pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> io::Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), written: Vec::new() })
    }

    fn writer(&mut self, name: &str) -> io::Result<csv::Writer<fs::File>> {
        self.written.push(name.to_string());
        Ok(csv::Writer::from_path(self.root.join(name))?)
    }

    pub fn write_summary(&self, summary: &mut Summary) -> io::Result<()> {
        summary.artifacts = self.written.clone();
        summary.artifacts.push("summary.json".into());
        let text = serde_json::to_string_pretty(summary).map_err(io::Error::other)?;
        fs::write(self.root.join("summary.json"), text + "\n")
    }

    /// Writes a table of numeric rows.
    pub fn write_table(&mut self, name: &str, header: &[String], rows: &[Vec<f64>]) -> io::Result<()> {
        let mut w = self.writer(name)?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(row.iter().map(|v| fmt(*v)))?;
        }
        w.flush()
    }

    /// `t,x,M_total,X_total,U_total,Q,P,M_0..M_{cols-1}` per row.
    pub fn write_trajectory(
        &mut self,
        name: &str,
        traj: &Trajectory,
        times: &[f64],
        cohort_columns: usize,
    ) -> Result<(), WriteError> {
        let cols = cohort_columns.min(traj.sys.n() + 1);
        let mut header: Vec<String> =
            ["t", "x", "M_total", "X_total", "U_total", "Q", "P"].iter().map(|s| s.to_string()).collect();
        header.extend((0..cols).map(|i| format!("M_{i}")));
        let mut w = self.writer(name)?;
        w.write_record(&header)?;
        for &t in times {
            let s: State = traj.dense_eval(t)?;
            let mo = compute_moments(&s, &traj.sys.rates)?;
            let mut row = vec![
                fmt(t),
                fmt(s.x),
                fmt(mo.total_macrophages),
                fmt(mo.total_quartz),
                fmt(mo.total_matter),
                fmt(mo.release_rate),
                fmt(mo.removal_rate),
            ];
            row.extend(s.m[..cols].iter().map(|v| fmt(*v)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest round-trip scientific notation, so output is exact and stable.
fn fmt(v: f64) -> String {
    format!("{v:e}")
}

#[derive(Debug)]
pub enum WriteError {
    Io(io::Error),
    Model(Error),
}

impl From<io::Error> for WriteError {
    fn from(e: io::Error) -> Self {
        WriteError::Io(e)
    }
}

impl From<csv::Error> for WriteError {
    fn from(e: csv::Error) -> Self {
        WriteError::Io(e.into())
    }
}

impl From<Error> for WriteError {
    fn from(e: Error) -> Self {
        WriteError::Model(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.0, 1.0, -2.5, 1e-300, 0.1 + 0.2, f64::MAX] {
            assert_eq!(fmt(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn check_relations() {
        assert!(Check::at_most("a", "op", 1.0, 1.0).passed);
        assert!(!Check::above("a", "op", 0.0, 0.0).passed);
        assert!(Check::holds("a", "op", true).passed);
    }
}
