//! Per-run convergence reports and their JSON/CSV serialization.
//!
//! A [`RunReport`] collects one [`StepRecord`] per outer Newton step plus
//! run-level metadata. The JSON form is the machine-readable artifact the
//! CLI writes next to the solution factors; the CSV form is a flat
//! per-iteration table for quick plotting.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Error type for report serialization.
#[derive(Debug)]
pub enum ReportError {
    /// Filesystem I/O failed.
    Io(std::io::Error),
    /// JSON encoding or decoding failed.
    Json(serde_json::Error),
}

impl std::fmt::Display for ReportError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReportError::Io(e) => write!(f, "report I/O failed: {e}"),
            ReportError::Json(e) => write!(f, "report JSON failed: {e}"),
        }
    }
}

impl std::error::Error for ReportError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            ReportError::Io(e) => Some(e),
            ReportError::Json(e) => Some(e),
        }
    }
}

impl From<std::io::Error> for ReportError {
    fn from(e: std::io::Error) -> Self {
        ReportError::Io(e)
    }
}

impl From<serde_json::Error> for ReportError {
    fn from(e: serde_json::Error) -> Self {
        ReportError::Json(e)
    }
}

/// Trace of one line-search invocation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LineSearchRecord {
    /// The six quartic trace coefficients `v1..v6`.
    pub v: [f64; 6],
    /// The accepted step size.
    pub xi: f64,
    /// Whether the step passed the sufficient-decrease test.
    pub accepted: bool,
}

/// One outer Newton step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    /// Step index, starting at 1.
    pub k: usize,
    /// Scaled residual norms (see the metrics module for definitions).
    pub res1: f64,
    pub res2: f64,
    pub res3: f64,
    /// Inner-solver iterations (0 for a direct dense solve).
    pub inner_iters: usize,
    /// Step size applied to the update (1 without line search).
    pub xi: f64,
    /// Column rank of the compressed solution factor after this step.
    pub rank: usize,
    /// Wall-clock seconds spent in this step.
    pub wall_time: f64,
    /// Line-search trace, present when a line search ran.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub line_search: Option<LineSearchRecord>,
}

/// Convergence report for one solver run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    /// Optional problem label.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub name: Option<String>,
    /// Problem dimensions.
    pub n: usize,
    pub m: usize,
    pub p: usize,
    /// Whether the outer iteration reached its tolerance.
    pub converged: bool,
    /// The outer tolerance on `res1`.
    pub outer_tol: f64,
    /// Line-search mode, as a lowercase label.
    pub line_search: String,
    /// Inexact-solve mode, as a lowercase label.
    pub inexact: String,
    /// Total wall-clock seconds for the run.
    pub total_seconds: f64,
    /// Per-step records, in iteration order.
    pub steps: Vec<StepRecord>,
}

impl RunReport {
    /// Pretty-printed JSON encoding.
    pub fn to_json(&self) -> Result<String, ReportError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Decode a report from its JSON encoding.
    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Write the JSON encoding to `path`.
    pub fn write_json(&self, path: &Path) -> Result<(), ReportError> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(self.to_json()?.as_bytes())?;
        file.write_all(b"\n")?;
        Ok(())
    }

    /// Flat per-iteration CSV: `k,res1,xi,inner_iters,rank,wall_seconds`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,res1,xi,inner_iters,rank,wall_seconds\n");
        for s in &self.steps {
            out.push_str(&format!(
                "{},{:e},{:e},{},{},{:e}\n",
                s.k, s.res1, s.xi, s.inner_iters, s.rank, s.wall_time
            ));
        }
        out
    }

    /// Write the CSV encoding to `path`.
    pub fn write_csv(&self, path: &Path) -> Result<(), ReportError> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunReport {
        RunReport {
            name: Some("demo".to_string()),
            n: 10,
            m: 2,
            p: 1,
            converged: true,
            outer_tol: 1e-12,
            line_search: "exact".to_string(),
            inexact: "off".to_string(),
            total_seconds: 0.25,
            steps: vec![
                StepRecord {
                    k: 1,
                    res1: 0.5,
                    res2: 0.1,
                    res3: 0.05,
                    inner_iters: 12,
                    xi: 1.0,
                    rank: 4,
                    wall_time: 0.1,
                    line_search: Some(LineSearchRecord {
                        v: [1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
                        xi: 1.0,
                        accepted: true,
                    }),
                },
                StepRecord {
                    k: 2,
                    res1: 1e-13,
                    res2: 1e-14,
                    res3: 1e-15,
                    inner_iters: 0,
                    xi: 0.5,
                    rank: 6,
                    wall_time: 0.15,
                    line_search: None,
                },
            ],
        }
    }

    #[test]
    fn json_round_trip_preserves_fields() {
        let report = sample();
        let text = report.to_json().unwrap();
        let back = RunReport::from_json(&text).unwrap();
        assert_eq!(back.steps.len(), 2);
        assert_eq!(back.steps[0].k, 1);
        assert_eq!(back.steps[1].inner_iters, 0);
        assert!(back.converged);
        assert_eq!(back.name.as_deref(), Some("demo"));
        let ls = back.steps[0].line_search.as_ref().unwrap();
        assert_eq!(ls.v[5], 6.0);
        assert!(back.steps[1].line_search.is_none());
    }

    #[test]
    fn csv_has_header_and_one_row_per_step() {
        let report = sample();
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "k,res1,xi,inner_iters,rank,wall_seconds");
        assert!(lines[1].starts_with("1,"));
        assert!(lines[2].starts_with("2,"));
        // Exactly six columns per row.
        assert_eq!(lines[1].split(',').count(), 6);
    }
}
