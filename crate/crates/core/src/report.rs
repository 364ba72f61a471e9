//! Run reports and their plot-data emission.
//!
//! A report separates a deterministic body (checks, tables, series,
//! scalars — byte-identical across runs of the same scenario) from timing,
//! which is measured. Plot emission writes plain CSV with a mandatory
//! header, one file per table; convergence tables get their runtime column
//! joined back from the timing section.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::meanfield::ConvergenceTable;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("report has no {0} table")]
    MissingTable(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("unknown plot kind {0:?}; expected convergence or trajectory")]
    UnknownKind(String),
}

/// One named residual check with its tolerance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub residual: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckResult {
    pub fn bounded(name: &str, residual: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            passed: residual <= tolerance,
            residual,
            tolerance,
            detail: String::new(),
        }
    }

    pub fn flagged(name: &str, passed: bool, residual: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            residual,
            tolerance: f64::NAN,
            detail: detail.into(),
        }
    }

    pub fn line(&self) -> String {
        let status = if self.passed { "pass" } else { "FAIL" };
        if self.tolerance.is_nan() {
            format!("[{status}] {} (value {:.3e}) {}", self.name, self.residual, self.detail)
        } else {
            format!(
                "[{status}] {} (residual {:.3e} vs tolerance {:.3e}) {}",
                self.name, self.residual, self.tolerance, self.detail
            )
        }
    }
}

/// Numeric table with named columns.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// Deterministic part of a run report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportBody {
    pub scenario_name: String,
    pub scenario_hash: String,
    pub experiment: String,
    pub checks: Vec<CheckResult>,
    pub warnings: Vec<String>,
    pub tables: BTreeMap<String, Table>,
    pub scalars: BTreeMap<String, f64>,
}

/// Measured timings, kept out of the deterministic body.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct Timing {
    pub total_ms: f64,
    pub table_runtime_ms: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub body: ReportBody,
    pub timing: Timing,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.body.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// The deterministic body alone; two runs of one scenario must agree
    /// byte for byte here.
    pub fn body_json(&self) -> String {
        serde_json::to_string(&self.body).expect("report body serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<(), ReportError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    /// Store a convergence table, splitting the measured runtimes into the
    /// timing section so the body stays deterministic.
    pub fn insert_convergence_table(&mut self, name: &str, table: &ConvergenceTable) {
        let mut t = Table {
            columns: vec![
                "epsilon".into(),
                "t".into(),
                "distance".into(),
                "tail_estimate".into(),
            ],
            rows: Vec::with_capacity(table.rows.len()),
        };
        let mut runtimes = Vec::with_capacity(table.rows.len());
        for row in &table.rows {
            t.rows
                .push(vec![row.epsilon, row.t, row.distance, row.tail_estimate]);
            runtimes.push(row.runtime_ms);
        }
        self.body.tables.insert(name.into(), t);
        self.timing.table_runtime_ms.insert(name.into(), runtimes);
    }

    /// Write one table as CSV. The convergence kind appends the runtime
    /// column from the timing section; an empty table yields a header-only
    /// file.
    pub fn emit_plot_data(&self, kind: &str, out: &Path) -> Result<(), ReportError> {
        match kind {
            "convergence" => {
                let table = self
                    .body
                    .tables
                    .get("convergence")
                    .ok_or_else(|| ReportError::MissingTable("convergence".into()))?;
                let runtimes = self.timing.table_runtime_ms.get("convergence");
                let mut w = csv::Writer::from_path(out)?;
                let mut header = table.columns.clone();
                header.push("runtime_ms".into());
                w.write_record(&header)?;
                for (i, row) in table.rows.iter().enumerate() {
                    let mut record: Vec<String> =
                        row.iter().map(|v| format!("{v}")).collect();
                    let rt = runtimes.and_then(|r| r.get(i)).copied().unwrap_or(0.0);
                    record.push(format!("{rt}"));
                    w.write_record(&record)?;
                }
                w.flush()?;
                Ok(())
            }
            "trajectory" => {
                let table = self
                    .body
                    .tables
                    .get("trajectory")
                    .ok_or_else(|| ReportError::MissingTable("trajectory".into()))?;
                let mut w = csv::Writer::from_path(out)?;
                w.write_record(&table.columns)?;
                for row in &table.rows {
                    w.write_record(row.iter().map(|v| format!("{v}")))?;
                }
                w.flush()?;
                Ok(())
            }
            other => Err(ReportError::UnknownKind(other.into())),
        }
    }
}
