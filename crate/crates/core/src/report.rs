//! Verification reports: named checks with metrics and numeric tables,
//! serialized as JSON and RFC 4180 CSV.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;

/// Numeric table with named columns.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Table { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Values of one column.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn write_csv(&self, path: &Path) -> io::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()
    }
}

/// Outcome of one check.
#[derive(Clone, Debug, Default, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub metrics: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    pub tables: Vec<Table>,
}

impl CheckResult {
    pub fn new(name: impl Into<String>) -> Self {
        CheckResult { name: name.into(), passed: true, ..Default::default() }
    }

    pub fn metric(&mut self, key: impl Into<String>, value: f64) {
        self.metrics.insert(key.into(), value);
    }

    /// Records a pass/fail condition; the check passes only if all do.
    pub fn require(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        self.notes.push(format!("{} {}", if ok { "ok:" } else { "FAILED:" }, what));
        self.passed &= ok;
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn get(&self, key: &str) -> f64 {
        self.metrics.get(key).copied().unwrap_or(f64::NAN)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

/// Collection of checks for one configuration.
#[derive(Clone, Debug, Default, Serialize)]
pub struct VerificationReport {
    pub subject: String,
    pub metadata: BTreeMap<String, String>,
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn new(subject: impl Into<String>) -> Self {
        VerificationReport { subject: subject.into(), ..Default::default() }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn write_json(&self, path: &Path) -> io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        fs::write(path, text + "\n")
    }

    /// Writes every table as `<check>_<table>.csv` and returns the paths.
    pub fn write_csvs(&self, dir: &Path) -> io::Result<Vec<String>> {
        let mut written = Vec::new();
        for c in &self.checks {
            for t in &c.tables {
                let file = format!("{}_{}.csv", c.name, t.name);
                t.write_csv(&dir.join(&file))?;
                written.push(file);
            }
        }
        Ok(written)
    }

    /// Plain-text summary, one line per check.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!("[{}] {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name));
            for (k, v) in &c.metrics {
                out.push_str(&format!("    {k} = {v:.6e}\n"));
            }
            for n in &c.notes {
                out.push_str(&format!("    {n}\n"));
            }
        }
        out
    }
}
