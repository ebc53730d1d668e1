//! JSON reports and CSV artifacts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

use crate::config::EnvSection;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    /// The comparison could not be made reliably; does not count as failure.
    Inconclusive,
}

/// One pass/fail comparison `|value − target| ≤ tolerance` or a one-sided
/// bound, as described by `rule`.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
    pub rule: &'static str,
    pub status: Status,
}

impl Check {
    fn new(name: &str, value: f64, target: f64, tolerance: f64, rule: &'static str, ok: bool) -> Self {
        let status = if ok { Status::Pass } else { Status::Fail };
        Self { name: name.into(), value, target, tolerance, rule, status }
    }

    /// `|value − target| ≤ tolerance`.
    pub fn abs(name: &str, value: f64, target: f64, tolerance: f64) -> Self {
        Self::new(name, value, target, tolerance, "abs", (value - target).abs() <= tolerance)
    }

    /// `|value/target − 1| ≤ tolerance`.
    pub fn rel(name: &str, value: f64, target: f64, tolerance: f64) -> Self {
        Self::new(name, value, target, tolerance, "rel", (value / target - 1.0).abs() <= tolerance)
    }

    /// `value < bound`.
    pub fn below(name: &str, value: f64, bound: f64) -> Self {
        Self::new(name, value, bound, 0.0, "below", value < bound)
    }

    /// `value > bound`.
    pub fn above(name: &str, value: f64, bound: f64) -> Self {
        Self::new(name, value, bound, 0.0, "above", value > bound)
    }

    /// Mean within `k` standard errors of `target`.
    pub fn within_se(name: &str, mean: f64, se: f64, target: f64, k: f64) -> Self {
        let tol = k * se;
        let ok = (mean - target).abs() <= tol || mean == target;
        Self::new(name, mean, target, tol, "se", ok)
    }

    pub fn flag(name: &str, ok: bool) -> Self {
        Self::new(name, f64::from(u8::from(ok)), 1.0, 0.0, "flag", ok)
    }

    pub fn inconclusive(mut self) -> Self {
        if self.status == Status::Fail {
            self.status = Status::Inconclusive;
        }
        self
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

/// Everything an experiment returns.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub experiment: String,
    /// Seconds since the Unix epoch; the only field allowed to differ
    /// between runs with the same seed.
    pub timestamp: u64,
    pub seed: u64,
    pub env: EnvSection,
    pub params: Value,
    pub results: Value,
    pub checks: Vec<Check>,
    /// No check has status `fail`.
    pub pass: bool,
    pub artifacts: Vec<String>,
}

impl Report {
    pub fn new(experiment: &str, seed: u64, env: &EnvSection, params: impl Serialize) -> Result<Self, CliError> {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Ok(Self {
            experiment: experiment.into(),
            timestamp,
            seed,
            env: env.clone(),
            params: serde_json::to_value(params)?,
            results: Value::Null,
            checks: Vec::new(),
            pass: true,
            artifacts: Vec::new(),
        })
    }

    pub fn results(mut self, results: impl Serialize) -> Result<Self, CliError> {
        self.results = serde_json::to_value(results)?;
        Ok(self)
    }

    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn finish(mut self) -> Self {
        self.pass = self.checks.iter().all(|c| c.status != Status::Fail);
        self
    }

    pub fn check_named(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> Result<String, CliError> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Output directory plus the list of files written to it.
#[derive(Debug)]
pub struct Artifacts {
    dir: PathBuf,
    pub written: Vec<String>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes serializable rows as CSV with a header row.
    pub fn csv<R: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = R>) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(self.dir.join(name))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        self.written.push(name.into());
        Ok(())
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let mut w = BufWriter::new(File::create(self.dir.join(name))?);
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        self.written.push(name.into());
        Ok(())
    }
}
