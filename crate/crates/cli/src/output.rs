//! Run summaries and the files a run writes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::{Command, RunConfig};
use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// One acceptance check. `bound` is a human-readable condition on `value`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub sigma: Option<f64>,
    pub bound: String,
    pub passed: bool,
}

impl Check {
    pub fn below(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Check { name: name.into(), value, sigma: None, bound: format!("< {limit:e}"), passed: value < limit }
    }

    pub fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Check { name: name.into(), value, sigma: None, bound: format!(">= {limit:e}"), passed: value >= limit }
    }

    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        Check { name: name.into(), value: f64::from(u8::from(ok)), sigma: None, bound: "= 1".into(), passed: ok }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = Some(sigma);
        self
    }
}

/// Deterministic for a fixed config, seed and tool version; wall time is
/// reported on stderr only.
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub tool_version: &'static str,
    pub command: Command,
    /// The config without its output directory, so the summary does not
    /// depend on where it is written.
    pub config: serde_json::Value,
    pub checks: Vec<Check>,
    pub failures: Vec<String>,
    pub flagged: BTreeMap<String, usize>,
    pub results: serde_json::Value,
}

impl RunSummary {
    pub fn new(config: &RunConfig, command: Command, checks: Vec<Check>, results: serde_json::Value) -> Self {
        let mut echo = serde_json::to_value(config).expect("config serializes");
        if let Some(map) = echo.as_object_mut() {
            map.remove("out");
        }
        let failures = checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect();
        RunSummary {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION"),
            command,
            config: echo,
            checks,
            failures,
            flagged: BTreeMap::new(),
            results,
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// A finished run: the summary plus named data files.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub summary: RunSummary,
    pub files: Vec<(String, Vec<u8>)>,
}

impl Outcome {
    /// Writes every file and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let summary = json_bytes(&self.summary)?;
        let all = self.files.iter().map(|(n, b)| (n.as_str(), b.as_slice())).chain([("summary.json", summary.as_slice())]);
        for (name, bytes) in all {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        }
        Ok(())
    }
}

/// CSV bytes from a header and rows of already formatted fields.
pub fn csv_bytes<I, R>(header: &[&str], rows: I) -> Result<Vec<u8>, CliError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::Serialize(e.to_string());
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>()).map_err(fail)?;
    }
    w.into_inner().map_err(|e| CliError::Serialize(e.to_string()))
}

pub fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Serialize(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}
