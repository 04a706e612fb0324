use std::fs;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use serde_json::Value;

/// Result of a command: a JSON report for `--json`, a human summary
/// otherwise, and whether the command's check passed.
pub struct Outcome {
    pub report: Value,
    pub human: String,
    pub passed: bool,
}

impl Outcome {
    pub fn ok(report: impl Serialize, human: String) -> anyhow::Result<Self> {
        Ok(Self {
            report: serde_json::to_value(report)?,
            human,
            passed: true,
        })
    }

    pub fn checked(report: impl Serialize, human: String, passed: bool) -> anyhow::Result<Self> {
        Ok(Self {
            passed,
            ..Self::ok(report, human)?
        })
    }

    pub fn print(&self, json: bool) {
        if json {
            println!("{}", serde_json::to_string_pretty(&self.report).expect("reports serialize"));
        } else {
            print!("{}", self.human);
        }
    }
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    write_text(path, &mvdet_core::io::to_json_string(value)?)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    mvdet_core::io::read_json(path).with_context(|| format!("reading {}", path.display()))
}

/// Parses `a,b,c,...` into exactly `N` floats.
pub fn parse_floats<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let values: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<Result<_, _>>()?;
    values
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected {N} comma-separated numbers, got {}", v.len()))
}

pub fn parse_point(s: &str) -> Result<[f64; 3], String> {
    parse_floats::<3>(s)
}

pub fn parse_mtp(s: &str) -> Result<[f64; 5], String> {
    parse_floats::<5>(s)
}
