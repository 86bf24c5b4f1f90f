//! Output directory bookkeeping: CSV tables, JSON documents and the manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

pub struct OutputDir {
    dir: PathBuf,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.display().to_string(), source })?;
        Ok(OutputDir { dir: dir.to_path_buf() })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    /// Writes a table; numbers use the shortest round-trip form so reruns are byte-identical.
    pub fn csv(&self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<String, CliError> {
        let path = self.dir.join(name);
        let err = |source| CliError::Csv { path: path.display().to_string(), source };
        let mut w = csv::Writer::from_path(&path).map_err(err)?;
        w.write_record(header).map_err(err)?;
        for r in rows {
            w.write_record(r).map_err(err)?;
        }
        w.flush().map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
        Ok(name.to_string())
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<String, CliError> {
        let path = self.dir.join(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
        Ok(name.to_string())
    }
}

pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn nums(xs: &[f64]) -> Vec<String> {
    xs.iter().map(|&x| num(x)).collect()
}

pub fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

/// `name_1 .. name_m`.
pub fn indexed(name: &str, m: usize) -> Vec<String> {
    (1..=m).map(|i| format!("{name}_{i}")).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub status: Status,
    pub exit_code: i32,
    /// Named boolean checks.
    pub verdicts: Value,
    /// Parameters the stage actually used, including derived ones.
    pub parameters: Value,
    pub files: Vec<String>,
    pub metrics: Value,
    /// Where a failing certificate broke.
    pub witness: Option<Value>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: Value,
    pub stages: Vec<StageRecord>,
    pub exit_code: i32,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("manifest {}: {e}", path.display())))
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == name)
    }
}
