//! Output file helpers.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::Serialize;

use crate::error::CliError;

/// 17 significant digits, scientific notation. Non-finite values become
/// an empty field.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        String::new()
    }
}

/// Gain in dB; an exactly zero gain maps to the empty sentinel.
pub fn db(mag: f64) -> String {
    num(20.0 * mag.log10())
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Side-car record of one command invocation.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// Parameters after every default has been applied.
    pub parameters: serde_json::Value,
    pub config_path: Option<String>,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    pub tool_version: String,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(command: &str, config_path: Option<&Path>, parameters: serde_json::Value) -> Self {
        Self {
            command: command.into(),
            parameters,
            config_path: config_path.map(|p| p.display().to_string()),
            outputs: Vec::new(),
            warnings: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            timestamp: Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true),
        }
    }

    pub fn add_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Writes `manifest.json` into `dir` and returns its path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join("manifest.json");
        write_json(&path, self)?;
        Ok(path)
    }
}
