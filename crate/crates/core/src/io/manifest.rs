//! Run manifests: enough to rerun a command and get the same bytes.

use std::fmt::Write as _;
use std::path::Path;

use super::{write_bytes, IoError, RunConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub seeds: Vec<u64>,
    pub input: Option<String>,
    pub outputs: Vec<String>,
    pub config: RunConfig,
    /// Seconds since the Unix epoch; left out unless asked for, since it
    /// would make repeated runs differ.
    pub wall_clock: Option<u64>,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        RunManifest {
            tool_version: format!("wreathe {}", env!("CARGO_PKG_VERSION")),
            command: command.to_string(),
            seeds: Vec::new(),
            input: None,
            outputs: Vec::new(),
            config: config.clone(),
            wall_clock: None,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "tool={}", self.tool_version);
        let _ = writeln!(out, "command={}", self.command);
        if let Some(i) = &self.input {
            let _ = writeln!(out, "input={i}");
        }
        for s in &self.seeds {
            let _ = writeln!(out, "seed={s}");
        }
        for o in &self.outputs {
            let _ = writeln!(out, "output={o}");
        }
        if let Some(t) = self.wall_clock {
            let _ = writeln!(out, "wall_clock={t}");
        }
        for (k, v) in self.config.entries() {
            let _ = writeln!(out, "config.{k}={v}");
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        write_bytes(path, self.to_text().as_bytes())
    }
}
