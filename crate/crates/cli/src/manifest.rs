//! Run manifests: the exact command plus its resolved configuration.

use std::path::{Path, PathBuf};
use std::process::Command as Process;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::Command;

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    /// `git rev-parse HEAD` of the working directory, when available.
    pub git: Option<String>,
    pub command: Command,
    /// Configuration after presets, defaults and overrides are applied.
    pub resolved: serde_json::Value,
}

fn git_head() -> Option<String> {
    let out = Process::new("git").args(["rev-parse", "HEAD"]).output().ok()?;
    out.status
        .success()
        .then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
        .filter(|s| !s.is_empty())
}

impl Manifest {
    pub fn new(command: &Command, resolved: serde_json::Value) -> Self {
        Self {
            tool: "monoalign".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            git: git_head(),
            command: command.clone(),
            resolved,
        }
    }

    /// Writes `<dir>/manifests/<name>.json` and returns its path.
    pub fn write(&self, dir: &Path, name: &str) -> anyhow::Result<PathBuf> {
        let d = dir.join("manifests");
        std::fs::create_dir_all(&d).with_context(|| format!("creating {}", d.display()))?;
        let path = d.join(format!("{name}.json"));
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}
