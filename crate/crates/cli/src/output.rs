//! Artifact directory and manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use phasefront_core::grid::SampledField;

pub const MANIFEST: &str = "manifest.json";
pub const REPORT: &str = "report.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    /// A check-type scenario met its criteria.
    Pass,
    Fail,
    /// A scenario without pass/fail criteria ran to completion.
    Complete,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub kind: String,
    pub description: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub scenario: String,
    pub status: Status,
    pub config: serde_json::Value,
    pub artifacts: Vec<ArtifactEntry>,
}

/// Output directory that records every file written to it.
pub struct OutputDir {
    root: PathBuf,
    entries: Vec<ArtifactEntry>,
}

impl OutputDir {
    /// Creates `root`, clearing the artifacts of an earlier run. Refuses to
    /// touch a directory holding files no manifest accounts for.
    pub fn prepare(root: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        let mut known = vec![MANIFEST.to_string()];
        let manifest_path = root.join(MANIFEST);
        if manifest_path.exists() {
            let text = fs::read_to_string(&manifest_path)?;
            let old: Manifest = serde_json::from_str(&text)
                .with_context(|| format!("{} is not a phasefront manifest", manifest_path.display()))?;
            known.extend(old.artifacts.into_iter().map(|a| a.path));
        }
        let mut present = Vec::new();
        for entry in fs::read_dir(root)? {
            let name = entry?.file_name().to_string_lossy().into_owned();
            if !known.contains(&name) {
                bail!(
                    "output directory {} contains {name:?}, which no earlier run produced",
                    root.display()
                );
            }
            present.push(name);
        }
        for name in present {
            fs::remove_file(root.join(name))?;
        }
        Ok(Self {
            root: root.to_path_buf(),
            entries: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_text(&mut self, name: &str, kind: &str, description: &str, text: &str) -> anyhow::Result<()> {
        if name == MANIFEST || self.entries.iter().any(|e| e.path == name) {
            bail!("artifact {name} written twice");
        }
        fs::write(self.root.join(name), text).with_context(|| format!("writing {name}"))?;
        self.entries.push(ArtifactEntry {
            path: name.to_string(),
            kind: kind.to_string(),
            description: description.to_string(),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, description: &str, value: &T) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, "json", description, &text)
    }

    pub fn write_field(&mut self, name: &str, description: &str, field: &SampledField) -> anyhow::Result<()> {
        self.write_text(name, "signal_csv", description, &field.to_csv())
    }

    /// Header plus one comma-separated line per row.
    pub fn write_table(&mut self, name: &str, description: &str, header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<()> {
        let mut text = header.join(",");
        text.push('\n');
        for row in rows {
            text.push_str(&row.join(","));
            text.push('\n');
        }
        self.write_text(name, "table_csv", description, &text)
    }

    pub fn finish(self, scenario: &str, status: Status, config: serde_json::Value) -> anyhow::Result<Manifest> {
        let manifest = Manifest {
            tool: "phasefront".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            scenario: scenario.into(),
            status,
            config,
            artifacts: self.entries,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(self.root.join(MANIFEST), text)?;
        Ok(manifest)
    }
}
