use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one run: the resolved configuration, the root seed, the inputs
/// read and the files written. Holds nothing that varies between identical
/// runs, so it is reproducible along with the outputs.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub config: Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub summary: Value,
}

impl Manifest {
    pub fn new(command: &'static str, seed: u64) -> Self {
        Manifest {
            tool: "coughsense",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            config: Value::Null,
            inputs: Vec::new(),
            outputs: Vec::new(),
            summary: Value::Null,
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.display().to_string());
    }

    pub fn write(mut self, dir: &Path) -> Result<()> {
        self.outputs.sort();
        self.outputs.push(MANIFEST_FILE.into());
        write_json(&dir.join(MANIFEST_FILE), &self)
    }
}

/// Output directory helper that records every file it writes.
pub struct OutDir {
    pub root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("cannot create {}", root.display()))?;
        Ok(OutDir { root: root.to_path_buf() })
    }

    pub fn write(&self, manifest: &mut Manifest, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.root.join(name);
        fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
        manifest.outputs.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&self, manifest: &mut Manifest, name: &str, value: &T) -> Result<()> {
        self.write(manifest, name, to_json(value)?)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json(value)?).with_context(|| format!("cannot write {}", path.display()))
}
