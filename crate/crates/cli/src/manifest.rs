//! Run manifests: what ran, with which config, and what it wrote.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliResult;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub name: String,
    pub config_hash: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub versions: BTreeMap<String, String>,
    pub wall_clock_s: f64,
    pub counters: BTreeMap<String, Value>,
    /// Paths relative to the output directory.
    pub files: Vec<String>,
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn counter(&self, key: &str) -> Option<&Value> {
        self.counters.get(key)
    }

    pub fn read(dir: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        serde_json::from_str(&text).map_err(|e| crate::error::CliError::Config(format!("manifest: {e}")))
    }
}

/// Collects counters and emitted files while a command runs.
#[derive(Debug)]
pub struct Recorder {
    pub out: PathBuf,
    pub counters: BTreeMap<String, Value>,
    pub files: Vec<String>,
    pub notes: Vec<String>,
}

impl Recorder {
    pub fn new(out: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(out)?;
        Ok(Self { out: out.to_path_buf(), counters: BTreeMap::new(), files: Vec::new(), notes: Vec::new() })
    }

    /// Path for a new output file, recorded in the manifest.
    pub fn file(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.out.join(name)
    }

    pub fn write(&mut self, name: &str, contents: &str) -> CliResult<()> {
        let p = self.file(name);
        std::fs::write(p, contents)?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value).expect("serializable");
        self.write(name, &text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        self.counters.insert(key.to_string(), value.into());
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }
}
