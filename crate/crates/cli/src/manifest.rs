use std::fs;
use std::path::{Path, PathBuf};

use acoustrap::{Result, SimConfig};
use serde::{Deserialize, Serialize};

pub const MANIFEST_NAME: &str = "manifest.json";

/// Written once per output directory, after every other file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command_line: Vec<String>,
    pub seed: u64,
    /// Full effective configuration, TOML.
    pub config: String,
    /// Relative to the output directory, in write order.
    pub outputs: Vec<String>,
}

/// Collects the files a subcommand writes so the manifest can list them.
pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    /// The directory itself appears with the first file, so a run that
    /// fails before writing anything leaves nothing behind.
    pub fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        }
    }

    /// Path for a streaming writer; call `record` once it is written.
    pub fn path(&self, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.root)?;
        Ok(self.root.join(name))
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf> {
        let p = self.path(name)?;
        fs::write(&p, bytes)?;
        self.record(name);
        Ok(p)
    }

    pub fn record(&mut self, name: &str) {
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
    }

    pub fn finish(self, seed: u64, config: &SimConfig, argv: Vec<String>) -> Result<RunManifest> {
        let path = self.path(MANIFEST_NAME)?;
        let m = RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command_line: argv,
            seed,
            config: config.to_toml_string(),
            outputs: self.written,
        };
        fs::write(path, serde_json::to_string_pretty(&m)? + "\n")?;
        Ok(m)
    }
}
