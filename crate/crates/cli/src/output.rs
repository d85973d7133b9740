//! Output directory that records a checksum for every file it writes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::{io_err, CliError};

pub const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub struct OutputDir {
    root: PathBuf,
    files: BTreeMap<String, String>,
}

impl OutputDir {
    pub fn create(root: impl AsRef<Path>) -> Result<Self, CliError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(Self {
            root,
            files: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes `bytes` to `relative` (forward slashes), creating parents.
    pub fn write(&mut self, relative: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(relative);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        fs::write(&path, bytes).map_err(io_err(&path))?;
        self.files.insert(relative.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Renders into memory with `f`, then writes.
    pub fn write_with<F>(&mut self, relative: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> phasesweep::Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(relative, &buf)
    }

    pub fn write_json<T: Serialize>(&mut self, relative: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(relative, text.as_bytes())
    }

    pub fn checksums(&self) -> &BTreeMap<String, String> {
        &self.files
    }

    /// Writes `manifest.json` and returns the checksum map it lists.
    pub fn finish<T: Serialize>(
        self,
        experiment: &str,
        config: &ExperimentConfig,
        results: &T,
    ) -> Result<BTreeMap<String, String>, CliError> {
        let manifest = serde_json::json!({
            "tool": "phasesweep",
            "version": env!("CARGO_PKG_VERSION"),
            "experiment": experiment,
            "seed": config.seed,
            "config": config,
            "results": results,
            "files": &self.files,
        });
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.root.join(MANIFEST);
        fs::write(&path, text).map_err(io_err(&path))?;
        Ok(self.files)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
