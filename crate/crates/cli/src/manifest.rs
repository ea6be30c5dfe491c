//! Run manifests: a JSON record written next to each output artifact with
//! everything needed to re-run the command. No timestamps, so reruns produce
//! identical manifests too.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{write_file, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub subcommand: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    /// Arguments after the program name, replayable as-is.
    pub args: Vec<String>,
    pub config: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub vocab_fingerprint: Option<String>,
}

impl RunManifest {
    pub fn new(subcommand: &str, seed: Option<u64>, args: &[String]) -> Self {
        RunManifest {
            subcommand: subcommand.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            args: args.to_vec(),
            config: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            vocab_fingerprint: None,
        }
    }

    pub fn config(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.config.insert(key.to_string(), value.to_string());
        self
    }

    pub fn input(&mut self, key: &str, path: &Path) -> &mut Self {
        self.inputs
            .insert(key.to_string(), path.display().to_string());
        self
    }

    pub fn output(&mut self, key: &str, path: &Path) -> &mut Self {
        self.outputs
            .insert(key.to_string(), path.display().to_string());
        self
    }

    /// `<artifact>.manifest.json`.
    pub fn path_for(artifact: &Path) -> PathBuf {
        let mut name = artifact.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        artifact.with_file_name(name)
    }

    pub fn save(&self, artifact: &Path) -> CliResult<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_file(&Self::path_for(artifact), json + "\n")
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}
