//! Run manifests: what a subcommand read, wrote and with which settings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::files::{sha256_file, write_json};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
}

impl Artifact {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(Self { path: path.to_owned(), sha256: sha256_file(path)? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub args: Vec<String>,
    pub config_paths: Vec<PathBuf>,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub seed: Option<u64>,
    /// Unix seconds.
    pub started: u64,
    pub finished: u64,
    /// Vocabulary and corpus fingerprints the outputs were derived from.
    pub fingerprints: BTreeMap<String, String>,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    pub fn start(subcommand: &str) -> Self {
        Self {
            subcommand: subcommand.into(),
            args: std::env::args().skip(1).collect(),
            config_paths: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed: None,
            started: unix_now(),
            finished: 0,
            fingerprints: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(Artifact::of(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(Artifact::of(path)?);
        Ok(())
    }

    /// Stamps the finish time and writes `manifest.json` into `dir`.
    pub fn finish(mut self, dir: &Path) -> Result<PathBuf> {
        self.finished = unix_now();
        let path = dir.join(MANIFEST_FILE);
        write_json(&path, &self)?;
        Ok(path)
    }
}
