use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct InputHash {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Provenance of one run directory. Deliberately free of timestamps and
/// absolute output paths so that reruns produce identical bytes.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub core_version: &'static str,
    pub command: &'static str,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<InputHash>,
    /// Byte-deterministic outputs.
    pub outputs: Vec<String>,
    /// Outputs that contain wall-clock measurements.
    pub timing_outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &'static str, seed: Option<u64>, config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            core_version: lbb_core::VERSION,
            command,
            seed,
            config: serde_json::to_value(config)?,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timing_outputs: Vec::new(),
        })
    }

    pub fn hash_input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(InputHash {
            path: path.display().to_string(),
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(())
    }
}

/// Writes run outputs into one directory and keeps the manifest lists in sync.
pub struct RunDir {
    pub dir: PathBuf,
    pub manifest: Manifest,
    manifest_name: String,
}

impl RunDir {
    pub fn create(dir: PathBuf, manifest: Manifest) -> Result<Self> {
        Self::with_manifest_name(dir, manifest, "manifest.json".into())
    }

    pub fn with_manifest_name(dir: PathBuf, manifest: Manifest, manifest_name: String) -> Result<Self> {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir,
            manifest,
            manifest_name,
        })
    }

    fn put(&self, name: &str, body: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
    }

    pub fn write(&mut self, name: &str, body: impl AsRef<[u8]>) -> Result<()> {
        self.put(name, body.as_ref())?;
        self.manifest.outputs.push(name.to_string());
        Ok(())
    }

    pub fn write_timing(&mut self, name: &str, body: impl AsRef<[u8]>) -> Result<()> {
        self.put(name, body.as_ref())?;
        self.manifest.timing_outputs.push(name.to_string());
        Ok(())
    }

    /// Records a file some other writer placed in the directory.
    pub fn adopt(&mut self, path: &Path) {
        if let Some(name) = path.file_name() {
            self.manifest.outputs.push(name.to_string_lossy().into_owned());
        }
    }

    pub fn finish(self) -> Result<()> {
        let body = serde_json::to_string_pretty(&self.manifest)? + "\n";
        self.put(&self.manifest_name, body.as_bytes())
    }
}

pub fn to_json(value: &impl Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}
