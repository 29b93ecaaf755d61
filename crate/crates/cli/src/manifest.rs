use std::collections::BTreeMap;
use std::fs;
use std::hash::Hasher;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const MANIFEST_FILE: &str = "manifest.json";

/// One per run, written next to the outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub config: Value,
    /// Input path to FNV-1a 64 digest (hex).
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    /// Command-specific results.
    pub summary: Value,
}

impl RunManifest {
    pub fn new(command: &str, config: Value) -> Self {
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp,
            config,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            summary: Value::Null,
        }
    }

    /// Read `path` and record its digest. Returns the bytes.
    pub fn input(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        self.inputs.insert(path.display().to_string(), digest_hex(&bytes));
        Ok(bytes)
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

pub fn digest_hex(bytes: &[u8]) -> String {
    format!("{:016x}", fnv1a64(bytes))
}

/// Files written by one run. Unless [`Outputs::commit`] is called, everything
/// is removed on drop, including the output directory if this run created it.
pub struct Outputs {
    dir: PathBuf,
    created_dir: bool,
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self> {
        if dir.exists() && !dir.is_dir() {
            anyhow::bail!("output path {} exists and is not a directory", dir.display());
        }
        let created_dir = !dir.exists();
        fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            created_dir,
            files: Vec::new(),
            dirs: Vec::new(),
            committed: false,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.path(name);
        self.files.push(path.clone());
        fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }

    /// Register a file written by other code.
    pub fn track(&mut self, path: PathBuf) {
        self.files.push(path);
    }

    pub fn track_dir(&mut self, path: PathBuf) {
        self.dirs.push(path);
    }

    /// Write the manifest, listing every tracked output, and keep the files.
    pub fn commit(mut self, mut manifest: RunManifest) -> Result<RunManifest> {
        let mut listed: Vec<String> = self.files.iter().map(|p| p.display().to_string()).collect();
        listed.extend(self.dirs.iter().map(|p| p.display().to_string()));
        manifest.outputs = listed;
        let text = serde_json::to_string_pretty(&manifest)?;
        self.write(MANIFEST_FILE, text)?;
        self.committed = true;
        Ok(manifest)
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        for d in &self.dirs {
            let _ = fs::remove_dir_all(d);
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}
