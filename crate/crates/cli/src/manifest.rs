use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use mgspan::trainer::write_atomic;
use mgspan::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    /// Input path to sha256 of its content.
    pub inputs: BTreeMap<String, String>,
    /// Output file name (relative to `--out`) to sha256.
    pub outputs: BTreeMap<String, String>,
}

fn io(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// sha256 of a file, or of a directory's sorted `(relative name, content)`
/// pairs.
pub fn hash_path(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    if path.is_dir() {
        let mut files = Vec::new();
        collect_files(path, path, &mut files)?;
        files.sort();
        for rel in files {
            let bytes = fs::read(path.join(&rel)).map_err(|e| io(&path.join(&rel), e))?;
            hasher.update(rel.to_string_lossy().as_bytes());
            hasher.update([0]);
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(&bytes);
        }
    } else {
        hasher.update(fs::read(path).map_err(|e| io(path, e))?);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| io(dir, e))? {
        let path = entry.map_err(|e| io(dir, e))?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            out.push(path.strip_prefix(root).expect("under root").to_path_buf());
        }
    }
    Ok(())
}

pub struct OutputDir {
    root: PathBuf,
    written: BTreeMap<String, String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<OutputDir> {
        fs::create_dir_all(root).map_err(|e| io(root, e))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            written: BTreeMap::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(name);
        write_atomic(&path, bytes)?;
        self.written.insert(name.to_string(), hex::encode(Sha256::digest(bytes)));
        Ok(path)
    }

    /// Records a file that was written by other means.
    pub fn record(&mut self, name: &str) -> Result<()> {
        let hash = hash_path(&self.path(name))?;
        self.written.insert(name.to_string(), hash);
        Ok(())
    }

    pub fn finish(
        self,
        subcommand: &str,
        seed: Option<u64>,
        config: serde_json::Value,
        inputs: &[PathBuf],
    ) -> Result<()> {
        let mut hashes = BTreeMap::new();
        for p in inputs {
            hashes.insert(p.display().to_string(), hash_path(p)?);
        }
        let manifest = RunManifest {
            subcommand: subcommand.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            inputs: hashes,
            outputs: self.written,
        };
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Json {
            context: "run manifest".into(),
            source: e,
        })?;
        write_atomic(&self.root.join(MANIFEST_FILE), json.as_bytes())
    }
}
