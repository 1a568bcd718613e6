//! Output directories and their run manifest.
//!
//! Every command writes through one [`OutputDir`], which records each file's
//! hash and finally writes `manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Component, Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::io::sha256_hex;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "privbid-manifest/1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
    /// False for files holding wall-clock measurements.
    pub deterministic: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub command: String,
    pub argv: Vec<String>,
    pub seeds: BTreeMap<String, u64>,
    pub instance_sha256: Option<String>,
    pub version: String,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    pub outputs: Vec<OutputEntry>,
    /// Hash over the deterministic outputs and any registered result digests.
    pub result_sha256: String,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let m: Self = serde_json::from_str(&text).with_context(|| format!("malformed manifest {}", path.display()))?;
        if m.format != MANIFEST_FORMAT {
            bail!("{} is not a run manifest", path.display());
        }
        Ok(m)
    }
}

fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

/// The single writer for one command's outputs.
pub struct OutputDir {
    root: PathBuf,
    manifest: RunManifest,
    digests: Vec<(String, String)>,
}

impl OutputDir {
    /// Opens `root` for a run of `command` with `seeds`.
    ///
    /// A directory already holding a manifest from a different command or
    /// different seeds is a seed collision. A rerun with the same seeds
    /// replaces the previous outputs.
    pub fn create(
        root: &Path,
        command: &str,
        argv: Vec<String>,
        seeds: BTreeMap<String, u64>,
        instance_sha256: Option<String>,
    ) -> Result<Self> {
        if root.join(MANIFEST_FILE).exists() {
            let old = RunManifest::read(root)?;
            if old.command != command || old.seeds != seeds {
                bail!(
                    "seed collision in output dir {}: it holds a `{}` run with seeds {:?}; choose another --out-dir",
                    root.display(),
                    old.command,
                    old.seeds
                );
            }
            for o in &old.outputs {
                let p = root.join(&o.file);
                if p.exists() {
                    fs::remove_file(&p).with_context(|| format!("removing stale {}", p.display()))?;
                }
            }
        }
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            manifest: RunManifest {
                format: MANIFEST_FORMAT.into(),
                command: command.into(),
                argv,
                seeds,
                instance_sha256,
                version: env!("CARGO_PKG_VERSION").into(),
                started_unix_ms: unix_ms(),
                finished_unix_ms: 0,
                outputs: Vec::new(),
                result_sha256: String::new(),
            },
            digests: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes `name` (relative, inside the directory) and records its hash.
    pub fn write(&mut self, name: &str, bytes: &[u8], deterministic: bool) -> Result<PathBuf> {
        let rel = Path::new(name);
        let inside = rel.components().all(|c| matches!(c, Component::Normal(_)));
        if !inside || name == MANIFEST_FILE {
            bail!("output name {name:?} must be a plain relative path");
        }
        if self.manifest.outputs.iter().any(|o| o.file == name) {
            bail!("output {name} written twice");
        }
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.manifest.outputs.push(OutputEntry {
            file: name.into(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
            deterministic,
        });
        Ok(path)
    }

    /// Adds a hash of results that live in a non-deterministic file.
    pub fn add_digest(&mut self, label: &str, hex: String) {
        self.digests.push((label.into(), hex));
    }

    pub fn finish(mut self) -> Result<RunManifest> {
        let mut text = String::new();
        for o in self.manifest.outputs.iter().filter(|o| o.deterministic) {
            text.push_str(&format!("{} {}\n", o.file, o.sha256));
        }
        for (label, hex) in &self.digests {
            text.push_str(&format!("{label} {hex}\n"));
        }
        self.manifest.result_sha256 = sha256_hex(text.as_bytes());
        self.manifest.finished_unix_ms = unix_ms();
        let json = serde_json::to_string_pretty(&self.manifest)? + "\n";
        fs::write(self.root.join(MANIFEST_FILE), json)?;
        Ok(self.manifest)
    }
}
