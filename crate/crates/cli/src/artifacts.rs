use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::Format;

pub const MANIFEST_FORMAT: &str = "ohtlab-manifest-v1";
pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub state: Option<Value>,
    pub config: Value,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Output directory that records every file it writes.
pub struct Artifacts {
    dir: PathBuf,
    formats: Vec<Format>,
    files: Vec<FileEntry>,
}

impl Artifacts {
    pub fn create(dir: &Path, formats: &[Format]) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let formats = if formats.is_empty() { vec![Format::Csv, Format::Json] } else { formats.to_vec() };
        Ok(Self { dir: dir.to_path_buf(), formats, files: Vec::new() })
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(FileEntry { path: name.into(), bytes: bytes.len() as u64, sha256: sha256_hex(bytes) });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut text = serde_json::to_vec_pretty(value)?;
        text.push(b'\n');
        self.write(name, &text)
    }

    /// Writes via a library serializer into memory first so the checksum
    /// covers exactly the bytes on disk.
    pub fn write_with(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> ohtlab::Result<()>) -> anyhow::Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    pub fn finish(self, command: &str, seed: u64, state: Option<Value>, config: Value) -> anyhow::Result<PathBuf> {
        let manifest = Manifest {
            format: MANIFEST_FORMAT.into(),
            tool: "ohtlab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            state,
            config,
            files: self.files,
        };
        let path = self.dir.join(MANIFEST_NAME);
        let mut text = serde_json::to_vec_pretty(&manifest)?;
        text.push(b'\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
