//! Artifact layout inside a workspace directory, content hashing, JSON
//! manifests and the run log.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(Error::io(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// A file plus its content hash, as recorded in manifests and the run log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRef {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug)]
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Reference to a workspace file, stored relative to the root so that
    /// manifests do not depend on where the workspace lives.
    pub fn file_ref(&self, path: &Path) -> Result<FileRef> {
        let rel = path.strip_prefix(&self.root).unwrap_or(path);
        Ok(FileRef { path: rel.to_string_lossy().replace('\\', "/"), sha256: sha256_file(path)? })
    }

    /// Fails with a missing-artifact error naming `stage` unless `rel`
    /// exists.
    pub fn require(&self, stage: &'static str, rel: &str) -> Result<PathBuf> {
        let p = self.path(rel);
        if p.exists() {
            Ok(p)
        } else {
            Err(Error::MissingArtifact { stage, path: p })
        }
    }

    pub fn write_json(&self, rel: &str, value: &impl Serialize) -> Result<PathBuf> {
        let p = self.path(rel);
        write_json(&p, value)?;
        Ok(p)
    }

    pub fn read_json<T: DeserializeOwned>(&self, stage: &'static str, rel: &str) -> Result<T> {
        read_json(&self.require(stage, rel)?)
    }

    pub fn append_log(&self, entry: &LogEntry) -> Result<()> {
        let p = self.path(RUN_LOG);
        std::fs::create_dir_all(&self.root).map_err(Error::io(&self.root))?;
        let mut f = OpenOptions::new().create(true).append(true).open(&p).map_err(Error::io(&p))?;
        let line = serde_json::to_string(entry).expect("log entries serialize");
        writeln!(f, "{line}").map_err(Error::io(&p))
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("manifests serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(Error::io(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

pub const RUN_LOG: &str = "run_log.jsonl";

/// One line of the run log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub stage: String,
    pub started_at: String,
    pub duration_ms: u128,
    pub seed: u64,
    pub inputs: Vec<FileRef>,
    pub outputs: Vec<FileRef>,
    pub status: String,
}

/// Maps `f` over `items` on up to `threads` scoped threads, keeping input
/// order in the output.
pub fn par_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<R>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker thread panicked")).collect()
    })
}
