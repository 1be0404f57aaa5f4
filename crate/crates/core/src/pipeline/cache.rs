//! Content-addressed artifact store.
//!
//! Artifacts live at `<root>/<run_id>/<stage>/<hash>.<ext>`. A stage index at
//! `<root>/index/<stage>/<key>.json` maps a stage cache key to the artifact
//! that answered it, so a run can reuse a stage computed by another run; the
//! artifact is then copied into the current run's directory after its hash
//! is verified. Every write is temp-file-plus-rename.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use serde::{Deserialize, Serialize};

use crate::digest::{file_sha256, sha256_hex};
use crate::error::{Error, Result};

pub const INDEX_DIR: &str = "index";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    /// Artifact path relative to the cache root.
    pub artifact: String,
    pub hash: String,
    /// Side files (relative paths) named `<sha256>.<ext>`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extras: Vec<String>,
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::Builder::new().prefix(".tmp-").tempfile_in(dir)?;
    std::io::Write::write_all(&mut tmp, bytes)?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn copy_atomic(from: &Path, to: &Path) -> Result<()> {
    write_atomic(to, &fs::read(from)?)
}

fn stem_hash(rel: &str) -> &str {
    let name = rel.rsplit('/').next().unwrap_or(rel);
    name.split_once('.').map(|(h, _)| h).unwrap_or(name)
}

#[derive(Debug, Clone)]
pub struct Cache {
    root: PathBuf,
}

impl Cache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Cache { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn abs(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn stage_rel(run_id: &str, stage: &str) -> String {
        format!("{run_id}/{stage}")
    }

    fn index_path(&self, stage: &str, key: &str) -> PathBuf {
        self.root.join(INDEX_DIR).join(stage).join(format!("{key}.json"))
    }

    fn verified(&self, entry: &IndexEntry) -> bool {
        let main = file_sha256(&self.abs(&entry.artifact)).is_ok_and(|h| h == entry.hash);
        main && entry
            .extras
            .iter()
            .all(|x| file_sha256(&self.abs(x)).is_ok_and(|h| h == stem_hash(x)))
    }

    /// The indexed artifact for `key`, if present and intact.
    pub fn lookup(&self, stage: &str, key: &str) -> Option<IndexEntry> {
        let bytes = fs::read(self.index_path(stage, key)).ok()?;
        let entry: IndexEntry = serde_json::from_slice(&bytes).ok()?;
        self.verified(&entry).then_some(entry)
    }

    pub fn record(&self, stage: &str, key: &str, entry: &IndexEntry) -> Result<()> {
        write_atomic(&self.index_path(stage, key), &serde_json::to_vec_pretty(entry)?)
    }

    /// Store `bytes` as `<run_id>/<stage>/<sha256>.<ext>`; returns the
    /// relative path and the hash.
    pub fn store(&self, run_id: &str, stage: &str, bytes: &[u8], ext: &str) -> Result<(String, String)> {
        let hash = sha256_hex(bytes);
        let rel = format!("{}/{hash}.{ext}", Self::stage_rel(run_id, stage));
        let path = self.abs(&rel);
        if !file_sha256(&path).is_ok_and(|h| h == hash) {
            write_atomic(&path, bytes)?;
        }
        Ok((rel, hash))
    }

    /// Move an existing file into the store under its content hash.
    pub fn store_file(&self, run_id: &str, stage: &str, file: &Path, ext: &str) -> Result<(String, String)> {
        let hash = file_sha256(file)?;
        let rel = format!("{}/{hash}.{ext}", Self::stage_rel(run_id, stage));
        let dest = self.abs(&rel);
        fs::create_dir_all(dest.parent().unwrap())?;
        fs::rename(file, &dest)?;
        Ok((rel, hash))
    }

    /// Make `entry`'s files available under `run_id`, copying them from the
    /// run that produced them when necessary.
    pub fn adopt(&self, run_id: &str, stage: &str, entry: &IndexEntry) -> Result<IndexEntry> {
        let prefix = format!("{}/", Self::stage_rel(run_id, stage));
        let relocate = |rel: &str| -> Result<String> {
            if rel.starts_with(&prefix) {
                return Ok(rel.to_string());
            }
            let name = rel.rsplit('/').next().unwrap_or(rel);
            let target = format!("{prefix}{name}");
            copy_atomic(&self.abs(rel), &self.abs(&target))?;
            Ok(target)
        };
        Ok(IndexEntry {
            artifact: relocate(&entry.artifact)?,
            hash: entry.hash.clone(),
            extras: entry.extras.iter().map(|x| relocate(x)).collect::<Result<_>>()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GcReport {
    pub removed_runs: Vec<String>,
    pub freed_bytes: u64,
    pub remaining_bytes: u64,
}

fn dir_size(path: &Path) -> u64 {
    let Ok(entries) = fs::read_dir(path) else { return 0 };
    entries
        .flatten()
        .map(|e| match e.metadata() {
            Ok(m) if m.is_dir() => dir_size(&e.path()),
            Ok(m) => m.len(),
            Err(_) => 0,
        })
        .sum()
}

/// Delete whole runs, least recently modified first, until the cache holds
/// at most `max_bytes`, then drop index entries whose artifacts are gone.
pub fn gc(root: &Path, max_bytes: u64) -> Result<GcReport> {
    if !root.is_dir() {
        return Err(Error::FileNotFound(root.to_path_buf()));
    }
    let mut runs: Vec<(SystemTime, String, u64)> = Vec::new();
    for entry in fs::read_dir(root)?.flatten() {
        let name = entry.file_name().to_string_lossy().into_owned();
        if name == INDEX_DIR || !entry.path().is_dir() {
            continue;
        }
        let stamp = fs::metadata(entry.path().join("manifest"))
            .or_else(|_| entry.metadata())
            .and_then(|m| m.modified())
            .unwrap_or(SystemTime::UNIX_EPOCH);
        runs.push((stamp, name, dir_size(&entry.path())));
    }
    runs.sort();
    let mut total = dir_size(root);
    let mut report = GcReport { removed_runs: Vec::new(), freed_bytes: 0, remaining_bytes: 0 };
    for (_, name, size) in runs {
        if total <= max_bytes {
            break;
        }
        fs::remove_dir_all(root.join(&name))?;
        total = total.saturating_sub(size);
        report.freed_bytes += size;
        report.removed_runs.push(name);
    }
    let cache = Cache::new(root);
    if let Ok(stages) = fs::read_dir(root.join(INDEX_DIR)) {
        for stage in stages.flatten() {
            for entry in fs::read_dir(stage.path())?.flatten() {
                let keep = fs::read(entry.path())
                    .ok()
                    .and_then(|b| serde_json::from_slice::<IndexEntry>(&b).ok())
                    .is_some_and(|e| cache.verified(&e));
                if !keep {
                    fs::remove_file(entry.path())?;
                }
            }
        }
    }
    report.remaining_bytes = dir_size(root);
    Ok(report)
}
