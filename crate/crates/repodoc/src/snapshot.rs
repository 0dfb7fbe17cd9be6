//! Repository snapshots: an immutable view of a file tree (from a directory
//! or a git revision) with per-file content hashes.

use crate::util::stable_hash64;
use globset::{Glob, GlobSet, GlobSetBuilder};
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use thiserror::Error;
use walkdir::WalkDir;

/// Directory patterns skipped by default: VCS metadata, dependency vendoring,
/// build output, and this tool's own state/output directories.
pub const DEFAULT_IGNORES: &[&str] = &[
    "**/.git/**",
    "**/node_modules/**",
    "**/target/**",
    "**/vendor/**",
    "**/dist/**",
    "**/build/**",
    "**/__pycache__/**",
    "**/.repodoc/**",
    "**/docs/**",
];

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invalid ignore pattern {pattern}: {message}")]
    BadPattern { pattern: String, message: String },
    #[error("git {action} failed for {rev}: {message}")]
    Git {
        action: &'static str,
        rev: String,
        message: String,
    },
    #[error("file {0} not present in snapshot")]
    MissingFile(String),
}

/// Compiled ignore patterns (defaults plus config-provided extras).
#[derive(Debug)]
pub struct IgnoreSet {
    set: GlobSet,
}

impl IgnoreSet {
    pub fn new(extra: &[String]) -> Result<Self, SnapshotError> {
        let mut builder = GlobSetBuilder::new();
        for pattern in DEFAULT_IGNORES.iter().map(|s| s.to_string()).chain(extra.iter().cloned()) {
            let glob = Glob::new(&pattern).map_err(|e| SnapshotError::BadPattern {
                pattern: pattern.clone(),
                message: e.to_string(),
            })?;
            builder.add(glob);
        }
        Ok(IgnoreSet {
            set: builder.build().map_err(|e| SnapshotError::BadPattern {
                pattern: "<combined>".into(),
                message: e.to_string(),
            })?,
        })
    }

    pub fn matches(&self, rel_path: &str) -> bool {
        self.set.is_match(rel_path)
    }
}

impl Default for IgnoreSet {
    fn default() -> Self {
        IgnoreSet::new(&[]).expect("default ignore patterns compile")
    }
}

/// One file in a snapshot: repo-relative path (forward slashes) and a stable
/// content hash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileRecord {
    pub path: String,
    pub content_hash: u64,
}

/// An immutable, hashed view of a repository's files, sorted by path.
#[derive(Debug)]
pub struct RepoSnapshot {
    root: PathBuf,
    id: String,
    files: Vec<FileRecord>,
    // Keeps a git-extracted worktree alive for the snapshot's lifetime.
    _tempdir: Option<tempfile::TempDir>,
}

impl RepoSnapshot {
    /// Scan a directory tree, skipping ignored paths and unreadable files.
    pub fn scan(root: &Path, ignore: &IgnoreSet) -> Result<Self, SnapshotError> {
        let root = root.canonicalize()?;
        let mut files = Vec::new();
        for entry in WalkDir::new(&root).sort_by_file_name() {
            let entry = entry.map_err(std::io::Error::other)?;
            if !entry.file_type().is_file() {
                continue;
            }
            let rel = entry
                .path()
                .strip_prefix(&root)
                .expect("walkdir stays under root")
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/");
            if ignore.matches(&rel) {
                continue;
            }
            let bytes = std::fs::read(entry.path())?;
            files.push(FileRecord {
                path: rel,
                content_hash: stable_hash64(&bytes),
            });
        }
        files.sort_by(|a, b| a.path.cmp(&b.path));
        let id = Self::fingerprint(&files);
        Ok(RepoSnapshot {
            root,
            id,
            files,
            _tempdir: None,
        })
    }

    /// Materialize a git revision into a temporary worktree and snapshot it.
    pub fn from_git(repo: &Path, rev: &str, ignore: &IgnoreSet) -> Result<Self, SnapshotError> {
        let tempdir = tempfile::tempdir()?;
        let mut archive = Command::new("git")
            .arg("-C")
            .arg(repo)
            .args(["archive", "--format=tar", rev])
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| SnapshotError::Git {
                action: "archive",
                rev: rev.to_string(),
                message: e.to_string(),
            })?;
        let mut tar_bytes = Vec::new();
        archive
            .stdout
            .take()
            .expect("stdout piped")
            .read_to_end(&mut tar_bytes)?;
        let status = archive.wait()?;
        if !status.success() {
            let mut err = String::new();
            if let Some(mut stderr) = archive.stderr.take() {
                let _ = stderr.read_to_string(&mut err);
            }
            return Err(SnapshotError::Git {
                action: "archive",
                rev: rev.to_string(),
                message: err.trim().to_string(),
            });
        }
        let mut untar = Command::new("tar")
            .arg("-x")
            .arg("-C")
            .arg(tempdir.path())
            .stdin(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| SnapshotError::Git {
                action: "extract",
                rev: rev.to_string(),
                message: e.to_string(),
            })?;
        use std::io::Write;
        untar
            .stdin
            .take()
            .expect("stdin piped")
            .write_all(&tar_bytes)?;
        let status = untar.wait()?;
        if !status.success() {
            return Err(SnapshotError::Git {
                action: "extract",
                rev: rev.to_string(),
                message: "tar extraction failed".into(),
            });
        }
        let mut snapshot = Self::scan(tempdir.path(), ignore)?;
        snapshot.id = rev.to_string();
        snapshot._tempdir = Some(tempdir);
        Ok(snapshot)
    }

    fn fingerprint(files: &[FileRecord]) -> String {
        let mut acc = String::new();
        for f in files {
            acc.push_str(&f.path);
            acc.push('\0');
            acc.push_str(&format!("{:016x}", f.content_hash));
            acc.push('\n');
        }
        format!("{:016x}", stable_hash64(acc.as_bytes()))
    }

    /// Snapshot identity: the git revision, or a fingerprint of the file list.
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Files in path order.
    pub fn files(&self) -> &[FileRecord] {
        &self.files
    }

    pub fn file(&self, rel_path: &str) -> Option<&FileRecord> {
        self.files
            .binary_search_by(|f| f.path.as_str().cmp(rel_path))
            .ok()
            .map(|i| &self.files[i])
    }

    /// Read a snapshot file as UTF-8 text (lossy for stray bytes).
    pub fn read_file(&self, rel_path: &str) -> Result<String, SnapshotError> {
        if self.file(rel_path).is_none() {
            return Err(SnapshotError::MissingFile(rel_path.to_string()));
        }
        let full: PathBuf = self.root.join(rel_path);
        let bytes = std::fs::read(full)?;
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }
}
