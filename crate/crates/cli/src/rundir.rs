use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use lagrl_core::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// `YYYYMMDDTHHMMSS` in UTC.
pub fn timestamp() -> String {
    chrono::Utc::now().format("%Y%m%dT%H%M%S").to_string()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize)]
struct ManifestEntry {
    path: String,
    sha256: String,
    bytes: u64,
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    files: Vec<ManifestEntry>,
}

/// A fresh output directory; never reuses an existing one.
pub struct RunDir {
    pub path: PathBuf,
    command: String,
}

impl RunDir {
    pub fn create(root: &Path, command: &str, env: &str, model: &str, seed: u64) -> Result<Self> {
        fs::create_dir_all(root)?;
        let base = format!("{env}_{model}_{seed}_{}", timestamp());
        let mut path = root.join(&base);
        let mut k = 1;
        loop {
            match fs::create_dir(&path) {
                Ok(()) => break,
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    path = root.join(format!("{base}_{k}"));
                    k += 1;
                }
                Err(e) => return Err(e.into()),
            }
        }
        Ok(RunDir {
            path,
            command: command.to_string(),
        })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let p = self.file(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut f = fs::File::create(p)?;
        f.write_all(contents.as_ref())?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
        self.write(name, text + "\n")
    }

    /// Lists every file in the run with its SHA-256 in `manifest.json`.
    pub fn write_manifest(&self) -> Result<()> {
        let mut files = Vec::new();
        collect(&self.path, &self.path, &mut files)?;
        files.sort();
        let mut entries = Vec::with_capacity(files.len());
        for rel in files {
            if rel == "manifest.json" {
                continue;
            }
            let bytes = fs::read(self.path.join(&rel))?;
            entries.push(ManifestEntry {
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
                path: rel,
            });
        }
        self.write_json(
            "manifest.json",
            &Manifest {
                command: self.command.clone(),
                files: entries,
            },
        )
    }
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            collect(root, &p, out)?;
        } else {
            let rel = p.strip_prefix(root).expect("inside root");
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn timestamp_shape() {
        let t = timestamp();
        assert_eq!(t.len(), 15);
        assert_eq!(&t[8..9], "T");
        assert!(t.starts_with("20"));
    }

    #[test]
    fn directories_are_never_reused() {
        let tmp = tempfile::tempdir().unwrap();
        let a = RunDir::create(tmp.path(), "x", "pendulum", "lnn", 0).unwrap();
        let b = RunDir::create(tmp.path(), "x", "pendulum", "lnn", 0).unwrap();
        assert_ne!(a.path, b.path);
    }
}
