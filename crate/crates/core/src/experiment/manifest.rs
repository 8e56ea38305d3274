//! Run manifests: every produced file with its size and SHA-256.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest.iter() {
        write!(out, "{b:02x}").expect("write to string");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Path relative to the experiment root, `/`-separated.
    pub path: String,
    pub bytes: u64,
    /// Lowercase hex digest, or `-` when the file is absent.
    pub sha256: String,
    /// `ok`, `partial` or `failed`.
    pub status: String,
    pub note: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

const HEADER: &str = "path,bytes,sha256,status,note";

fn relative(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

fn clean_note(note: &str) -> String {
    note.replace([',', '\n', '\r'], " ")
}

impl Manifest {
    /// Hashes `path` and records it relative to `root`.
    pub fn add_file(&mut self, root: &Path, path: &Path, status: &str, note: &str) -> Result<()> {
        let bytes = std::fs::read(path)?;
        self.entries.push(ManifestEntry {
            path: relative(root, path),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
            status: status.to_string(),
            note: clean_note(note),
        });
        Ok(())
    }

    /// Flags whatever a failed run left in `dir`, plus one `failed` line for
    /// the run itself carrying the error.
    pub fn add_partial_run(&mut self, root: &Path, dir: &Path, error: &str) -> Result<()> {
        if dir.is_dir() {
            let mut files: Vec<_> = std::fs::read_dir(dir)?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            files.sort();
            for f in files.iter().filter(|f| f.is_file()) {
                self.add_file(root, f, "partial", "")?;
            }
        }
        self.entries.push(ManifestEntry {
            path: relative(root, dir),
            bytes: 0,
            sha256: "-".into(),
            status: "failed".into(),
            note: clean_note(error),
        });
        Ok(())
    }

    pub fn sort(&mut self) {
        self.entries.sort_by(|a, b| a.path.cmp(&b.path));
    }

    pub fn is_complete(&self) -> bool {
        self.entries.iter().all(|e| e.status == "ok")
    }

    /// Re-hashes every listed file under `root`; false on any difference.
    pub fn verify(&self, root: &Path) -> Result<bool> {
        for e in self.entries.iter().filter(|e| e.sha256 != "-") {
            let bytes = std::fs::read(root.join(&e.path))?;
            if bytes.len() as u64 != e.bytes || sha256_hex(&bytes) != e.sha256 {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{HEADER}")?;
        for e in &self.entries {
            writeln!(out, "{},{},{},{},{}", e.path, e.bytes, e.sha256, e.status, e.note)?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut lines = BufReader::new(input).lines();
        let header = lines.next().transpose()?.ok_or(Error::Empty("manifest"))?;
        if header.trim_end() != HEADER {
            return Err(Error::Parse(format!("unexpected manifest header '{}'", header.trim_end())));
        }
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.trim_end_matches(['\r', '\n']).splitn(5, ',').collect();
            if f.len() != 5 {
                return Err(Error::Parse(format!("manifest row {} has {} fields", i + 1, f.len())));
            }
            entries.push(ManifestEntry {
                path: f[0].to_string(),
                bytes: f[1].parse().map_err(|_| Error::Parse(format!("bad size in manifest row {}", i + 1)))?,
                sha256: f[2].to_string(),
                status: f[3].to_string(),
                note: f[4].to_string(),
            });
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn round_trip_and_verify() {
        let dir = tempfile::tempdir().unwrap();
        let sub = dir.path().join("run").join("seed-0");
        std::fs::create_dir_all(&sub).unwrap();
        std::fs::write(sub.join("a.csv"), "x\n").unwrap();
        let mut m = Manifest::default();
        m.add_file(dir.path(), &sub.join("a.csv"), "ok", "").unwrap();
        m.add_partial_run(dir.path(), &dir.path().join("other"), "diverged, badly\nat epoch 3").unwrap();
        assert_eq!(m.entries[0].path, "run/seed-0/a.csv");
        assert!(!m.is_complete());
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(Manifest::read_csv(buf.as_slice()).unwrap(), m);
        assert!(m.verify(dir.path()).unwrap());
        std::fs::write(sub.join("a.csv"), "y\n").unwrap();
        assert!(!m.verify(dir.path()).unwrap());
    }
}
