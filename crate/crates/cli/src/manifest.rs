use std::fs;
use std::io::{self, Read};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Record of one command run: settings hash, inputs and outputs with
/// content hashes. Names are relative, so reruns in other directories
/// produce identical manifests.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub seed: Option<u64>,
    pub config_sha256: String,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
}

pub fn sha256_file(path: &Path) -> io::Result<(String, u64)> {
    let mut f = fs::File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut n = 0u64;
    loop {
        let k = f.read(&mut buf)?;
        if k == 0 {
            break;
        }
        n += k as u64;
        h.update(&buf[..k]);
    }
    Ok((hex::encode(h.finalize()), n))
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

/// Files of `dir`, recursively, sorted by relative path.
fn walk(dir: &Path, prefix: &str, out: &mut Vec<(String, std::path::PathBuf)>) -> io::Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let name = format!("{prefix}{}", e.file_name().to_string_lossy());
        if e.file_type()?.is_dir() {
            walk(&e.path(), &format!("{name}/"), out)?;
        } else {
            out.push((name, e.path()));
        }
    }
    Ok(())
}

impl Manifest {
    pub fn new(command: &str, seed: Option<u64>, config_sha256: String) -> Self {
        Self { command: command.to_string(), seed, config_sha256, inputs: Vec::new(), outputs: Vec::new() }
    }

    /// A file, or a directory summarized by one hash over its sorted
    /// `(name, hash)` pairs.
    pub fn input(&mut self, path: &Path) -> io::Result<()> {
        let entry = if path.is_dir() {
            let mut files = Vec::new();
            walk(path, "", &mut files)?;
            let mut h = Sha256::new();
            let mut bytes = 0;
            for (name, p) in files {
                let (sha, n) = sha256_file(&p)?;
                h.update(name.as_bytes());
                h.update([0]);
                h.update(sha.as_bytes());
                h.update([b'\n']);
                bytes += n;
            }
            FileEntry { name: format!("{}/", file_name(path)), sha256: hex::encode(h.finalize()), bytes }
        } else {
            let (sha256, bytes) = sha256_file(path)?;
            FileEntry { name: file_name(path), sha256, bytes }
        };
        self.inputs.push(entry);
        Ok(())
    }

    /// Every file under `dir` except the manifest itself.
    pub fn outputs_of_dir(&mut self, dir: &Path) -> io::Result<()> {
        let mut files = Vec::new();
        walk(dir, "", &mut files)?;
        for (name, p) in files {
            if name == MANIFEST_NAME {
                continue;
            }
            let (sha256, bytes) = sha256_file(&p)?;
            self.outputs.push(FileEntry { name, sha256, bytes });
        }
        Ok(())
    }

    pub fn output_file(&mut self, path: &Path) -> io::Result<()> {
        let (sha256, bytes) = sha256_file(path)?;
        self.outputs.push(FileEntry { name: file_name(path), sha256, bytes });
        Ok(())
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let mut json = serde_json::to_string_pretty(self).expect("manifest serializes");
        json.push('\n');
        fs::write(path, json)
    }
}

pub const MANIFEST_NAME: &str = "manifest.json";
