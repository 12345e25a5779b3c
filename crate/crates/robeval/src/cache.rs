//! Append-only completion cache.
//!
//! One JSON object per line: `{key, prompt, completion}`. A torn final line
//! (interrupted write) is skipped on load, so the cache stays usable after a
//! crash.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Hex SHA-256 of `model_name`, a NUL byte, then `prompt`.
pub fn cache_key(model_name: &str, prompt: &str) -> String {
    let mut h = Sha256::new();
    h.update(model_name.as_bytes());
    h.update([0u8]);
    h.update(prompt.as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    key: String,
    prompt: String,
    completion: String,
}

#[derive(Debug)]
pub struct Cache {
    path: PathBuf,
    entries: HashMap<String, String>,
    file: File,
}

impl Cache {
    pub fn open(path: &Path) -> Result<Self> {
        let io_err = |e| Error::io(path, e);
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path).map_err(io_err)?;

        let mut entries = HashMap::new();
        for (i, line) in BufReader::new(&file).lines().enumerate() {
            let line = line.map_err(io_err)?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Entry>(&line) {
                Ok(e) => {
                    entries.entry(e.key).or_insert(e.completion);
                }
                Err(e) => warn!("{}:{}: unreadable cache line skipped ({e})", path.display(), i + 1),
            }
        }

        // Terminate a torn last line so the next append starts on its own line.
        let len = file.metadata().map_err(io_err)?.len();
        if len > 0 {
            let mut last = [0u8; 1];
            file.seek(SeekFrom::Start(len - 1)).map_err(io_err)?;
            file.read_exact(&mut last).map_err(io_err)?;
            if last[0] != b'\n' {
                file.write_all(b"\n").map_err(io_err)?;
            }
        }
        Ok(Self { path: path.into(), entries, file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Append and flush one entry. Existing keys are left untouched.
    pub fn insert(&mut self, key: &str, prompt: &str, completion: &str) -> Result<()> {
        if self.entries.contains_key(key) {
            return Ok(());
        }
        let entry = Entry { key: key.into(), prompt: prompt.into(), completion: completion.into() };
        let mut line = serde_json::to_string(&entry).expect("cache entry serializes");
        line.push('\n');
        self.file.write_all(line.as_bytes()).and_then(|_| self.file.flush()).map_err(|e| Error::io(&self.path, e))?;
        self.entries.insert(entry.key, entry.completion);
        Ok(())
    }
}
