//! Append-only on-disk translation cache.
//!
//! Layout under the cache directory:
//!
//! ```text
//! manifest.jsonl          one {"key", "path"} line per stored entry
//! ab/abcdef….json         one TranslationRecord per entry, named by key
//! ```
//!
//! Entries are written to a temporary file and renamed into place, then the
//! manifest line is appended. An existing entry is never rewritten. A torn
//! manifest line left by a crash is ignored on open; lookups fall back to the
//! entry file itself, so a crash between the two writes loses nothing.

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::TranslationRecord;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Serialize, Deserialize)]
struct ManifestLine {
    key: String,
    path: String,
}

#[derive(Debug)]
pub struct TranslationCache {
    dir: PathBuf,
    keys: RwLock<HashSet<String>>,
    manifest: Mutex<File>,
}

impl TranslationCache {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let manifest_path = dir.join(MANIFEST_FILE);
        let mut keys = HashSet::new();
        if manifest_path.exists() {
            let f = File::open(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
            for line in BufReader::new(f).lines() {
                let line = line.map_err(|e| Error::io(&manifest_path, e))?;
                if let Ok(entry) = serde_json::from_str::<ManifestLine>(&line) {
                    keys.insert(entry.key);
                }
            }
        }
        let mut manifest = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&manifest_path)
            .map_err(|e| Error::io(&manifest_path, e))?;
        if ends_without_newline(&manifest_path).map_err(|e| Error::io(&manifest_path, e))? {
            manifest
                .write_all(b"\n")
                .map_err(|e| Error::io(&manifest_path, e))?;
        }
        Ok(TranslationCache {
            dir,
            keys: RwLock::new(keys),
            manifest: Mutex::new(manifest),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn relative_path(key: &str) -> String {
        format!("{}/{key}.json", &key[..2.min(key.len())])
    }

    pub fn len(&self) -> usize {
        self.keys.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Result<Option<TranslationRecord>> {
        let path = self.dir.join(Self::relative_path(key));
        let listed = self.keys.read().unwrap().contains(key);
        if !listed && !path.exists() {
            return Ok(None);
        }
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::io(&path, e)),
        };
        match serde_json::from_str(&text) {
            Ok(rec) => Ok(Some(rec)),
            // a torn entry is treated as a miss and rewritten by the next put
            Err(_) => Ok(None),
        }
    }

    /// Stores `record` under `key` unless an intact entry already exists.
    pub fn put(&self, key: &str, record: &TranslationRecord) -> Result<()> {
        let mut manifest = self.manifest.lock().unwrap();
        if self.get(key)?.is_some() {
            if self.keys.write().unwrap().insert(key.to_string()) {
                self.append_manifest(&mut manifest, key)?;
            }
            return Ok(());
        }
        let rel = Self::relative_path(key);
        let path = self.dir.join(&rel);
        let parent = path.parent().expect("entry has a parent dir");
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        let tmp = path.with_extension("json.tmp");
        let body = serde_json::to_vec(record).map_err(|source| Error::Serialize {
            id: key.to_string(),
            source,
        })?;
        fs::write(&tmp, body).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        self.keys.write().unwrap().insert(key.to_string());
        self.append_manifest(&mut manifest, key)
    }

    fn append_manifest(&self, manifest: &mut File, key: &str) -> Result<()> {
        let line = serde_json::to_string(&ManifestLine {
            key: key.to_string(),
            path: Self::relative_path(key),
        })
        .expect("manifest line serializes");
        writeln!(manifest, "{line}").map_err(|e| Error::io(self.dir.join(MANIFEST_FILE), e))
    }
}

fn ends_without_newline(path: &Path) -> std::io::Result<bool> {
    let mut f = File::open(path)?;
    if f.metadata()?.len() == 0 {
        return Ok(false);
    }
    f.seek(SeekFrom::End(-1))?;
    let mut last = [0u8; 1];
    f.read_exact(&mut last)?;
    Ok(last[0] != b'\n')
}
