//! Bitext ingestion and JSONL persistence.
//!
//! Readers are single-pass iterators over a buffered file handle, so memory
//! use does not grow with corpus size. Lines that are not valid UTF-8, that
//! are empty after trimming, or (for TSV) that do not have exactly two fields
//! are skipped and tallied in [`IngestDiagnostics`].

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_READ_BUFFER: usize = 64 * 1024;

/// One aligned bitext record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentencePair {
    pub id: String,
    pub source_lang: String,
    pub target_lang: String,
    pub source_text: String,
    pub target_text: String,
    pub corpus: String,
}

/// Per-corpus negation tallies. `neg_either` counts pairs where exactly one
/// side is negated.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub corpus: String,
    pub total_pairs: u64,
    pub neg_both: u64,
    pub neg_either: u64,
    pub neg_neither: u64,
    pub yielded_pairs: u64,
}

impl CorpusStats {
    pub fn new(corpus: impl Into<String>) -> Self {
        CorpusStats {
            corpus: corpus.into(),
            ..Default::default()
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.neg_both + self.neg_either + self.neg_neither == self.total_pairs
            && self.yielded_pairs <= self.neg_either
    }

    pub fn merge(&mut self, other: &CorpusStats) {
        self.total_pairs += other.total_pairs;
        self.neg_both += other.neg_both;
        self.neg_either += other.neg_either;
        self.neg_neither += other.neg_neither;
        self.yielded_pairs += other.yielded_pairs;
    }
}

/// Counts of skipped input lines.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestDiagnostics {
    pub invalid_utf8: u64,
    pub malformed: u64,
    pub empty: u64,
}

impl IngestDiagnostics {
    pub fn skipped(&self) -> u64 {
        self.invalid_utf8 + self.malformed + self.empty
    }
}

/// Anything written to JSONL; the id is used in error messages.
pub trait Record {
    fn record_id(&self) -> String;
}

impl Record for SentencePair {
    fn record_id(&self) -> String {
        self.id.clone()
    }
}

impl Record for CorpusStats {
    fn record_id(&self) -> String {
        self.corpus.clone()
    }
}

impl<T: Record> Record for &T {
    fn record_id(&self) -> String {
        (*self).record_id()
    }
}

/// Reads one raw line (without the terminator). Returns `None` at EOF.
fn read_raw_line(reader: &mut impl BufRead, buf: &mut Vec<u8>) -> io::Result<Option<()>> {
    buf.clear();
    if reader.read_until(b'\n', buf)? == 0 {
        return Ok(None);
    }
    if buf.last() == Some(&b'\n') {
        buf.pop();
        if buf.last() == Some(&b'\r') {
            buf.pop();
        }
    }
    Ok(Some(()))
}

/// Counts lines the same way [`read_raw_line`] splits them, in constant memory.
fn count_lines(path: &Path) -> Result<usize> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = vec![0u8; DEFAULT_READ_BUFFER];
    let mut lines = 0;
    let mut last = None;
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        lines += buf[..n].iter().filter(|&&b| b == b'\n').count();
        last = Some(buf[n - 1]);
    }
    if matches!(last, Some(b) if b != b'\n') {
        lines += 1;
    }
    Ok(lines)
}

fn open_buffered(path: &Path, capacity: usize) -> Result<BufReader<File>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::with_capacity(capacity, f))
}

/// Streaming reader over a Moses-style pair of aligned plain-text files.
pub struct MosesReader {
    source: BufReader<File>,
    target: BufReader<File>,
    source_path: PathBuf,
    target_path: PathBuf,
    source_lang: String,
    target_lang: String,
    corpus: String,
    line_no: usize,
    src_buf: Vec<u8>,
    tgt_buf: Vec<u8>,
    diagnostics: IngestDiagnostics,
    done: bool,
}

impl MosesReader {
    pub fn diagnostics(&self) -> IngestDiagnostics {
        self.diagnostics
    }
}

impl Iterator for MosesReader {
    type Item = Result<SentencePair>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            let src = match read_raw_line(&mut self.source, &mut self.src_buf) {
                Ok(r) => r,
                Err(e) => {
                    self.done = true;
                    return Some(Err(Error::io(&self.source_path, e)));
                }
            };
            let tgt = match read_raw_line(&mut self.target, &mut self.tgt_buf) {
                Ok(r) => r,
                Err(e) => {
                    self.done = true;
                    return Some(Err(Error::io(&self.target_path, e)));
                }
            };
            if src.is_none() || tgt.is_none() {
                self.done = true;
                return None;
            }
            self.line_no += 1;

            let (Ok(s), Ok(t)) = (
                std::str::from_utf8(&self.src_buf),
                std::str::from_utf8(&self.tgt_buf),
            ) else {
                self.diagnostics.invalid_utf8 += 1;
                continue;
            };
            let (s, t) = (s.trim(), t.trim());
            if s.is_empty() || t.is_empty() {
                self.diagnostics.empty += 1;
                continue;
            }
            return Some(Ok(SentencePair {
                id: format!("{}:{}", self.corpus, self.line_no),
                source_lang: self.source_lang.clone(),
                target_lang: self.target_lang.clone(),
                source_text: s.to_string(),
                target_text: t.to_string(),
                corpus: self.corpus.clone(),
            }));
        }
        None
    }
}

/// Opens a Moses bitext. Both files are counted up front so a length mismatch
/// fails before any record is produced.
pub fn ingest_moses(
    source_path: impl AsRef<Path>,
    target_path: impl AsRef<Path>,
    source_lang: &str,
    target_lang: &str,
    corpus: &str,
) -> Result<MosesReader> {
    ingest_moses_with_buffer(
        source_path,
        target_path,
        source_lang,
        target_lang,
        corpus,
        DEFAULT_READ_BUFFER,
    )
}

pub fn ingest_moses_with_buffer(
    source_path: impl AsRef<Path>,
    target_path: impl AsRef<Path>,
    source_lang: &str,
    target_lang: &str,
    corpus: &str,
    buffer: usize,
) -> Result<MosesReader> {
    let (sp, tp) = (source_path.as_ref(), target_path.as_ref());
    let (source_lines, target_lines) = (count_lines(sp)?, count_lines(tp)?);
    if source_lines != target_lines {
        return Err(Error::LineCountMismatch {
            source_lines,
            target_lines,
        });
    }
    Ok(MosesReader {
        source: open_buffered(sp, buffer)?,
        target: open_buffered(tp, buffer)?,
        source_path: sp.to_path_buf(),
        target_path: tp.to_path_buf(),
        source_lang: source_lang.to_string(),
        target_lang: target_lang.to_string(),
        corpus: corpus.to_string(),
        line_no: 0,
        src_buf: Vec::new(),
        tgt_buf: Vec::new(),
        diagnostics: IngestDiagnostics::default(),
        done: false,
    })
}

/// Streaming reader over a `source<TAB>target` file.
pub struct TsvReader {
    reader: BufReader<File>,
    path: PathBuf,
    source_lang: String,
    target_lang: String,
    corpus: String,
    line_no: usize,
    buf: Vec<u8>,
    diagnostics: IngestDiagnostics,
    done: bool,
}

impl TsvReader {
    pub fn diagnostics(&self) -> IngestDiagnostics {
        self.diagnostics
    }
}

impl Iterator for TsvReader {
    type Item = Result<SentencePair>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            match read_raw_line(&mut self.reader, &mut self.buf) {
                Ok(Some(())) => {}
                Ok(None) => {
                    self.done = true;
                    return None;
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(Error::io(&self.path, e)));
                }
            }
            self.line_no += 1;
            let Ok(line) = std::str::from_utf8(&self.buf) else {
                self.diagnostics.invalid_utf8 += 1;
                continue;
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 {
                self.diagnostics.malformed += 1;
                continue;
            }
            let (s, t) = (fields[0].trim(), fields[1].trim());
            if s.is_empty() || t.is_empty() {
                self.diagnostics.empty += 1;
                continue;
            }
            return Some(Ok(SentencePair {
                id: format!("{}:{}", self.corpus, self.line_no),
                source_lang: self.source_lang.clone(),
                target_lang: self.target_lang.clone(),
                source_text: s.to_string(),
                target_text: t.to_string(),
                corpus: self.corpus.clone(),
            }));
        }
        None
    }
}

pub fn ingest_tsv(
    path: impl AsRef<Path>,
    source_lang: &str,
    target_lang: &str,
    corpus: &str,
) -> Result<TsvReader> {
    let path = path.as_ref();
    Ok(TsvReader {
        reader: open_buffered(path, DEFAULT_READ_BUFFER)?,
        path: path.to_path_buf(),
        source_lang: source_lang.to_string(),
        target_lang: target_lang.to_string(),
        corpus: corpus.to_string(),
        line_no: 0,
        buf: Vec::new(),
        diagnostics: IngestDiagnostics::default(),
        done: false,
    })
}

/// Writes records as JSON lines to any writer, preserving input order.
pub fn write_jsonl_to<W, T, I>(records: I, out: W) -> Result<usize>
where
    W: Write,
    T: Serialize + Record,
    I: IntoIterator<Item = T>,
{
    let mut out = BufWriter::new(out);
    let mut n = 0;
    for rec in records {
        serde_json::to_writer(&mut out, &rec).map_err(|source| Error::Serialize {
            id: rec.record_id(),
            source,
        })?;
        out.write_all(b"\n")
            .map_err(|e| Error::io("<jsonl output>", e))?;
        n += 1;
    }
    out.flush().map_err(|e| Error::io("<jsonl output>", e))?;
    Ok(n)
}

/// Writes records to `path` (truncating it). Returns the record count.
pub fn write_jsonl<T, I>(records: I, path: impl AsRef<Path>) -> Result<usize>
where
    T: Serialize + Record,
    I: IntoIterator<Item = T>,
{
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_jsonl_to(records, f).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Lazily parsed JSONL file. Blank lines are ignored.
pub struct JsonlReader<T> {
    reader: BufReader<File>,
    path: PathBuf,
    line_no: usize,
    buf: String,
    _marker: PhantomData<T>,
}

impl<T: DeserializeOwned> Iterator for JsonlReader<T> {
    type Item = Result<T>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            }
            self.line_no += 1;
            let line = self.buf.trim();
            if line.is_empty() {
                continue;
            }
            return Some(serde_json::from_str(line).map_err(|source| Error::Json {
                path: self.path.clone(),
                line: self.line_no,
                source,
            }));
        }
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<JsonlReader<T>> {
    let path = path.as_ref();
    Ok(JsonlReader {
        reader: open_buffered(path, DEFAULT_READ_BUFFER)?,
        path: path.to_path_buf(),
        line_no: 0,
        buf: String::new(),
        _marker: PhantomData,
    })
}

/// Reads a whole JSONL file, failing on the first bad line.
pub fn read_jsonl_all<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    read_jsonl(path)?.collect()
}
