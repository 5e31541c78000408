//! Entailment examples derived from sentence pairs, two per pair.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{write_jsonl, Record};
use crate::error::{Error, Result};
use crate::pipeline::AfinPair;

pub const ENTAILMENT: &str = "entailment";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    NegToAff,
    AffToNeg,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NliExample {
    pub premise: String,
    pub hypothesis: String,
    pub label: String,
    pub pair_id: String,
    pub orientation: Orientation,
}

impl NliExample {
    /// The same example read the other way round.
    pub fn swapped(&self) -> NliExample {
        NliExample {
            premise: self.hypothesis.clone(),
            hypothesis: self.premise.clone(),
            label: self.label.clone(),
            pair_id: self.pair_id.clone(),
            orientation: match self.orientation {
                Orientation::NegToAff => Orientation::AffToNeg,
                Orientation::AffToNeg => Orientation::NegToAff,
            },
        }
    }
}

impl Record for NliExample {
    fn record_id(&self) -> String {
        self.pair_id.clone()
    }
}

/// Both orientations of one pair, negated premise first.
pub fn nli_examples(pair: &AfinPair) -> [NliExample; 2] {
    let first = NliExample {
        premise: pair.negated.clone(),
        hypothesis: pair.affirmative.clone(),
        label: ENTAILMENT.to_string(),
        pair_id: pair.id.clone(),
        orientation: Orientation::NegToAff,
    };
    let second = first.swapped();
    [first, second]
}

pub fn derive_nli<'a, I>(pairs: I) -> impl Iterator<Item = NliExample> + 'a
where
    I: IntoIterator<Item = &'a AfinPair>,
    I::IntoIter: 'a,
{
    pairs.into_iter().flat_map(nli_examples)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Tsv,
    Jsonl,
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(ExportFormat::Tsv),
            "jsonl" => Ok(ExportFormat::Jsonl),
            other => Err(Error::invalid(format!("unknown export format {other:?} (tsv or jsonl)"))),
        }
    }
}

/// Replaces tabs and line breaks so a field stays in its TSV cell.
pub(crate) fn tsv_field(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

/// Writes a TSV file with a header row. Returns the number of data rows.
pub(crate) fn write_tsv<I>(path: &Path, header: &[&str], rows: I) -> Result<usize>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(f);
    let mut n = 0;
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", header.join("\t")).map_err(io)?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|c| tsv_field(c)).collect();
        writeln!(out, "{}", cells.join("\t")).map_err(io)?;
        n += 1;
    }
    out.flush().map_err(io)?;
    Ok(n)
}

pub fn export_nli<I>(examples: I, format: ExportFormat, path: impl AsRef<Path>) -> Result<usize>
where
    I: IntoIterator<Item = NliExample>,
{
    let path = path.as_ref();
    match format {
        ExportFormat::Jsonl => write_jsonl(examples, path),
        ExportFormat::Tsv => write_tsv(
            path,
            &["premise", "hypothesis", "label"],
            examples
                .into_iter()
                .map(|e| vec![e.premise, e.hypothesis, e.label]),
        ),
    }
}
