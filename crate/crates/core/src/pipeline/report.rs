use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{AfinPair, Direction, NegationType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub corpus: String,
    pub ingested: u64,
    pub pairs: u64,
    /// pairs / ingested, in percent.
    pub yield_pct: f64,
    pub types: BTreeMap<NegationType, u64>,
    /// Share of each negation type among the row's pairs, in percent.
    pub type_pct: BTreeMap<NegationType, f64>,
    pub directions: BTreeMap<Direction, u64>,
}

impl ReportRow {
    fn empty(corpus: &str, ingested: u64) -> Self {
        ReportRow {
            corpus: corpus.to_string(),
            ingested,
            pairs: 0,
            yield_pct: 0.0,
            types: NegationType::ALL.iter().map(|&t| (t, 0)).collect(),
            type_pct: BTreeMap::new(),
            directions: Direction::ALL.iter().map(|&d| (d, 0)).collect(),
        }
    }

    fn add(&mut self, pair: &AfinPair) {
        self.pairs += 1;
        *self.types.entry(pair.negation_type).or_default() += 1;
        *self.directions.entry(pair.direction).or_default() += 1;
    }

    fn finish(&mut self) {
        self.yield_pct = pct(self.pairs, self.ingested);
        self.type_pct = self
            .types
            .iter()
            .map(|(&t, &n)| (t, pct(n, self.pairs)))
            .collect();
    }
}

fn pct(n: u64, d: u64) -> f64 {
    if d == 0 {
        0.0
    } else {
        100.0 * n as f64 / d as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub rows: Vec<ReportRow>,
    pub all: ReportRow,
}

/// Per-corpus and overall pair statistics. `ingested` gives the number of
/// bitext pairs read per corpus; corpora missing from it get a 0% yield.
pub fn corpus_report<'a>(
    pairs: impl IntoIterator<Item = &'a AfinPair>,
    ingested: &BTreeMap<String, u64>,
) -> CorpusReport {
    let mut rows: BTreeMap<String, ReportRow> = ingested
        .iter()
        .map(|(c, &n)| (c.clone(), ReportRow::empty(c, n)))
        .collect();
    let mut all = ReportRow::empty("All", ingested.values().sum());
    for p in pairs {
        rows.entry(p.corpus.clone())
            .or_insert_with(|| ReportRow::empty(&p.corpus, 0))
            .add(p);
        all.add(p);
    }
    let mut rows: Vec<ReportRow> = rows.into_values().collect();
    rows.iter_mut().for_each(ReportRow::finish);
    all.finish();
    CorpusReport { rows, all }
}

impl CorpusReport {
    /// Plain-text table, one row per corpus followed by the "All" row.
    pub fn render_table(&self) -> String {
        let mut header = vec!["Corpus".to_string(), "Ingested".into(), "#pairs".into(), "%pairs".into()];
        header.extend(NegationType::ALL.iter().map(|t| format!("%{}", t.as_str())));
        header.extend(Direction::ALL.iter().map(|d| d.as_str().to_string()));
        let mut cells = vec![header];
        for row in self.rows.iter().chain(std::iter::once(&self.all)) {
            let mut line = vec![
                row.corpus.clone(),
                row.ingested.to_string(),
                row.pairs.to_string(),
                format!("{:.2}", row.yield_pct),
            ];
            line.extend(
                NegationType::ALL
                    .iter()
                    .map(|t| format!("{:.2}", row.type_pct.get(t).copied().unwrap_or(0.0))),
            );
            line.extend(Direction::ALL.iter().map(|d| row.directions[d].to_string()));
            cells.push(line);
        }
        let widths: Vec<usize> = (0..cells[0].len())
            .map(|c| cells.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, line) in cells.iter().enumerate() {
            let rendered: Vec<String> = line
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (cell, &w))| {
                    if c == 0 {
                        format!("{cell:<w$}")
                    } else {
                        format!("{cell:>w$}")
                    }
                })
                .collect();
            writeln!(out, "{}", rendered.join("  ").trim_end()).unwrap();
            if i == 0 || i == cells.len() - 2 {
                let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
                writeln!(out, "{}", "-".repeat(total)).unwrap();
            }
        }
        out
    }
}
