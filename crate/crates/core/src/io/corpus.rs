use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One molecule written in both languages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub id: String,
    pub smiles: String,
    pub iupac: String,
}

/// Aligned SMILES/IUPAC records with unique ids and no empty fields.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairCorpus {
    pub records: Vec<PairRecord>,
}

pub const PAIR_HEADER: [&str; 3] = ["id", "smiles", "iupac"];

impl PairCorpus {
    pub fn new(records: Vec<PairRecord>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &records {
            if r.id.is_empty() || r.smiles.is_empty() || r.iupac.is_empty() {
                return Err(Error::invalid(format!("record {:?} has an empty field", r.id)));
            }
            if !seen.insert(r.id.as_str()) {
                return Err(Error::invalid(format!("duplicate id {}", r.id)));
            }
        }
        Ok(PairCorpus { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn smiles(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.smiles.as_str()).collect()
    }

    pub fn iupac(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.iupac.as_str()).collect()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.id.as_str()).collect()
    }

    /// Splits off the last `n` records.
    pub fn split_tail(&self, n: usize) -> (PairCorpus, PairCorpus) {
        let cut = self.records.len().saturating_sub(n);
        (
            PairCorpus { records: self.records[..cut].to_vec() },
            PairCorpus { records: self.records[cut..].to_vec() },
        )
    }

    pub fn to_tsv(&self) -> String {
        let mut out = PAIR_HEADER.join("\t");
        out.push('\n');
        for r in &self.records {
            writeln!(out, "{}\t{}\t{}", r.id, r.smiles, r.iupac).unwrap();
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

/// Parses a tab-separated pair corpus with header `id<TAB>smiles<TAB>iupac`.
/// CRLF endings are accepted and trailing blank lines ignored.
pub fn parse_pair_corpus_str(text: &str, path: &Path) -> Result<PairCorpus> {
    let err = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
    let lines: Vec<&str> = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l)).collect();
    let last = lines.iter().rposition(|l| !l.is_empty()).map_or(0, |i| i + 1);
    let lines = &lines[..last];
    let Some(header) = lines.first() else {
        return Err(err(1, "missing header".into()));
    };
    let cols: Vec<&str> = header.split('\t').collect();
    if cols != PAIR_HEADER {
        return Err(err(1, format!("header must be id<TAB>smiles<TAB>iupac, found {header:?}")));
    }
    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(lines.len() - 1);
    for (i, line) in lines.iter().enumerate().skip(1) {
        let n = i + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(err(n, format!("expected 3 tab-separated columns, found {}", fields.len())));
        }
        if let Some(col) = fields.iter().position(|f| f.is_empty()) {
            return Err(err(n, format!("empty {} field", PAIR_HEADER[col])));
        }
        if !seen.insert(fields[0]) {
            return Err(err(n, format!("duplicate id {}", fields[0])));
        }
        records.push(PairRecord { id: fields[0].into(), smiles: fields[1].into(), iupac: fields[2].into() });
    }
    Ok(PairCorpus { records })
}

pub fn parse_pair_corpus(path: &Path) -> Result<PairCorpus> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: format!("not valid UTF-8: {e}"),
    })?;
    parse_pair_corpus_str(&text, path)
}

/// One string per line; CRLF tolerated, blank lines skipped.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(|l| l.trim_end_matches('\r')).filter(|l| !l.is_empty()).map(str::to_owned).collect())
}
