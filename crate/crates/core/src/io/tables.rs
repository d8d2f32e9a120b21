use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row of a labeled property dataset (`id,smiles[,iupac],label`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub id: String,
    pub smiles: String,
    pub iupac: Option<String>,
    pub label: f64,
}

/// Row of a drug-pair interaction table (`id_a,id_b,label`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrugPair {
    pub id_a: String,
    pub id_b: String,
    pub label: u8,
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(f))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, msg: msg.into() }
}

pub fn read_labeled_csv(path: &Path) -> Result<Vec<LabeledRecord>> {
    let mut rdr = csv_reader(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let has_iupac = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["id", "smiles", "label"] => false,
        ["id", "smiles", "iupac", "label"] => true,
        _ => return Err(parse_err(path, 1, format!("header must be id,smiles[,iupac],label, found {header:?}"))),
    };
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        let get = |k: usize| rec.get(k).unwrap_or("").to_string();
        let label_col = if has_iupac { 3 } else { 2 };
        let label: f64 =
            get(label_col).trim().parse().map_err(|_| parse_err(path, line, format!("bad label {:?}", get(label_col))))?;
        let id = get(0);
        if id.is_empty() || get(1).is_empty() {
            return Err(parse_err(path, line, "empty id or smiles"));
        }
        if !seen.insert(id.clone()) {
            return Err(parse_err(path, line, format!("duplicate id {id}")));
        }
        out.push(LabeledRecord { id, smiles: get(1), iupac: has_iupac.then(|| get(2)), label });
    }
    Ok(out)
}

pub fn write_labeled_csv(path: &Path, rows: &[LabeledRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let with_iupac = rows.iter().any(|r| r.iupac.is_some());
    if with_iupac {
        w.write_record(["id", "smiles", "iupac", "label"])?;
    } else {
        w.write_record(["id", "smiles", "label"])?;
    }
    for r in rows {
        let label = r.label.to_string();
        if with_iupac {
            w.write_record([r.id.as_str(), &r.smiles, r.iupac.as_deref().unwrap_or(""), &label])?;
        } else {
            w.write_record([r.id.as_str(), &r.smiles, &label])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_pairs_csv(path: &Path) -> Result<Vec<DrugPair>> {
    let mut rdr = csv_reader(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != ["id_a", "id_b", "label"] {
        return Err(parse_err(path, 1, format!("header must be id_a,id_b,label, found {header:?}")));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        let label = match rec.get(2).map(str::trim) {
            Some("0") => 0,
            Some("1") => 1,
            other => return Err(parse_err(path, line, format!("label must be 0 or 1, found {other:?}"))),
        };
        out.push(DrugPair { id_a: rec[0].to_string(), id_b: rec[1].to_string(), label });
    }
    Ok(out)
}

pub fn write_pairs_csv(path: &Path, rows: &[DrugPair]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["id_a", "id_b", "label"])?;
    for r in rows {
        w.write_record([r.id_a.as_str(), &r.id_b, &r.label.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labeled_round_trip_with_quoted_iupac() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let rows = vec![
            LabeledRecord { id: "a".into(), smiles: "ClCCCl".into(), iupac: Some("1,2-dichloroethane".into()), label: 1.0 },
            LabeledRecord { id: "b".into(), smiles: "CO".into(), iupac: Some("methanol".into()), label: 0.0 },
        ];
        write_labeled_csv(&p, &rows).unwrap();
        assert_eq!(read_labeled_csv(&p).unwrap(), rows);
    }

    #[test]
    fn labeled_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "id,smiles,label\na,C,1\nb,CC,x\n").unwrap();
        assert!(matches!(read_labeled_csv(&p), Err(Error::Parse { line: 3, .. })));
        std::fs::write(&p, "id,label\n").unwrap();
        assert!(matches!(read_labeled_csv(&p), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn pairs_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        let rows = vec![DrugPair { id_a: "d1".into(), id_b: "d2".into(), label: 1 }];
        write_pairs_csv(&p, &rows).unwrap();
        assert_eq!(read_pairs_csv(&p).unwrap(), rows);
        std::fs::write(&p, "id_a,id_b,label\nd1,d2,2\n").unwrap();
        assert!(matches!(read_pairs_csv(&p), Err(Error::Parse { line: 2, .. })));
    }
}
