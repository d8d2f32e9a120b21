use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::encoder::{Branch, Fingerprint};
use crate::error::{Error, Result};

pub const STORE_MAGIC: &[u8; 4] = b"MMFP";
pub const STORE_VERSION: u32 = 1;
const HEADER_BYTES: usize = 4 + 4 + 8 + 4 + 1;

/// Immutable fingerprint matrix with row ids and cached row norms.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    branch: Branch,
    ids: Vec<String>,
    data: Vec<f32>,
    norms: Vec<f64>,
}

fn row_norm(row: &[f32]) -> f64 {
    row.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains(['\n', '\r']) {
        return Err(Error::invalid(format!("store ids must be non-empty single-line strings, got {id:?}")));
    }
    Ok(())
}

/// Companion id file of a store: `<path>.ids`.
pub fn ids_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".ids");
    PathBuf::from(s)
}

impl EmbeddingStore {
    /// Builds a store from raw rows. Rows keep their input order.
    pub fn from_rows(branch: Branch, dim: usize, ids: Vec<String>, data: Vec<f32>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::invalid("embedding store needs at least one fingerprint"));
        }
        if dim == 0 {
            return Err(Error::shape("build-store", "fingerprint dimension must be positive"));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::shape("build-store", format!("{} values for {} ids of dim {dim}", data.len(), ids.len())));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            check_id(id)?;
            if !seen.insert(id.as_str()) {
                return Err(Error::invalid(format!("duplicate fingerprint id {id:?}")));
            }
        }
        let mut norms = Vec::with_capacity(ids.len());
        for (row, id) in data.chunks_exact(dim).zip(&ids) {
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!("fingerprint {id:?} has non-finite values")));
            }
            let n = row_norm(row);
            if n == 0.0 {
                return Err(Error::degenerate(format!("fingerprint {id:?} has zero norm")));
            }
            norms.push(n);
        }
        Ok(EmbeddingStore { dim, branch, ids, data, norms })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn branch(&self) -> Branch {
        self.branch
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn norm(&self, i: usize) -> f64 {
        self.norms[i]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub fn fingerprint(&self, i: usize) -> Fingerprint {
        Fingerprint { id: self.ids[i].clone(), branch: self.branch, values: self.row(i).to_vec() }
    }

    /// Rows `rows` (in that order) as a new store.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let mut ids = Vec::with_capacity(rows.len());
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        for &r in rows {
            if r >= self.len() {
                return Err(Error::invalid(format!("row {r} out of range for store of {}", self.len())));
            }
            ids.push(self.ids[r].clone());
            data.extend_from_slice(self.row(r));
        }
        EmbeddingStore::from_rows(self.branch, self.dim, ids, data)
    }

    /// Binary matrix file plus `<path>.ids`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(HEADER_BYTES + self.data.len() * 4);
        buf.extend_from_slice(STORE_MAGIC);
        buf.extend_from_slice(&STORE_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.len() as u64).to_le_bytes());
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        buf.push(match self.branch {
            Branch::Smiles => 0,
            Branch::Iupac => 1,
        });
        for &x in &self.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        let mut ids = self.ids.join("\n");
        ids.push('\n');
        let idp = ids_path(path);
        fs::write(path, buf).map_err(|e| Error::io(path, e))?;
        fs::write(&idp, ids).map_err(|e| Error::io(idp, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bad = |msg: String| Error::Store { path: path.to_owned(), msg };
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() < HEADER_BYTES {
            return Err(bad(format!("file has {} bytes, shorter than the header", bytes.len())));
        }
        if &bytes[..4] != STORE_MAGIC {
            return Err(bad("missing MMFP magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != STORE_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let count = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let dim = u32::from_le_bytes(bytes[16..20].try_into().expect("4 bytes")) as usize;
        let branch = match bytes[20] {
            0 => Branch::Smiles,
            1 => Branch::Iupac,
            b => return Err(bad(format!("unknown branch tag {b}"))),
        };
        let body = &bytes[HEADER_BYTES..];
        if count.checked_mul(dim).and_then(|n| n.checked_mul(4)) != Some(body.len()) {
            return Err(bad(format!("header says {count}x{dim} but matrix has {} bytes", body.len())));
        }
        let data = body.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))).collect();
        let idp = ids_path(path);
        let text = fs::read_to_string(&idp).map_err(|e| Error::io(&idp, e))?;
        let ids: Vec<String> = text.lines().map(str::to_owned).collect();
        if ids.len() != count {
            return Err(Error::Store { path: idp, msg: format!("{} ids for {count} rows", ids.len()) });
        }
        EmbeddingStore::from_rows(branch, dim, ids, data)
    }
}

/// Store over `fingerprints` in input order. All must share one branch and
/// one dimension.
pub fn build_store(fingerprints: &[Fingerprint]) -> Result<EmbeddingStore> {
    let first = fingerprints.first().ok_or_else(|| Error::invalid("embedding store needs at least one fingerprint"))?;
    let dim = first.values.len();
    let mut data = Vec::with_capacity(fingerprints.len() * dim);
    for f in fingerprints {
        if f.values.len() != dim {
            return Err(Error::shape("build-store", format!("fingerprint {:?} has dim {}, expected {dim}", f.id, f.values.len())));
        }
        if f.branch != first.branch {
            return Err(Error::invalid(format!("fingerprint {:?} is from the {} branch, store is {}", f.id, f.branch.as_str(), first.branch.as_str())));
        }
        data.extend_from_slice(&f.values);
    }
    EmbeddingStore::from_rows(first.branch, dim, fingerprints.iter().map(|f| f.id.clone()).collect(), data)
}
