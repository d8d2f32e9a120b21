//! Checkpoint container: `manifest.json` (name → shape, dtype, byte offset)
//! next to one little-endian blob `tensors.bin`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_FILE: &str = "tensors.bin";
pub const FORMAT: &str = "dualmol-tensors";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub blob_bytes: u64,
    pub tensors: Vec<TensorEntry>,
    /// Caller-owned metadata (configs, optimizer step, ...).
    pub meta: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct Container {
    pub manifest: Manifest,
    blob: Vec<u8>,
}

/// Writes a container into directory `dir`. Files are staged under temporary
/// names and renamed at the end, so a failure leaves no partial container.
pub fn write_container<T: Scalar>(dir: &Path, meta: serde_json::Value, tensors: &[(String, &Tensor<T>)]) -> Result<()> {
    let mut blob = Vec::new();
    let mut entries = Vec::with_capacity(tensors.len());
    for (name, t) in tensors {
        if entries.iter().any(|e: &TensorEntry| &e.name == name) {
            return Err(Error::Checkpoint(format!("duplicate tensor name {name}")));
        }
        let offset = blob.len() as u64;
        for &x in t.data() {
            x.write_le(&mut blob);
        }
        entries.push(TensorEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            dtype: T::DTYPE.to_string(),
            offset,
            bytes: blob.len() as u64 - offset,
        });
    }
    let manifest =
        Manifest { format: FORMAT.into(), version: VERSION, blob_bytes: blob.len() as u64, tensors: entries, meta };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let blob_tmp = dir.join(format!("{BLOB_FILE}.tmp"));
    let man_tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
    fs::write(&blob_tmp, &blob).map_err(|e| Error::io(&blob_tmp, e))?;
    fs::write(&man_tmp, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&man_tmp, e))?;
    fs::rename(&blob_tmp, dir.join(BLOB_FILE)).map_err(|e| Error::io(dir, e))?;
    fs::rename(&man_tmp, dir.join(MANIFEST_FILE)).map_err(|e| Error::io(dir, e))?;
    Ok(())
}

pub fn read_container(dir: &Path) -> Result<Container> {
    let mpath = dir.join(MANIFEST_FILE);
    let text = fs::read(&mpath).map_err(|e| Error::Checkpoint(format!("{}: {e}", mpath.display())))?;
    let manifest: Manifest =
        serde_json::from_slice(&text).map_err(|e| Error::Checkpoint(format!("manifest: {e}")))?;
    if manifest.format != FORMAT {
        return Err(Error::Checkpoint(format!("format: expected {FORMAT}, found {}", manifest.format)));
    }
    if manifest.version != VERSION {
        return Err(Error::Checkpoint(format!("version: expected {VERSION}, found {}", manifest.version)));
    }
    let bpath = dir.join(BLOB_FILE);
    let blob = fs::read(&bpath).map_err(|e| Error::Checkpoint(format!("{}: {e}", bpath.display())))?;
    if blob.len() as u64 != manifest.blob_bytes {
        return Err(Error::Checkpoint(format!(
            "blob_bytes: manifest declares {} bytes, file has {}",
            manifest.blob_bytes,
            blob.len()
        )));
    }
    for e in &manifest.tensors {
        let elem = match e.dtype.as_str() {
            "f32" => 4,
            "f64" => 8,
            other => return Err(Error::Checkpoint(format!("{}: unknown dtype {other}", e.name))),
        };
        let n: u64 = e.shape.iter().product::<usize>() as u64;
        if e.bytes != n * elem || e.offset + e.bytes > manifest.blob_bytes {
            return Err(Error::Checkpoint(format!("{}: byte range does not fit shape {:?}", e.name, e.shape)));
        }
    }
    Ok(Container { manifest, blob })
}

impl Container {
    pub fn entry(&self, name: &str) -> Result<&TensorEntry> {
        self.manifest
            .tensors
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("{name}: missing tensor")))
    }

    /// Reads `name`, checking dtype and (when given) the expected shape.
    pub fn tensor<T: Scalar>(&self, name: &str, expected_shape: Option<&[usize]>) -> Result<Tensor<T>> {
        let e = self.entry(name)?;
        if e.dtype != T::DTYPE {
            return Err(Error::Checkpoint(format!("{name}: dtype {} but {} requested", e.dtype, T::DTYPE)));
        }
        if let Some(s) = expected_shape {
            if s != e.shape.as_slice() {
                return Err(Error::Checkpoint(format!("{name}: shape {:?} but config expects {s:?}", e.shape)));
            }
        }
        let bytes = &self.blob[e.offset as usize..(e.offset + e.bytes) as usize];
        let data = bytes.chunks_exact(T::BYTES).map(T::read_le).collect();
        Tensor::new(e.shape.clone(), data)
    }
}
