//! Checkpoint container: a directory holding `manifest.json` plus raw
//! little-endian float32 blobs.
//!
//! The manifest records the format tag, version, model kind, config fields,
//! and a tensor table mapping names to `{shape, dtype, file, byte_offset}`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT: &str = "lsg-ckpt";
pub const VERSION: u32 = 1;
const BLOB_FILE: &str = "tensors.bin";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorEntry {
    pub shape: Vec<usize>,
    pub dtype: String,
    pub file: String,
    pub byte_offset: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub model: String,
    pub config: serde_json::Value,
    pub tensors: BTreeMap<String, TensorEntry>,
}

/// Accumulates tensors in declaration order into a single blob file.
pub struct Writer {
    dir: PathBuf,
    blob: Vec<u8>,
    tensors: BTreeMap<String, TensorEntry>,
}

impl Writer {
    pub fn new(dir: impl AsRef<Path>) -> Self {
        Self {
            dir: dir.as_ref().to_path_buf(),
            blob: Vec::new(),
            tensors: BTreeMap::new(),
        }
    }

    pub fn add<I>(&mut self, name: &str, shape: &[usize], values: I)
    where
        I: IntoIterator<Item = f32>,
    {
        let byte_offset = self.blob.len() as u64;
        let mut count = 0usize;
        for v in values {
            self.blob.extend_from_slice(&v.to_le_bytes());
            count += 1;
        }
        debug_assert_eq!(count, shape.iter().product::<usize>(), "tensor {name}");
        self.tensors.insert(
            name.to_string(),
            TensorEntry {
                shape: shape.to_vec(),
                dtype: "f32".to_string(),
                file: BLOB_FILE.to_string(),
                byte_offset,
            },
        );
    }

    pub fn finish(self, model: &str, config: serde_json::Value) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        fs::write(self.dir.join(BLOB_FILE), &self.blob)?;
        let manifest = Manifest {
            format: FORMAT.to_string(),
            version: VERSION,
            model: model.to_string(),
            config,
            tensors: self.tensors,
        };
        let json = serde_json::to_string_pretty(&manifest)?;
        fs::write(self.dir.join("manifest.json"), json)?;
        Ok(())
    }
}

/// Opens a checkpoint directory and serves validated tensor reads.
pub struct Reader {
    dir: PathBuf,
    manifest: Manifest,
    blobs: std::cell::RefCell<BTreeMap<String, Vec<u8>>>,
}

impl Reader {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let text = fs::read_to_string(dir.join("manifest.json"))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::CorruptManifest(e.to_string()))?;
        if manifest.format != FORMAT {
            return Err(Error::CorruptManifest(format!(
                "unknown format `{}`",
                manifest.format
            )));
        }
        if manifest.version != VERSION {
            return Err(Error::UnsupportedVersion {
                found: manifest.version,
                supported: VERSION,
            });
        }
        Ok(Self {
            dir,
            manifest,
            blobs: std::cell::RefCell::new(BTreeMap::new()),
        })
    }

    pub fn model(&self) -> &str {
        &self.manifest.model
    }

    pub fn config(&self) -> &serde_json::Value {
        &self.manifest.config
    }

    /// Reads one tensor as f32 values, validating its declared shape.
    pub fn tensor(&self, name: &str, expected_shape: &[usize]) -> Result<Vec<f32>> {
        let entry = self
            .manifest
            .tensors
            .get(name)
            .ok_or_else(|| Error::MissingTensor(name.to_string()))?;
        if entry.dtype != "f32" {
            return Err(Error::CorruptManifest(format!(
                "tensor `{name}` has dtype `{}`",
                entry.dtype
            )));
        }
        if entry.shape != expected_shape {
            return Err(Error::shape(
                format!("{name} with shape {expected_shape:?}"),
                format!("{:?}", entry.shape),
            ));
        }
        let mut blobs = self.blobs.borrow_mut();
        if !blobs.contains_key(&entry.file) {
            let bytes = fs::read(self.dir.join(&entry.file))?;
            blobs.insert(entry.file.clone(), bytes);
        }
        let blob = &blobs[&entry.file];
        let numel: usize = entry.shape.iter().product();
        let start = entry.byte_offset as usize;
        let end = start + 4 * numel;
        if end > blob.len() {
            return Err(Error::TruncatedTensor(name.to_string()));
        }
        Ok(blob[start..end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = Writer::new(dir.path());
        w.add("a.weight", &[2, 2], [1.0f32, 2.0, 3.0, 4.0]);
        w.add("b.bias", &[1], [-0.5f32]);
        w.finish("generator", serde_json::json!({"resolution": 8}))
            .unwrap();

        let r = Reader::open(dir.path()).unwrap();
        assert_eq!(r.model(), "generator");
        assert_eq!(r.tensor("a.weight", &[2, 2]).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(r.tensor("b.bias", &[1]).unwrap(), vec![-0.5]);
        assert!(matches!(
            r.tensor("missing", &[1]),
            Err(Error::MissingTensor(_))
        ));
    }

    #[test]
    fn version_and_truncation_errors() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = Writer::new(dir.path());
        w.add("t", &[4], [1.0f32, 2.0, 3.0, 4.0]);
        w.finish("generator", serde_json::json!({})).unwrap();

        // Bump the version in place.
        let manifest_path = dir.path().join("manifest.json");
        let text = std::fs::read_to_string(&manifest_path).unwrap();
        std::fs::write(&manifest_path, text.replace("\"version\": 1", "\"version\": 2")).unwrap();
        assert!(matches!(
            Reader::open(dir.path()),
            Err(Error::UnsupportedVersion { found: 2, .. })
        ));
        std::fs::write(&manifest_path, text).unwrap();

        // Truncate the blob.
        let blob_path = dir.path().join("tensors.bin");
        std::fs::write(&blob_path, [0u8; 7]).unwrap();
        let r = Reader::open(dir.path()).unwrap();
        match r.tensor("t", &[4]) {
            Err(Error::TruncatedTensor(name)) => assert_eq!(name, "t"),
            other => panic!("expected truncation error, got {other:?}"),
        }
    }
}
