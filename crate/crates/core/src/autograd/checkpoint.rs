//! Tensor checkpoints: a directory holding `manifest.json` (a JSON array of
//! `{name, shape, dtype}`) and one little-endian `f32` blob per tensor,
//! named exactly like the tensor.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::{Error, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
}

fn check_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && name != MANIFEST
        && !name.starts_with('.')
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::Contract(format!("invalid tensor name {name:?}")))
    }
}

pub fn save(dir: &Path, tensors: &[(String, &Tensor<f32>)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = Vec::with_capacity(tensors.len());
    for (name, t) in tensors {
        check_name(name)?;
        let mut bytes = Vec::with_capacity(t.numel() * 4);
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        manifest.push(ManifestEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            dtype: "f32".into(),
        });
    }
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn load(dir: &Path) -> Result<Vec<(String, Tensor<f32>)>> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Vec<ManifestEntry> = serde_json::from_str(&text)?;
    let mut out = Vec::with_capacity(manifest.len());
    for entry in manifest {
        check_name(&entry.name)?;
        if entry.dtype != "f32" {
            return Err(Error::Contract(format!(
                "tensor {} has unsupported dtype {}",
                entry.name, entry.dtype
            )));
        }
        let path = dir.join(&entry.name);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let n: usize = entry.shape.iter().product();
        if bytes.len() != n * 4 {
            return Err(Error::Contract(format!(
                "blob {} holds {} bytes, shape {:?} needs {}",
                entry.name,
                bytes.len(),
                entry.shape,
                n * 4
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.push((entry.name, Tensor::new(entry.shape, data)?));
    }
    Ok(out)
}
