//! Checkpoint container: `u64` little-endian header length, a JSON header,
//! then raw little-endian `f32` tensor data in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, Params};
use crate::{Error, Result};

const FORMAT: &str = "ppn-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the data section.
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    dtype: String,
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
    #[serde(default)]
    meta: serde_json::Value,
}

/// Writes `model` plus free-form `meta` (step, dev score, ...) to `path`.
pub fn save_checkpoint(model: &Model<f32>, meta: &serde_json::Value, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut tensors = Vec::new();
    let mut data = Vec::with_capacity(model.params.n_values() * 4);
    for (name, shape, values) in model.params.entries() {
        tensors.push(TensorEntry {
            name,
            shape,
            offset: data.len(),
        });
        for v in values {
            data.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        dtype: "f32".into(),
        config: model.config.clone(),
        tensors,
        meta: meta.clone(),
    };
    let head = serde_json::to_vec(&header)?;
    let mut bytes = Vec::with_capacity(8 + head.len() + data.len());
    bytes.extend_from_slice(&(head.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&head);
    bytes.extend_from_slice(&data);
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn bad(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Checkpoint(format!("{}: {msg}", path.display()))
}

/// Reads a checkpoint, validating the header against the tensor shapes its
/// own config implies.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Model<f32>, serde_json::Value)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let len_bytes: [u8; 8] = bytes
        .get(..8)
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| bad(path, "file too short for header length"))?;
    let head_len = u64::from_le_bytes(len_bytes) as usize;
    let head = bytes
        .get(8..8usize.saturating_add(head_len))
        .ok_or_else(|| bad(path, "truncated header"))?;
    let header: Header = serde_json::from_slice(head).map_err(|e| bad(path, format!("malformed header: {e}")))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(bad(path, format!("unsupported format {} v{}", header.format, header.version)));
    }
    if header.dtype != "f32" {
        return Err(bad(path, format!("unsupported dtype {}", header.dtype)));
    }
    header.config.validate().map_err(|e| bad(path, e))?;
    let data = &bytes[8 + head_len..];

    let mut params = Params::<f32>::zeros(&header.config);
    let expected = params.entries_mut();
    if expected.len() != header.tensors.len() {
        return Err(bad(
            path,
            format!("expected {} tensors, header lists {}", expected.len(), header.tensors.len()),
        ));
    }
    for ((name, shape, dst), entry) in expected.into_iter().zip(&header.tensors) {
        if name != entry.name || shape != entry.shape {
            return Err(bad(
                path,
                format!("tensor {} {:?} does not match expected {name} {shape:?}", entry.name, entry.shape),
            ));
        }
        let end = entry.offset + dst.len() * 4;
        let raw = data
            .get(entry.offset..end)
            .ok_or_else(|| bad(path, format!("truncated data for tensor {name}")))?;
        for (d, chunk) in dst.iter_mut().zip(raw.chunks_exact(4)) {
            *d = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        }
    }
    if !params.is_finite() {
        return Err(bad(path, "non-finite parameter values"));
    }
    Ok((
        Model {
            config: header.config,
            params,
        },
        header.meta,
    ))
}

/// Loads a checkpoint and requires its config to equal `expected`, naming
/// the first field that differs.
pub fn load_checkpoint_expecting(path: impl AsRef<Path>, expected: &ModelConfig) -> Result<(Model<f32>, serde_json::Value)> {
    let path = path.as_ref();
    let (model, meta) = load_checkpoint(path)?;
    if model.config.n_link_types() != expected.n_link_types() {
        return Err(bad(
            path,
            format!(
                "field n_link_types: checkpoint has {}, expected {}",
                model.config.n_link_types(),
                expected.n_link_types()
            ),
        ));
    }
    let have = serde_json::to_value(&model.config)?;
    let want = serde_json::to_value(expected)?;
    if let (Some(h), Some(w)) = (have.as_object(), want.as_object()) {
        if let Some((field, wv)) = w.iter().find(|(k, v)| h.get(*k) != Some(v)) {
            return Err(bad(
                path,
                format!("field {field}: checkpoint has {}, expected {wv}", h[field]),
            ));
        }
    }
    Ok((model, meta))
}
