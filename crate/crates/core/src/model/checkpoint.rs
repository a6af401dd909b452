//! Versioned checkpoint container.
//!
//! Layout: 8-byte magic `VOLMIXCK`, `u32` format version and `u64` header
//! length (both little-endian), a UTF-8 JSON header, then every parameter
//! as little-endian `f64` in manifest order. Manifest offsets count `f64`
//! elements from the start of the data section.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, TimeMixerModel};

pub const MAGIC: &[u8; 8] = b"VOLMIXCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub config: ModelConfig,
    pub parameters: Vec<ManifestEntry>,
}

fn bad(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

pub fn to_bytes(model: &TimeMixerModel) -> Vec<u8> {
    let mut offset = 0;
    let parameters = model
        .params()
        .iter()
        .map(|(name, t)| {
            let e = ManifestEntry { name: name.to_string(), shape: t.shape().to_vec(), offset };
            offset += t.len();
            e
        })
        .collect();
    let header = CheckpointHeader { format_version: FORMAT_VERSION, config: model.config().clone(), parameters };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(20 + json.len() + offset * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in model.params().iter() {
        for v in t.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Reads a checkpoint, checking the manifest against the shapes the
/// stored configuration implies.
pub fn from_bytes(bytes: &[u8]) -> Result<TimeMixerModel, ModelError> {
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let data_start = 20usize.checked_add(header_len).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[20..data_start]).map_err(|e| bad(format!("header: {e}")))?;
    if header.format_version != version {
        return Err(bad("header version disagrees with preamble"));
    }
    let mut model = TimeMixerModel::init(header.config)?;
    let expected: Vec<(String, Vec<usize>)> =
        model.params().iter().map(|(n, t)| (n.to_string(), t.shape().to_vec())).collect();
    if expected.len() != header.parameters.len() {
        return Err(bad(format!(
            "manifest lists {} tensors, configuration implies {}",
            header.parameters.len(),
            expected.len()
        )));
    }
    let data = &bytes[data_start..];
    let mut offset = 0;
    for ((name, shape), entry) in expected.iter().zip(&header.parameters) {
        if &entry.name != name || &entry.shape != shape || entry.offset != offset {
            return Err(bad(format!(
                "manifest entry {} {:?}@{} does not match {name} {shape:?}@{offset}",
                entry.name, entry.shape, entry.offset
            )));
        }
        offset += shape.iter().product::<usize>();
    }
    if data.len() != offset * 8 {
        return Err(bad(format!("data section holds {} bytes, expected {}", data.len(), offset * 8)));
    }
    let flat: Vec<f64> = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(bad("non-finite parameter value"));
    }
    model.params_mut().assign_flat(&flat)?;
    Ok(model)
}

pub fn save(model: &TimeMixerModel, path: &Path) -> Result<(), ModelError> {
    std::fs::write(path, to_bytes(model))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<TimeMixerModel, ModelError> {
    from_bytes(&std::fs::read(path)?)
}
