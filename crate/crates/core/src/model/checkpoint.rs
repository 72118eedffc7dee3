//! Checkpoint layout: 8-byte magic, little-endian `u64` header length, a
//! JSON header (format version, model config, parameter manifest), then the
//! parameters as little-endian `f32` in manifest order.

use std::fs;
use std::path::Path;

use icepinn_autodiff::{Shape, Tensor};
use serde::{Deserialize, Serialize};

use super::{HisUnetParams, ModelConfig, ModelError, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ICEPCKPT";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: [usize; 4],
    /// Offset in `f32` elements from the start of the payload.
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    params: Vec<Entry>,
    payload_len: usize,
}

pub fn save_checkpoint(params: &HisUnetParams<f32>, path: &Path) -> Result<()> {
    let mut offset = 0;
    let entries = params
        .specs()
        .iter()
        .map(|s| {
            let e = Entry {
                name: s.name.clone(),
                shape: s.shape.as_array(),
                offset,
            };
            offset += s.shape.len();
            e
        })
        .collect();
    let header = Header {
        format_version: FORMAT_VERSION,
        config: params.config().clone(),
        params: entries,
        payload_len: offset,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut bytes = Vec::with_capacity(16 + json.len() + 4 * offset);
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    for t in params.tensors() {
        for v in t.data() {
            bytes.extend_from_slice(&v.to_bits().to_le_bytes());
        }
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| ModelError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, bytes).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<HisUnetParams<f32>> {
    let corrupt = |reason: String| ModelError::Corrupt {
        path: path.to_path_buf(),
        reason,
    };
    let bytes = fs::read(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(corrupt("missing checkpoint magic".into()));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes
        .get(16..16usize.saturating_add(hlen))
        .ok_or_else(|| corrupt(format!("header of {hlen} bytes runs past end of file")))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| corrupt(format!("header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(corrupt(format!("unsupported format version {}", header.format_version)));
    }
    let payload = &bytes[16 + hlen..];
    if payload.len() != 4 * header.payload_len {
        return Err(corrupt(format!(
            "payload has {} bytes, header declares {}",
            payload.len(),
            4 * header.payload_len
        )));
    }
    let mut tensors = Vec::with_capacity(header.params.len());
    for e in &header.params {
        let shape = Shape::from(e.shape);
        let end = e.offset + shape.len();
        if end > header.payload_len {
            return Err(corrupt(format!("{} extends past the payload", e.name)));
        }
        let data = payload[4 * e.offset..4 * end]
            .chunks_exact(4)
            .map(|c| f32::from_bits(u32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        tensors.push(Tensor::from_vec(shape, data)?);
    }
    let params = HisUnetParams::from_tensors(header.config, tensors).map_err(|e| corrupt(e.to_string()))?;
    for (spec, e) in params.specs().iter().zip(&header.params) {
        if spec.name != e.name {
            return Err(corrupt(format!("parameter `{}` where `{}` was expected", e.name, spec.name)));
        }
    }
    Ok(params)
}

/// Loads and checks that the stored config equals `expected`.
pub fn load_checkpoint_expecting(path: &Path, expected: &ModelConfig) -> Result<HisUnetParams<f32>> {
    let params = load_checkpoint(path)?;
    if params.config() != expected {
        return Err(ModelError::ConfigMismatch {
            expected: format!("{expected:?}"),
            found: format!("{:?}", params.config()),
        });
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut p = init_params::<f32>(&ModelConfig::default(), 9).unwrap();
        let w = p.get_mut("siv.head.bias").unwrap().data_mut();
        w[0] = -0.0;
        w[1] = f32::NAN;
        save_checkpoint(&p, &path).unwrap();
        let q = load_checkpoint(&path).unwrap();
        for (a, b) in p.tensors().iter().zip(q.tensors()) {
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(q.config(), p.config());
    }

    #[test]
    fn config_mismatch_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&init_params::<f32>(&ModelConfig::default(), 0).unwrap(), &path).unwrap();
        let other = ModelConfig {
            base_channels: 16,
            ..ModelConfig::default()
        };
        assert!(matches!(load_checkpoint_expecting(&path, &other), Err(ModelError::ConfigMismatch { .. })));
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&init_params::<f32>(&ModelConfig::default(), 0).unwrap(), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        for cut in [4, 20, bytes.len() - 3] {
            fs::write(&path, &bytes[..cut]).unwrap();
            assert!(matches!(load_checkpoint(&path), Err(ModelError::Corrupt { .. })), "cut {cut}");
        }
    }
}
