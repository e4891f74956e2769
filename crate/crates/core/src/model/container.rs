//! Binary framing shared by checkpoints and trainer state files:
//! 4-byte magic, `u32` little-endian header length, JSON header, then a flat
//! little-endian `f32` payload.

use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};

pub(crate) struct Container {
    pub header: Value,
    pub payload: Vec<f32>,
}

pub(crate) fn encode(magic: &[u8; 4], header: &Value, blobs: &[&[f32]]) -> Vec<u8> {
    let json = serde_json::to_vec(header).expect("header serializes");
    let floats: usize = blobs.iter().map(|b| b.len()).sum();
    let mut out = Vec::with_capacity(8 + json.len() + 4 * floats);
    out.extend_from_slice(magic);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for blob in blobs {
        for v in *blob {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parses the framing. `err(field, message)` builds the caller's error type.
pub(crate) fn decode(bytes: &[u8], magic: &[u8; 4], err: &dyn Fn(&str, String) -> Error) -> Result<Container> {
    if bytes.len() < 8 || &bytes[..4] != magic {
        return Err(err("magic", format!("expected {:?} file signature", String::from_utf8_lossy(magic))));
    }
    let len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let body = &bytes[8..];
    if len > body.len() {
        return Err(err("header_length", format!("header claims {len} bytes but only {} follow", body.len())));
    }
    let header: Value = serde_json::from_slice(&body[..len]).map_err(|e| err("header", e.to_string()))?;
    let rest = &body[len..];
    if !rest.len().is_multiple_of(4) {
        return Err(err("payload", format!("payload length {} is not a multiple of 4", rest.len())));
    }
    let payload = rest.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
    Ok(Container { header, payload })
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Extracts and deserializes a required header field.
pub(crate) fn field<T: serde::de::DeserializeOwned>(header: &Value, name: &str, err: &dyn Fn(&str, String) -> Error) -> Result<T> {
    let v = header.get(name).ok_or_else(|| err(name, "missing".into()))?;
    serde_json::from_value(v.clone()).map_err(|e| err(name, e.to_string()))
}
