//! `DVCF` clip-feature files: magic, version, clip count, feature width,
//! then clip-major little-endian `f32` values.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor_engine::Tensor;

pub const FEATURE_MAGIC: &[u8; 4] = b"DVCF";
pub const FEATURE_VERSION: u32 = 1;
const HEADER: usize = 16;

pub fn encode_features(features: &Tensor<f32>) -> Result<Vec<u8>> {
    let &[t, d] = features.shape() else {
        return Err(Error::Shape(format!("features must be [T×D], got {:?}", features.shape())));
    };
    let mut out = Vec::with_capacity(HEADER + 4 * features.len());
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&(t as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    for v in features.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_features(bytes: &[u8]) -> Result<Tensor<f32>> {
    if bytes.len() < HEADER || &bytes[..4] != FEATURE_MAGIC {
        return Err(Error::Format("not a DVCF feature file (bad magic)".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != FEATURE_VERSION {
        return Err(Error::Format(format!(
            "feature file version {version} is not supported (expected {FEATURE_VERSION})"
        )));
    }
    let (t, d) = (word(8) as usize, word(12) as usize);
    let expected = HEADER + 4 * t * d;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "byte length mismatch: expected {expected} bytes for {t}×{d} features, found {}",
            bytes.len()
        )));
    }
    let data = bytes[HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Tensor::new(vec![t, d], data).map_err(|_| Error::Format(format!("empty {t}×{d} feature matrix")))
}

pub fn write_features(path: &Path, features: &Tensor<f32>) -> Result<()> {
    std::fs::write(path, encode_features(features)?).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: &Path) -> Result<Tensor<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes)
}
