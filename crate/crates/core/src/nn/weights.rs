//! Binary weights container.
//!
//! ```text
//! "MXBW"                       magic
//! u8                           format version (1)
//! u32 LE                       header length in bytes
//! header                       UTF-8 JSON: {"tensors":[{"name","shape"}...],"meta":{...}}
//! f32 LE payload               tensors concatenated in header order
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::layers::Sequential;
use super::tensor::{Real, Tensor};
use super::NnError;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"MXBW";
pub const WEIGHTS_VERSION: u8 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    tensors: Vec<TensorEntry>,
    #[serde(default)]
    meta: serde_json::Value,
}

/// Ordered named tensors plus free-form JSON metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightsFile {
    entries: Vec<(String, Vec<usize>, Vec<f32>)>,
    pub meta: serde_json::Value,
}

impl Default for WeightsFile {
    fn default() -> Self {
        Self { entries: Vec::new(), meta: serde_json::Value::Null }
    }
}

impl WeightsFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<(&[usize], &[f32])> {
        self.entries.iter().find(|(n, _, _)| n == name).map(|(_, s, d)| (s.as_slice(), d.as_slice()))
    }

    pub fn push(&mut self, name: impl Into<String>, shape: &[usize], data: Vec<f32>) -> Result<(), NnError> {
        let name = name.into();
        if self.get(&name).is_some() {
            return Err(NnError::InvalidSpec(format!("duplicate tensor name {name}")));
        }
        if shape.iter().product::<usize>() != data.len() {
            return Err(NnError::InvalidSpec(format!("tensor {name}: shape {shape:?} does not match {} values", data.len())));
        }
        self.entries.push((name, shape.to_vec(), data));
        Ok(())
    }

    /// Appends every parameter (including buffers) of `net` as `prefix.name`.
    pub fn capture<S: Real>(&mut self, prefix: &str, net: &Sequential<S>) -> Result<(), NnError> {
        for (name, p) in net.named_params() {
            let data = p.value.data().iter().map(|v| v.as_f64() as f32).collect();
            self.push(format!("{prefix}.{name}"), p.value.shape(), data)?;
        }
        Ok(())
    }

    /// Copies the stored tensors `prefix.*` into `net`; every parameter of
    /// the network must be present with a matching shape.
    pub fn restore<S: Real>(&self, prefix: &str, net: &mut Sequential<S>) -> Result<(), NnError> {
        for (name, p) in net.named_params_mut() {
            let full = format!("{prefix}.{name}");
            let (shape, data) = self.get(&full).ok_or_else(|| NnError::InvalidSpec(format!("weights missing tensor {full}")))?;
            if shape != p.value.shape() {
                return Err(NnError::InvalidSpec(format!(
                    "tensor {full}: stored shape {shape:?}, network expects {:?}",
                    p.value.shape()
                )));
            }
            p.value.data_mut().iter_mut().zip(data).for_each(|(v, d)| *v = S::lit(*d as f64));
        }
        Ok(())
    }

    pub fn tensor<S: Real>(&self, name: &str) -> Option<Tensor<S>> {
        let (shape, data) = self.get(name)?;
        Tensor::new(shape.to_vec(), data.iter().map(|v| S::lit(*v as f64)).collect()).ok()
    }

    pub fn encode(&self) -> Vec<u8> {
        let header = Header {
            tensors: self.entries.iter().map(|(name, shape, _)| TensorEntry { name: name.clone(), shape: shape.clone() }).collect(),
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let payload: usize = self.entries.iter().map(|(_, _, d)| d.len() * 4).sum();
        let mut out = Vec::with_capacity(9 + json.len() + payload);
        out.extend_from_slice(WEIGHTS_MAGIC);
        out.push(WEIGHTS_VERSION);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, _, data) in &self.entries {
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, String> {
        if bytes.len() < 9 || &bytes[..4] != WEIGHTS_MAGIC {
            return Err("bad magic (expected MXBW)".into());
        }
        if bytes[4] != WEIGHTS_VERSION {
            return Err(format!("unsupported format version {}", bytes[4]));
        }
        let hlen = u32::from_le_bytes([bytes[5], bytes[6], bytes[7], bytes[8]]) as usize;
        let body = &bytes[9..];
        if body.len() < hlen {
            return Err("truncated header".into());
        }
        let header: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| format!("bad header: {e}"))?;
        let payload = &body[hlen..];
        let expected: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>() * 4).sum();
        if payload.len() != expected {
            return Err(format!("payload has {} bytes, header describes {expected}", payload.len()));
        }
        let mut seen = HashSet::new();
        let mut entries = Vec::with_capacity(header.tensors.len());
        let mut floats = payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
        for t in header.tensors {
            if !seen.insert(t.name.clone()) {
                return Err(format!("duplicate tensor name {}", t.name));
            }
            let n = t.shape.iter().product();
            entries.push((t.name, t.shape, floats.by_ref().take(n).collect()));
        }
        Ok(Self { entries, meta: header.meta })
    }

    /// Hex SHA-256 of the encoded file.
    pub fn digest(&self) -> String {
        Sha256::digest(self.encode()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn save_weights(path: &Path, w: &WeightsFile) -> Result<(), NnError> {
    fs::write(path, w.encode()).map_err(|source| NnError::Io { path: path.display().to_string(), source })
}

pub fn load_weights(path: &Path) -> Result<WeightsFile, NnError> {
    let bytes = fs::read(path).map_err(|source| NnError::Io { path: path.display().to_string(), source })?;
    WeightsFile::decode(&bytes).map_err(|reason| NnError::Format { path: path.display().to_string(), reason })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> WeightsFile {
        let mut w = WeightsFile::new();
        w.push("a.weight", &[2, 3], vec![1.0, -2.5, f32::MIN_POSITIVE, 3.25, 0.0, -0.0]).unwrap();
        w.push("a.bias", &[2], vec![0.1, 0.2]).unwrap();
        w.meta = serde_json::json!({"variant": "cnn0"});
        w
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let w = sample();
        let back = WeightsFile::decode(&w.encode()).unwrap();
        assert_eq!(back.encode(), w.encode());
        assert_eq!(back.get("a.weight").unwrap().1[5].to_bits(), (-0.0f32).to_bits());
    }

    #[test]
    fn corrupt_files_rejected() {
        let bytes = sample().encode();
        assert!(WeightsFile::decode(&bytes[..bytes.len() - 2]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(WeightsFile::decode(&bad).is_err());
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(WeightsFile::decode(&v2).unwrap_err().contains("version"));
        let mut extra = bytes;
        extra.extend_from_slice(&[0; 4]);
        assert!(WeightsFile::decode(&extra).is_err());
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut w = sample();
        assert!(w.push("a.bias", &[1], vec![0.0]).is_err());
    }
}
