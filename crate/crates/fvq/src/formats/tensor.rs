//! Tensor files: magic `FVQT`, `u32` header length, a UTF-8 JSON header,
//! then each tensor listed in the header as little-endian `f32`, in header
//! order.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{put_f32s, put_u32, read_file, to_u32, write_file, FormatError, Reader, Result};

pub const MAGIC: &[u8; 4] = b"FVQT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: Value,
    tensors: Vec<TensorSpec>,
}

/// A named bundle of `f32` tensors plus free-form metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub kind: String,
    pub meta: Value,
    pub tensors: Vec<(TensorSpec, Vec<f32>)>,
}

impl TensorFile {
    pub fn new(kind: impl Into<String>, meta: Value) -> Self {
        Self {
            kind: kind.into(),
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, shape: Vec<usize>, values: &[f64]) {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        let spec = TensorSpec {
            name: name.to_owned(),
            shape,
        };
        self.tensors.push((spec, values.iter().map(|&v| v as f32).collect()));
    }

    /// The tensor called `name`, widened to `f64`, after checking its shape.
    pub fn get(&self, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
        let (spec, data) = self
            .tensors
            .iter()
            .find(|(s, _)| s.name == name)
            .ok_or_else(|| FormatError::Malformed(format!("missing tensor {name:?}")))?;
        if spec.shape != shape {
            return Err(FormatError::Malformed(format!(
                "tensor {name:?} has shape {:?}, expected {shape:?}",
                spec.shape
            )));
        }
        Ok(data.iter().map(|&v| v as f64).collect())
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(FormatError::Malformed(format!(
                "expected a {kind} file, found {}",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn meta_usize(&self, key: &str) -> Result<usize> {
        self.meta
            .get(key)
            .and_then(Value::as_u64)
            .map(|v| v as usize)
            .ok_or_else(|| FormatError::Malformed(format!("header field {key:?} missing")))
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let header = Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            tensors: self.tensors.iter().map(|(s, _)| s.clone()).collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let body: usize = self.tensors.iter().map(|(_, d)| d.len() * 4).sum();
        let mut out = Vec::with_capacity(8 + json.len() + body);
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, to_u32(json.len(), "header length")?);
        out.extend_from_slice(&json);
        for (spec, data) in &self.tensors {
            if data.len() != spec.numel() {
                return Err(FormatError::Malformed(format!("tensor {:?} size mismatch", spec.name)));
            }
            put_f32s(&mut out, data);
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4, "header")? != MAGIC {
            return Err(FormatError::BadMagic { expected: "FVQT" });
        }
        let len = r.u32("header")? as usize;
        let header: Header = serde_json::from_slice(r.take(len, "header")?)?;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for spec in header.tensors {
            let data = r.f32s(spec.numel(), "tensor data")?;
            if let Some(i) = data.iter().position(|v| !v.is_finite()) {
                return Err(fvq_core::Error::NonFinite { index: i }.into());
            }
            tensors.push((spec, data));
        }
        if r.remaining() > 0 {
            return Err(FormatError::TrailingBytes(r.remaining()));
        }
        Ok(Self {
            kind: header.kind,
            meta: header.meta,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.encode()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&read_file(path)?)
    }
}
