//! Encoded feature matrices: `N·M` little-endian `f32` values in a raw file,
//! described by a JSON sidecar at `<path>.json`.

use std::path::{Path, PathBuf};

use fvq_core::{Matrix, NormFlags};
use serde::{Deserialize, Serialize};

use super::{put_f32s, read_file, write_file, FormatError, Reader, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub encoder: String,
    /// Encoding length.
    pub m: usize,
    /// Descriptor width the encoder consumed.
    pub d: usize,
    /// Latent width, for VAE encodings.
    pub d_z: Option<usize>,
    pub num_classes: u32,
    pub flags: NormFlags,
    pub set_ids: Vec<String>,
    pub labels: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub meta: FeatureMeta,
    /// One encoding per row.
    pub features: Matrix,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

impl FeatureSet {
    pub fn validate(&self) -> Result<()> {
        let n = self.features.rows();
        if self.features.cols() != self.meta.m || self.meta.set_ids.len() != n || self.meta.labels.len() != n {
            return Err(FormatError::Malformed(format!(
                "feature matrix is {}×{}, sidecar describes {} sets of width {}",
                n,
                self.features.cols(),
                self.meta.set_ids.len(),
                self.meta.m
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let as_f32: Vec<f32> = self.features.as_slice().iter().map(|&v| v as f32).collect();
        let mut bytes = Vec::with_capacity(as_f32.len() * 4);
        put_f32s(&mut bytes, &as_f32);
        write_file(path, &bytes)?;
        let mut json = serde_json::to_vec_pretty(&self.meta)?;
        json.push(b'\n');
        write_file(&sidecar_path(path), &json)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let meta: FeatureMeta = serde_json::from_slice(&read_file(&sidecar_path(path))?)?;
        let bytes = read_file(path)?;
        let n = meta.set_ids.len();
        let mut r = Reader::new(&bytes);
        let values = r.f32s(n * meta.m, "feature matrix")?;
        if r.remaining() > 0 {
            return Err(FormatError::TrailingBytes(r.remaining()));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(fvq_core::Error::NonFinite { index }.into());
        }
        let features = Matrix::from_vec(n, meta.m, values.into_iter().map(f64::from).collect())?;
        let out = Self { meta, features };
        out.validate()?;
        Ok(out)
    }
}
