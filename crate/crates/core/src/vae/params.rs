use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adadelta::AdaDeltaConfig;
use super::LossWeights;
use crate::error::{Error, Result};

fn default_d_z() -> usize {
    255
}
fn one() -> f64 {
    1.0
}
fn default_lambda3() -> f64 {
    10.0
}
fn default_dropout() -> f64 {
    0.5
}
fn default_batch() -> usize {
    128
}
fn default_max_batches() -> usize {
    5000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeConfig {
    /// Descriptor width.
    pub d: usize,
    /// Encoder hidden width; `None` means `d`.
    #[serde(default)]
    pub hidden: Option<usize>,
    #[serde(default = "default_d_z")]
    pub d_z: usize,
    pub num_classes: usize,
    #[serde(default = "one")]
    pub lambda1: f64,
    #[serde(default = "one")]
    pub lambda2: f64,
    #[serde(default = "default_lambda3")]
    pub lambda3: f64,
    #[serde(default = "default_dropout")]
    pub dropout_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_max_batches")]
    pub max_batches: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub optimizer: AdaDeltaConfig,
}

impl VaeConfig {
    pub fn new(d: usize, num_classes: usize) -> Self {
        Self {
            d,
            hidden: None,
            d_z: default_d_z(),
            num_classes,
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: default_lambda3(),
            dropout_rate: default_dropout(),
            batch_size: default_batch(),
            max_batches: default_max_batches(),
            seed: 0,
            optimizer: AdaDeltaConfig::default(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden.unwrap_or(self.d)
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            lambda3: self.lambda3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.hidden() == 0 || self.d_z == 0 || self.num_classes == 0 {
            return Err(Error::InvalidConfig("VAE widths and class count must be at least 1".into()));
        }
        for l in [self.lambda1, self.lambda2, self.lambda3] {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::InvalidConfig("loss weights must be finite and nonnegative".into()));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig("dropout rate must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Encoder, decoder, classifier head, and shared log-variances.
///
/// Weight matrices are row-major with the input index outermost, so
/// `dec_w[k * d + j]` connects latent `k` to output `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeParams {
    d: usize,
    hidden: usize,
    d_z: usize,
    num_classes: usize,
    pub enc_w1: Vec<f64>,
    pub enc_b1: Vec<f64>,
    pub enc_w2: Vec<f64>,
    pub enc_b2: Vec<f64>,
    pub dec_w: Vec<f64>,
    pub dec_b: Vec<f64>,
    pub cls_w: Vec<f64>,
    pub cls_b: Vec<f64>,
    pub log_var_x: f64,
    pub log_var_z: Vec<f64>,
}

/// Tensor names in serialization order.
pub const TENSOR_NAMES: [&str; 10] = [
    "enc_w1", "enc_b1", "enc_w2", "enc_b2", "dec_w", "dec_b", "cls_w", "cls_b", "log_var_x", "log_var_z",
];

impl VaeParams {
    pub fn zeros(d: usize, hidden: usize, d_z: usize, num_classes: usize) -> Self {
        Self {
            d,
            hidden,
            d_z,
            num_classes,
            enc_w1: vec![0.0; d * hidden],
            enc_b1: vec![0.0; hidden],
            enc_w2: vec![0.0; hidden * d_z],
            enc_b2: vec![0.0; d_z],
            dec_w: vec![0.0; d_z * d],
            dec_b: vec![0.0; d],
            cls_w: vec![0.0; d_z * num_classes],
            cls_b: vec![0.0; num_classes],
            log_var_x: 0.0,
            log_var_z: vec![0.0; d_z],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.d, self.hidden, self.d_z, self.num_classes)
    }

    /// Scaled-uniform weights `U(±√(6/(fan_in+fan_out)))`, zero biases,
    /// unit variances.
    pub fn init<R: Rng + ?Sized>(cfg: &VaeConfig, rng: &mut R) -> Self {
        let mut p = Self::zeros(cfg.d, cfg.hidden(), cfg.d_z, cfg.num_classes);
        let mut fill = |w: &mut [f64], fan_in: usize, fan_out: usize| {
            let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
            w.iter_mut().for_each(|v| *v = rng.random_range(-limit..limit));
        };
        fill(&mut p.enc_w1, p.d, p.hidden);
        fill(&mut p.enc_w2, p.hidden, p.d_z);
        fill(&mut p.dec_w, p.d_z, p.d);
        fill(&mut p.cls_w, p.d_z, p.num_classes);
        p
    }

    /// Rebuilds parameters from tensors in [`TENSOR_NAMES`] order.
    pub fn from_tensors(d: usize, hidden: usize, d_z: usize, num_classes: usize, tensors: &[Vec<f64>]) -> Result<Self> {
        let mut p = Self::zeros(d, hidden, d_z, num_classes);
        if tensors.len() != TENSOR_NAMES.len() {
            return Err(Error::DimensionMismatch {
                expected: TENSOR_NAMES.len(),
                got: tensors.len(),
            });
        }
        for (dst, src) in p.tensors_mut().into_iter().zip(tensors) {
            if dst.len() != src.len() {
                return Err(Error::DimensionMismatch {
                    expected: dst.len(),
                    got: src.len(),
                });
            }
            dst.copy_from_slice(src);
        }
        if let Some(index) = p.tensors().iter().flat_map(|t| t.iter()).position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(p)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn d_z(&self) -> usize {
        self.d_z
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Length of the Fisher vector over the decoder parameters: `(d_z + 1)·d`.
    pub fn fv_dim(&self) -> usize {
        (self.d_z + 1) * self.d
    }

    pub fn tensors(&self) -> [&[f64]; 10] {
        [
            &self.enc_w1,
            &self.enc_b1,
            &self.enc_w2,
            &self.enc_b2,
            &self.dec_w,
            &self.dec_b,
            &self.cls_w,
            &self.cls_b,
            core::slice::from_ref(&self.log_var_x),
            &self.log_var_z,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 10] {
        [
            &mut self.enc_w1,
            &mut self.enc_b1,
            &mut self.enc_w2,
            &mut self.enc_b2,
            &mut self.dec_w,
            &mut self.dec_b,
            &mut self.cls_w,
            &mut self.cls_b,
            core::slice::from_mut(&mut self.log_var_x),
            &mut self.log_var_z,
        ]
    }

    /// Flattened copy of every tensor, in [`TENSOR_NAMES`] order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.iter().copied()).collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// `self += scale * other`, elementwise.
    pub fn add_scaled(&mut self, other: &Self, scale: f64) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            dst.iter_mut().zip(src).for_each(|(a, b)| *a += scale * b);
        }
    }
}
