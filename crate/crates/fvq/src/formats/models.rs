//! Model types stored as [`TensorFile`]s.

use std::path::Path;

use fvq_core::baselines::{GmmModel, VladCodebook};
use fvq_core::eval::SvmModel;
use fvq_core::fvcodec::PcaBasis;
use fvq_core::vae::TENSOR_NAMES;
use fvq_core::{FimDiagonal, Matrix, VaeConfig, VaeParams};
use serde_json::json;

use super::tensor::TensorFile;
use super::{FormatError, Result};

/// A trained VAE together with the configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeCheckpoint {
    pub config: VaeConfig,
    pub params: VaeParams,
    /// Number of batches the parameters have seen.
    pub batch_index: usize,
}

fn vae_shapes(p: &VaeParams) -> [Vec<usize>; 10] {
    let (d, h, z, c) = (p.d(), p.hidden(), p.d_z(), p.num_classes());
    [
        vec![d, h],
        vec![h],
        vec![h, z],
        vec![z],
        vec![z, d],
        vec![d],
        vec![z, c],
        vec![c],
        vec![],
        vec![z],
    ]
}

impl VaeCheckpoint {
    pub fn to_file(&self) -> TensorFile {
        let p = &self.params;
        let mut f = TensorFile::new(
            "vae",
            json!({
                "config": self.config,
                "d": p.d(),
                "hidden": p.hidden(),
                "d_z": p.d_z(),
                "num_classes": p.num_classes(),
                "seed": self.config.seed,
                "batch_index": self.batch_index,
            }),
        );
        for ((name, shape), values) in TENSOR_NAMES.iter().zip(vae_shapes(p)).zip(p.tensors()) {
            f.push(name, shape, values);
        }
        f
    }

    pub fn from_file(f: &TensorFile) -> Result<Self> {
        f.expect_kind("vae")?;
        let config: VaeConfig = serde_json::from_value(
            f.meta
                .get("config")
                .cloned()
                .ok_or_else(|| FormatError::Malformed("header field \"config\" missing".into()))?,
        )?;
        let (d, h, z, c) = (
            f.meta_usize("d")?,
            f.meta_usize("hidden")?,
            f.meta_usize("d_z")?,
            f.meta_usize("num_classes")?,
        );
        let shapes = vae_shapes(&VaeParams::zeros(d, h, z, c));
        let tensors = TENSOR_NAMES
            .iter()
            .zip(&shapes)
            .map(|(name, shape)| f.get(name, shape))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            params: VaeParams::from_tensors(d, h, z, c, &tensors)?,
            batch_index: f.meta_usize("batch_index")?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_file().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_file(&TensorFile::load(path)?)
    }
}

fn matrix(f: &TensorFile, name: &str, rows: usize, cols: usize) -> Result<Matrix> {
    Ok(Matrix::from_vec(rows, cols, f.get(name, &[rows, cols])?)?)
}

pub fn gmm_to_file(m: &GmmModel) -> TensorFile {
    let (k, d) = (m.num_components(), m.dim());
    let mut f = TensorFile::new("gmm", json!({ "components": k, "d": d }));
    f.push("weights", vec![k], &m.weights);
    f.push("means", vec![k, d], m.means.as_slice());
    f.push("variances", vec![k, d], m.variances.as_slice());
    f
}

pub fn gmm_from_file(f: &TensorFile) -> Result<GmmModel> {
    f.expect_kind("gmm")?;
    let (k, d) = (f.meta_usize("components")?, f.meta_usize("d")?);
    let model = GmmModel {
        weights: f.get("weights", &[k])?,
        means: matrix(f, "means", k, d)?,
        variances: matrix(f, "variances", k, d)?,
    };
    model.validate()?;
    Ok(model)
}

pub fn vlad_to_file(c: &VladCodebook) -> TensorFile {
    let (k, d) = (c.num_centers(), c.dim());
    let mut f = TensorFile::new("vlad", json!({ "centers": k, "d": d }));
    f.push("centroids", vec![k, d], c.centroids.as_slice());
    f
}

pub fn vlad_from_file(f: &TensorFile) -> Result<VladCodebook> {
    f.expect_kind("vlad")?;
    let (k, d) = (f.meta_usize("centers")?, f.meta_usize("d")?);
    Ok(VladCodebook::new(matrix(f, "centroids", k, d)?)?)
}

pub fn svm_to_file(m: &SvmModel) -> TensorFile {
    let (c, dim) = (m.num_classes(), m.dim());
    let mut f = TensorFile::new("svm", json!({ "num_classes": c, "dim": dim, "c_svm": m.c_svm }));
    f.push("weights", vec![c, dim], m.weights.as_slice());
    f.push("biases", vec![c], &m.biases);
    f
}

pub fn svm_from_file(f: &TensorFile) -> Result<SvmModel> {
    f.expect_kind("svm")?;
    let (c, dim) = (f.meta_usize("num_classes")?, f.meta_usize("dim")?);
    let c_svm = f
        .meta
        .get("c_svm")
        .and_then(serde_json::Value::as_f64)
        .ok_or_else(|| FormatError::Malformed("header field \"c_svm\" missing".into()))?;
    Ok(SvmModel {
        weights: matrix(f, "weights", c, dim)?,
        biases: f.get("biases", &[c])?,
        c_svm,
    })
}

pub fn fim_to_file(fim: &FimDiagonal) -> TensorFile {
    let m = fim.inv_sqrt.len();
    let mut f = TensorFile::new("fim", json!({ "m": m, "eps_floor": fim.eps_floor }));
    f.push("inv_sqrt", vec![m], &fim.inv_sqrt);
    f
}

pub fn fim_from_file(f: &TensorFile) -> Result<FimDiagonal> {
    f.expect_kind("fim")?;
    let m = f.meta_usize("m")?;
    let eps_floor = f
        .meta
        .get("eps_floor")
        .and_then(serde_json::Value::as_f64)
        .ok_or_else(|| FormatError::Malformed("header field \"eps_floor\" missing".into()))?;
    Ok(FimDiagonal {
        inv_sqrt: f.get("inv_sqrt", &[m])?,
        eps_floor,
    })
}

pub fn pca_to_file(b: &PcaBasis) -> TensorFile {
    let (k, m) = (b.components.rows(), b.components.cols());
    let mut f = TensorFile::new("pca", json!({ "k": k, "m": m }));
    f.push("mean", vec![m], &b.mean);
    f.push("components", vec![k, m], b.components.as_slice());
    f.push("captured", vec![k], &b.captured);
    f
}

pub fn pca_from_file(f: &TensorFile) -> Result<PcaBasis> {
    f.expect_kind("pca")?;
    let (k, m) = (f.meta_usize("k")?, f.meta_usize("m")?);
    Ok(PcaBasis {
        mean: f.get("mean", &[m])?,
        components: matrix(f, "components", k, m)?,
        captured: f.get("captured", &[k])?,
    })
}
