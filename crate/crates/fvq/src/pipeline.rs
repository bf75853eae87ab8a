//! End-to-end experiments: ingest, fit, encode, normalize, classify, report.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use fvq_core::baselines::{
    average_encode, bilinear_encode, concat_set, fit_gmm_traced, fit_vlad, gmm_fv_encode, vlad_encode, GmmModel,
    VladCodebook,
};
use fvq_core::eval::{evaluate, train_svm, Metrics, SvmConfig};
use fvq_core::fvcodec::{estimate_fim, extract_fv, pca_compress, power_l2_normalize};
use fvq_core::vae::{self, AdaDeltaConfig};
use fvq_core::{
    generate_synthetic, Corpus, DescriptorSet, FimDiagonal, FisherVector, LossBreakdown, Matrix, Split,
    SyntheticSpec, VaeConfig, VaeParams,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::formats::corpus::load_corpus;
use crate::tables;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Fvvae,
    Gmmfv,
    Vlad,
    Bp,
    Ave,
    Concat,
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Fvvae => "fvvae",
            Self::Gmmfv => "gmmfv",
            Self::Vlad => "vlad",
            Self::Bp => "bp",
            Self::Ave => "ave",
            Self::Concat => "concat",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricName {
    Top1,
    Top3,
    Map,
}

impl MetricName {
    pub const ALL: [Self; 3] = [Self::Top1, Self::Top3, Self::Map];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Top1 => "top1",
            Self::Top3 => "top3",
            Self::Map => "map",
        }
    }

    pub fn pick(self, m: &Metrics) -> f64 {
        match self {
            Self::Top1 => m.top1,
            Self::Top3 => m.top3,
            Self::Map => m.map,
        }
    }
}

/// Where the train and test corpora come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataConfig {
    Synthetic { spec: SyntheticSpec },
    Files { train: PathBuf, test: PathBuf },
}

fn default_d_z() -> usize {
    255
}
fn one() -> f64 {
    1.0
}
fn default_lambda3() -> f64 {
    VaeConfig::new(1, 1).lambda3
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
fn yes() -> bool {
    true
}
fn all_metrics() -> Vec<MetricName> {
    MetricName::ALL.to_vec()
}

/// VAE settings; the descriptor width, class count and seed come from the
/// corpus and the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeSection {
    #[serde(default)]
    pub hidden: Option<usize>,
    #[serde(default = "default_d_z")]
    pub d_z: usize,
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
    pub optimizer: AdaDeltaConfig,
}

impl Default for VaeSection {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl VaeSection {
    pub fn to_config(&self, d: usize, num_classes: usize, seed: u64) -> VaeConfig {
        VaeConfig {
            d,
            hidden: self.hidden,
            d_z: self.d_z,
            num_classes,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            lambda3: self.lambda3,
            dropout_rate: self.dropout_rate,
            batch_size: self.batch_size,
            max_batches: self.max_batches,
            seed,
            optimizer: self.optimizer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmSection {
    pub components: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VladSection {
    pub centers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub encoder: EncoderKind,
    pub data: DataConfig,
    /// L2-normalize every descriptor before fitting or encoding.
    #[serde(default = "yes")]
    pub l2_normalize: bool,
    #[serde(default)]
    pub vae: Option<VaeSection>,
    #[serde(default)]
    pub gmm: Option<GmmSection>,
    #[serde(default)]
    pub vlad: Option<VladSection>,
    #[serde(default)]
    pub svm: SvmConfig,
    /// Project normalized encodings onto this many principal directions.
    #[serde(default)]
    pub pca_dim: Option<usize>,
    #[serde(default = "all_metrics")]
    pub metrics: Vec<MetricName>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        match self.encoder {
            EncoderKind::Fvvae if self.vae.is_none() => bail!("encoder fvvae needs a \"vae\" block"),
            EncoderKind::Gmmfv if self.gmm.is_none() => bail!("encoder gmmfv needs a \"gmm\" block"),
            EncoderKind::Vlad if self.vlad.is_none() => bail!("encoder vlad needs a \"vlad\" block"),
            _ => {}
        }
        if self.metrics.is_empty() {
            bail!("no metrics requested");
        }
        if self.pca_dim == Some(0) {
            bail!("pca_dim must be positive");
        }
        Ok(())
    }
}

/// Stage-specific seeds, so that swapping encoders never shifts another
/// stage's random stream.
pub fn stage_seed(seed: u64, stage: Stage) -> u64 {
    seed.wrapping_add(stage as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Fit,
    Fim,
    Encode,
    Normalize,
    Pca,
    Svm,
    Evaluate,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Config => "config",
            Self::Ingest => "ingest",
            Self::Fit => "fit",
            Self::Fim => "fim",
            Self::Encode => "encode",
            Self::Normalize => "normalize",
            Self::Pca => "pca",
            Self::Svm => "svm",
            Self::Evaluate => "evaluate",
            Self::Write => "write",
        };
        write!(f, "stage {s}")
    }
}

/// A fitted set encoder.
#[derive(Debug, Clone)]
pub enum Encoder {
    Fvvae { params: VaeParams, fim: FimDiagonal },
    Gmmfv(GmmModel),
    Vlad(VladCodebook),
    Bp,
    Ave,
    Concat,
}

impl Encoder {
    pub fn kind(&self) -> EncoderKind {
        match self {
            Self::Fvvae { .. } => EncoderKind::Fvvae,
            Self::Gmmfv(_) => EncoderKind::Gmmfv,
            Self::Vlad(_) => EncoderKind::Vlad,
            Self::Bp => EncoderKind::Bp,
            Self::Ave => EncoderKind::Ave,
            Self::Concat => EncoderKind::Concat,
        }
    }

    pub fn encode(&self, set: &DescriptorSet) -> fvq_core::Result<FisherVector> {
        match self {
            Self::Fvvae { params, fim } => extract_fv(params, fim, set),
            Self::Gmmfv(model) => gmm_fv_encode(model, set),
            Self::Vlad(codebook) => vlad_encode(codebook, set).map(FisherVector::raw),
            Self::Bp => Ok(FisherVector::raw(bilinear_encode(set))),
            Self::Ave => Ok(FisherVector::raw(average_encode(set))),
            Self::Concat => Ok(FisherVector::raw(concat_set(set))),
        }
    }

    pub fn d_z(&self) -> Option<usize> {
        match self {
            Self::Fvvae { params, .. } => Some(params.d_z()),
            _ => None,
        }
    }
}

/// Encodes every set in corpus order; sets are processed in parallel.
pub fn encode_corpus(encoder: &Encoder, corpus: &Corpus) -> fvq_core::Result<Vec<FisherVector>> {
    corpus.sets().par_iter().map(|s| encoder.encode(s)).collect()
}

/// Applies signed square root and L2 normalization to every encoding.
pub fn normalize_all(fvs: &[FisherVector]) -> fvq_core::Result<Vec<FisherVector>> {
    fvs.par_iter().map(power_l2_normalize).collect()
}

/// Stacks encodings into an `N × M` matrix.
pub fn stack(fvs: &[FisherVector]) -> fvq_core::Result<Matrix> {
    let rows: Vec<&[f64]> = fvs.iter().map(|f| f.values.as_slice()).collect();
    Matrix::from_rows(&rows)
}

pub fn ingest(corpus: Corpus, l2_normalize: bool) -> Corpus {
    if l2_normalize {
        corpus.l2_normalized()
    } else {
        corpus
    }
}

pub fn load_data(cfg: &DataConfig) -> Result<(Corpus, Corpus)> {
    match cfg {
        DataConfig::Synthetic { spec } => Ok(generate_synthetic(spec)?),
        DataConfig::Files { train, test } => Ok((
            load_corpus(train, Split::Train).with_context(|| format!("loading {}", train.display()))?,
            load_corpus(test, Split::Test).with_context(|| format!("loading {}", test.display()))?,
        )),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub ingest_s: f64,
    pub fit_s: f64,
    pub encode_s: f64,
    pub svm_s: f64,
    pub evaluate_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub encoder: EncoderKind,
    pub config: ExperimentConfig,
    pub train_sets: usize,
    pub test_sets: usize,
    /// Length of a single encoding before any PCA.
    pub fv_dim: usize,
    /// Width of the features the classifier saw.
    pub classifier_dim: usize,
    pub metrics: BTreeMap<String, f64>,
    pub timings: Timings,
}

impl Report {
    /// The report as JSON with the timing block removed.
    pub fn without_timings(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("timings");
        }
        v
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: Report,
    pub all_metrics: Metrics,
    /// Per-batch VAE losses, for `fvvae`.
    pub vae_trace: Option<Vec<LossBreakdown>>,
    /// EM log-likelihood per iteration, for `gmmfv`.
    pub em_trace: Option<Vec<f64>>,
}

struct Fitted {
    encoder: Encoder,
    vae_trace: Option<Vec<LossBreakdown>>,
    em_trace: Option<Vec<f64>>,
}

fn fit_encoder(cfg: &ExperimentConfig, train: &Corpus) -> Result<Fitted> {
    let mut fitted = Fitted {
        encoder: Encoder::Ave,
        vae_trace: None,
        em_trace: None,
    };
    fitted.encoder = match cfg.encoder {
        EncoderKind::Fvvae => {
            let section = cfg.vae.as_ref().expect("validated");
            let vcfg = section.to_config(train.dim(), train.num_classes() as usize, stage_seed(cfg.seed, Stage::Fit));
            let out = vae::train(train, &vcfg).context(Stage::Fit)?;
            let fim = estimate_fim(&out.params, train).context(Stage::Fim)?;
            fitted.vae_trace = Some(out.trace);
            Encoder::Fvvae { params: out.params, fim }
        }
        EncoderKind::Gmmfv => {
            let k = cfg.gmm.as_ref().expect("validated").components;
            let fit = fit_gmm_traced(&train.stacked(), k, stage_seed(cfg.seed, Stage::Fit)).context(Stage::Fit)?;
            fitted.em_trace = Some(fit.log_likelihoods);
            Encoder::Gmmfv(fit.model)
        }
        EncoderKind::Vlad => {
            let k = cfg.vlad.as_ref().expect("validated").centers;
            Encoder::Vlad(fit_vlad(&train.stacked(), k, stage_seed(cfg.seed, Stage::Fit)).context(Stage::Fit)?)
        }
        EncoderKind::Bp => Encoder::Bp,
        EncoderKind::Ave => Encoder::Ave,
        EncoderKind::Concat => Encoder::Concat,
    };
    Ok(fitted)
}

fn encode_normalized(encoder: &Encoder, corpus: &Corpus) -> Result<Matrix> {
    let raw = encode_corpus(encoder, corpus).context(Stage::Encode)?;
    let normalized = normalize_all(&raw).context(Stage::Normalize)?;
    stack(&normalized).context(Stage::Encode)
}

/// Runs one experiment and, if `output_dir` is set, writes its artifacts.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate().context(Stage::Config)?;
    let mut timings = Timings::default();

    let clock = Instant::now();
    let (train, test) = load_data(&cfg.data).context(Stage::Ingest)?;
    if train.dim() != test.dim() {
        return Err(anyhow::anyhow!(
            "train descriptors have width {}, test descriptors {}",
            train.dim(),
            test.dim()
        ))
        .context(Stage::Ingest);
    }
    let num_classes = train.num_classes().max(test.num_classes()) as usize;
    let train = ingest(train, cfg.l2_normalize);
    let test = ingest(test, cfg.l2_normalize);
    timings.ingest_s = clock.elapsed().as_secs_f64();
    log::info!("ingested {} train and {} test sets of width {}", train.len(), test.len(), train.dim());

    let clock = Instant::now();
    let fitted = fit_encoder(cfg, &train)?;
    timings.fit_s = clock.elapsed().as_secs_f64();
    log::info!("fitted {} in {:.2}s", cfg.encoder, timings.fit_s);

    let clock = Instant::now();
    let mut train_x = encode_normalized(&fitted.encoder, &train)?;
    let mut test_x = encode_normalized(&fitted.encoder, &test)?;
    let fv_dim = train_x.cols();
    if let Some(k) = cfg.pca_dim {
        let (basis, projected) = pca_compress(&train_x, k).context(Stage::Pca)?;
        let rows: Vec<Vec<f64>> = test_x.iter_rows().map(|r| basis.project(r)).collect();
        test_x = Matrix::from_rows(&rows).context(Stage::Pca)?;
        train_x = projected;
    }
    timings.encode_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let svm_cfg = SvmConfig {
        seed: stage_seed(cfg.seed, Stage::Svm),
        ..cfg.svm.clone()
    };
    let model = train_svm(&train_x, &train.labels(), num_classes, &svm_cfg).context(Stage::Svm)?;
    timings.svm_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let all_metrics = evaluate(&model, &test_x, &test.labels()).context(Stage::Evaluate)?;
    timings.evaluate_s = clock.elapsed().as_secs_f64();

    let mut wanted = cfg.metrics.clone();
    wanted.sort();
    wanted.dedup();
    let metrics = wanted.iter().map(|m| (m.as_str().to_owned(), m.pick(&all_metrics))).collect();
    let out = RunOutput {
        report: Report {
            encoder: cfg.encoder,
            config: cfg.clone(),
            train_sets: train.len(),
            test_sets: test.len(),
            fv_dim,
            classifier_dim: train_x.cols(),
            metrics,
            timings,
        },
        all_metrics,
        vae_trace: fitted.vae_trace,
        em_trace: fitted.em_trace,
    };
    if let Some(dir) = &cfg.output_dir {
        write_outputs(dir, &out).context(Stage::Write)?;
    }
    Ok(out)
}

/// Writes `report.json`, `metrics.csv` and any training traces into `dir`.
pub fn write_outputs(dir: &Path, out: &RunOutput) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut json = serde_json::to_vec_pretty(&out.report)?;
    json.push(b'\n');
    std::fs::write(dir.join("report.json"), json)?;
    tables::write_metrics(&dir.join("metrics.csv"), &out.report.metrics)?;
    if let Some(trace) = &out.vae_trace {
        tables::write_vae_trace(&dir.join("vae_trace.csv"), trace)?;
    }
    if let Some(trace) = &out.em_trace {
        tables::write_em_trace(&dir.join("em_trace.csv"), trace)?;
    }
    Ok(())
}

/// One row of a λ₃ sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda3: f64,
    pub top1: f64,
    pub top3: f64,
    pub map: f64,
}

/// Reruns an `fvvae` experiment once per λ₃ value. Nothing is written to
/// `output_dir` during the sweep.
pub fn sweep_lambda3(cfg: &ExperimentConfig, grid: &[f64]) -> Result<Vec<SweepRow>> {
    if cfg.encoder != EncoderKind::Fvvae {
        return Err(anyhow::anyhow!("the lambda3 sweep needs encoder fvvae")).context(Stage::Config);
    }
    if grid.is_empty() {
        return Err(anyhow::anyhow!("empty lambda3 grid")).context(Stage::Config);
    }
    grid.iter()
        .map(|&lambda3| {
            let mut run = cfg.clone();
            run.output_dir = None;
            if let Some(v) = run.vae.as_mut() {
                v.lambda3 = lambda3;
            }
            let out = run_experiment(&run).with_context(|| format!("lambda3 = {lambda3}"))?;
            let m = out.all_metrics;
            Ok(SweepRow {
                lambda3,
                top1: m.top1,
                top3: m.top3,
                map: m.map,
            })
        })
        .collect()
}
