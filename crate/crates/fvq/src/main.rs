use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use fvq_core::baselines::{fit_gmm_traced, fit_vlad};
use fvq_core::eval::{evaluate_scores, train_svm, SvmConfig};
use fvq_core::fvcodec::{attention_values, estimate_fim_with_floor, frame_attention, pca_compress, FIM_EPS_FLOOR};
use fvq_core::{generate_synthetic, vae, Corpus, Matrix, Split, SyntheticSpec};
use fvq::formats::corpus::{load_corpus, save_corpus};
use fvq::formats::features::{FeatureMeta, FeatureSet};
use fvq::formats::models::{self, VaeCheckpoint};
use fvq::formats::tensor::TensorFile;
use fvq::pipeline::{self, Encoder, EncoderKind, ExperimentConfig, Stage, VaeSection};
use fvq::tables;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "fvq", version, about = "Fisher vector encoders for sets of local descriptors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CorpusArgs {
    /// Corpus file in FVQ1 format.
    #[arg(long)]
    corpus: PathBuf,
    /// Use descriptors as stored instead of L2-normalizing them.
    #[arg(long)]
    no_l2: bool,
}

impl CorpusArgs {
    fn load(&self, split: Split) -> Result<Corpus> {
        let c = load_corpus(&self.corpus, split)
            .with_context(|| format!("loading {}", self.corpus.display()))
            .context(Stage::Ingest)?;
        Ok(pipeline::ingest(c, !self.no_l2))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate train and test corpora from a synthetic spec.
    Gen {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Train the VAE and write a checkpoint.
    TrainVae {
        #[command(flatten)]
        input: CorpusArgs,
        /// JSON VAE settings; defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Per-batch loss CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Fit a diagonal GMM on all descriptors of a corpus.
    FitGmm {
        #[command(flatten)]
        input: CorpusArgs,
        #[arg(long)]
        components: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Per-iteration log-likelihood CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Fit a k-means codebook for VLAD.
    FitVlad {
        #[command(flatten)]
        input: CorpusArgs,
        #[arg(long)]
        centers: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the diagonal Fisher information of a trained VAE.
    Fim {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        input: CorpusArgs,
        #[arg(long, default_value_t = FIM_EPS_FLOOR)]
        eps_floor: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode every set of a corpus.
    Encode {
        #[arg(long, value_enum)]
        encoder: EncoderKind,
        /// Checkpoint, GMM or codebook file, for encoders that need one.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Fisher information file, for fvvae.
        #[arg(long)]
        fim: Option<PathBuf>,
        #[command(flatten)]
        input: CorpusArgs,
        /// Skip the signed square root and L2 normalization.
        #[arg(long)]
        raw: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one-vs-all linear SVMs on encoded features.
    SvmTrain {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = SvmConfig::default().c_svm)]
        c_svm: f64,
        #[arg(long, default_value_t = SvmConfig::default().max_epochs)]
        max_epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score encoded features and report top-1, top-3 and mAP.
    SvmEval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Metrics CSV; printed as JSON when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-set class scores CSV.
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Run a full experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Rerun an fvvae experiment over a grid of classification weights.
    SweepLambda3 {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-descriptor attention values of a trained VAE.
    Attention {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        fim: PathBuf,
        #[command(flatten)]
        input: CorpusArgs,
        #[arg(long)]
        out: PathBuf,
        /// Consecutive descriptors per frame; enables per-frame sums.
        #[arg(long, requires = "frames_out")]
        frame_size: Option<usize>,
        #[arg(long, requires = "frame_size")]
        frames_out: Option<PathBuf>,
    },
    /// Project encoded features onto their top principal directions.
    Pca {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
        /// Where to store the fitted basis.
        #[arg(long)]
        basis: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn require<'a>(path: &'a Option<PathBuf>, flag: &str, encoder: EncoderKind) -> Result<&'a Path> {
    path.as_deref()
        .with_context(|| format!("encoder {encoder} needs --{flag}"))
        .context(Stage::Config)
}

fn load_encoder(kind: EncoderKind, model: &Option<PathBuf>, fim: &Option<PathBuf>) -> Result<Encoder> {
    Ok(match kind {
        EncoderKind::Fvvae => {
            let ck = VaeCheckpoint::load(require(model, "model", kind)?).context(Stage::Ingest)?;
            let fim = models::fim_from_file(&TensorFile::load(require(fim, "fim", kind)?)?).context(Stage::Ingest)?;
            Encoder::Fvvae { params: ck.params, fim }
        }
        EncoderKind::Gmmfv => {
            Encoder::Gmmfv(models::gmm_from_file(&TensorFile::load(require(model, "model", kind)?)?).context(Stage::Ingest)?)
        }
        EncoderKind::Vlad => {
            Encoder::Vlad(models::vlad_from_file(&TensorFile::load(require(model, "model", kind)?)?).context(Stage::Ingest)?)
        }
        EncoderKind::Bp => Encoder::Bp,
        EncoderKind::Ave => Encoder::Ave,
        EncoderKind::Concat => Encoder::Concat,
    })
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Gen { spec, train, test } => {
            let spec: SyntheticSpec = read_json(&spec).context(Stage::Config)?;
            let (tr, te) = generate_synthetic(&spec).context(Stage::Ingest)?;
            save_corpus(&tr, &train).context(Stage::Write)?;
            save_corpus(&te, &test).context(Stage::Write)?;
        }
        Command::TrainVae {
            input,
            config,
            seed,
            out,
            trace,
        } => {
            let corpus = input.load(Split::Train)?;
            let section: VaeSection = match config {
                Some(p) => read_json(&p).context(Stage::Config)?,
                None => VaeSection::default(),
            };
            let cfg = section.to_config(corpus.dim(), corpus.num_classes() as usize, seed);
            let trained = vae::train(&corpus, &cfg).context(Stage::Fit)?;
            let ck = VaeCheckpoint {
                batch_index: trained.trace.len(),
                config: cfg,
                params: trained.params,
            };
            ck.save(&out).context(Stage::Write)?;
            if let Some(p) = trace {
                tables::write_vae_trace(&p, &trained.trace).context(Stage::Write)?;
            }
        }
        Command::FitGmm {
            input,
            components,
            seed,
            out,
            trace,
        } => {
            let corpus = input.load(Split::Train)?;
            let fit = fit_gmm_traced(&corpus.stacked(), components, seed).context(Stage::Fit)?;
            models::gmm_to_file(&fit.model).save(&out).context(Stage::Write)?;
            if let Some(p) = trace {
                tables::write_em_trace(&p, &fit.log_likelihoods).context(Stage::Write)?;
            }
        }
        Command::FitVlad {
            input,
            centers,
            seed,
            out,
        } => {
            let corpus = input.load(Split::Train)?;
            let codebook = fit_vlad(&corpus.stacked(), centers, seed).context(Stage::Fit)?;
            models::vlad_to_file(&codebook).save(&out).context(Stage::Write)?;
        }
        Command::Fim {
            model,
            input,
            eps_floor,
            out,
        } => {
            let ck = VaeCheckpoint::load(&model).context(Stage::Ingest)?;
            let corpus = input.load(Split::Train)?;
            let fim = estimate_fim_with_floor(&ck.params, &corpus, eps_floor).context(Stage::Fim)?;
            models::fim_to_file(&fim).save(&out).context(Stage::Write)?;
        }
        Command::Encode {
            encoder,
            model,
            fim,
            input,
            raw,
            out,
        } => {
            let enc = load_encoder(encoder, &model, &fim)?;
            let corpus = input.load(Split::Test)?;
            let mut fvs = pipeline::encode_corpus(&enc, &corpus).context(Stage::Encode)?;
            if !raw {
                fvs = pipeline::normalize_all(&fvs).context(Stage::Normalize)?;
            }
            let features = pipeline::stack(&fvs).context(Stage::Encode)?;
            let set = FeatureSet {
                meta: FeatureMeta {
                    encoder: encoder.to_string(),
                    m: features.cols(),
                    d: corpus.dim(),
                    d_z: enc.d_z(),
                    num_classes: corpus.num_classes(),
                    flags: fvs.first().map(|f| f.flags).unwrap_or_default(),
                    set_ids: corpus.sets().iter().map(|s| s.set_id().to_owned()).collect(),
                    labels: corpus.labels(),
                },
                features,
            };
            set.save(&out).context(Stage::Write)?;
        }
        Command::SvmTrain {
            features,
            c_svm,
            max_epochs,
            seed,
            out,
        } => {
            let set = FeatureSet::load(&features).context(Stage::Ingest)?;
            let cfg = SvmConfig {
                c_svm,
                max_epochs,
                seed,
                ..SvmConfig::default()
            };
            let model = train_svm(&set.features, &set.meta.labels, set.meta.num_classes as usize, &cfg)
                .context(Stage::Svm)?;
            models::svm_to_file(&model).save(&out).context(Stage::Write)?;
        }
        Command::SvmEval {
            model,
            features,
            out,
            scores,
        } => {
            let svm = models::svm_from_file(&TensorFile::load(&model)?).context(Stage::Ingest)?;
            let set = FeatureSet::load(&features).context(Stage::Ingest)?;
            if set.features.cols() != svm.dim() {
                return Err(anyhow::anyhow!(
                    "features have width {}, model expects {}",
                    set.features.cols(),
                    svm.dim()
                ))
                .context(Stage::Evaluate);
            }
            let score_matrix = svm.score_matrix(&set.features);
            let m = evaluate_scores(&score_matrix, &set.meta.labels).context(Stage::Evaluate)?;
            let metrics = [("map", m.map), ("top1", m.top1), ("top3", m.top3)]
                .into_iter()
                .map(|(k, v)| (k.to_owned(), v))
                .collect();
            match out {
                Some(p) => tables::write_metrics(&p, &metrics).context(Stage::Write)?,
                None => println!("{}", serde_json::to_string_pretty(&metrics)?),
            }
            if let Some(p) = scores {
                write_scores(&p, &set, &score_matrix).context(Stage::Write)?;
            }
        }
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config).context(Stage::Config)?;
            let out = pipeline::run_experiment(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&out.report.metrics)?);
        }
        Command::SweepLambda3 { config, grid, out } => {
            let cfg = ExperimentConfig::load(&config).context(Stage::Config)?;
            let rows = pipeline::sweep_lambda3(&cfg, &grid)?;
            tables::write_rows(&out, rows).context(Stage::Write)?;
        }
        Command::Attention {
            model,
            fim,
            input,
            out,
            frame_size,
            frames_out,
        } => {
            let enc = load_encoder(EncoderKind::Fvvae, &Some(model), &Some(fim))?;
            let Encoder::Fvvae { params, fim } = enc else { unreachable!() };
            let corpus = input.load(Split::Test)?;
            let mut rows = Vec::new();
            let mut frames = Vec::new();
            for set in corpus.sets() {
                let values = attention_values(&params, &fim, set).context(Stage::Encode)?;
                if let Some(size) = frame_size {
                    let sums = frame_attention(&values, size).context(Stage::Encode)?;
                    frames.extend(sums.into_iter().enumerate().map(|(frame_index, value)| FrameRow {
                        set_id: set.set_id().to_owned(),
                        frame_index,
                        value,
                    }));
                }
                rows.extend(values.into_iter().enumerate().map(|(descriptor_index, value)| AttentionRow {
                    set_id: set.set_id().to_owned(),
                    descriptor_index,
                    value,
                }));
            }
            tables::write_rows(&out, rows).context(Stage::Write)?;
            if let Some(p) = frames_out {
                tables::write_rows(&p, frames).context(Stage::Write)?;
            }
        }
        Command::Pca {
            features,
            k,
            out,
            basis,
        } => {
            let set = FeatureSet::load(&features).context(Stage::Ingest)?;
            let (b, projected) = pca_compress(&set.features, k).context(Stage::Pca)?;
            let compressed = FeatureSet {
                meta: FeatureMeta {
                    m: k,
                    ..set.meta
                },
                features: projected,
            };
            compressed.save(&out).context(Stage::Write)?;
            if let Some(p) = basis {
                models::pca_to_file(&b).save(&p).context(Stage::Write)?;
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct AttentionRow {
    set_id: String,
    descriptor_index: usize,
    value: f64,
}

#[derive(Serialize)]
struct FrameRow {
    set_id: String,
    frame_index: usize,
    value: f64,
}

fn write_scores(path: &Path, set: &FeatureSet, scores: &Matrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["set_id".to_owned(), "label".to_owned()];
    header.extend((0..scores.cols()).map(|c| format!("class_{c}")));
    w.write_record(&header)?;
    for (i, row) in scores.iter_rows().enumerate() {
        let mut rec = vec![set.meta.set_ids[i].clone(), set.meta.labels[i].to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
