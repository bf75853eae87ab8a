//! File formats, experiment orchestration and CSV output for `fvq-core`.

pub mod formats;
pub mod pipeline;
pub mod tables;

pub use pipeline::{run_experiment, sweep_lambda3, EncoderKind, Encoder, ExperimentConfig, Report, RunOutput};
