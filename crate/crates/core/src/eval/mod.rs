//! Linear classification and ranking metrics.

mod metrics;
mod svm;

pub use metrics::{average_precision, evaluate, evaluate_scores, Metrics};
pub use svm::{train_svm, SvmConfig, SvmModel};
