//! Classical quantizers used for comparison.

mod gmm;
mod kmeans;
mod pooling;

pub use gmm::{fit_gmm, fit_gmm_traced, gmm_fv_encode, responsibilities, GmmFit, GmmModel};
pub use kmeans::{fit_vlad, kmeans, kmeans_plus_plus, vlad_encode, KMeansFit, VladCodebook};
pub use pooling::{average_encode, bilinear_encode, concat_encode, concat_set};

/// Upper bound on EM / Lloyd iterations.
pub const MAX_ITERATIONS: usize = 200;
