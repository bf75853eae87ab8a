use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::dot;
use crate::Matrix;

fn default_c() -> f64 {
    100.0
}
fn default_epochs() -> usize {
    2000
}
fn default_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    #[serde(default = "default_c")]
    pub c_svm: f64,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    /// Stop once the projected-gradient spread falls below this.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c_svm: default_c(),
            max_epochs: default_epochs(),
            tol: default_tol(),
            seed: 0,
        }
    }
}

/// One-vs-all linear SVM; row `c` of `weights` scores class `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub weights: Matrix,
    pub biases: Vec<f64>,
    pub c_svm: f64,
}

impl SvmModel {
    pub fn num_classes(&self) -> usize {
        self.biases.len()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter_rows()
            .zip(&self.biases)
            .map(|(w, b)| dot(w, x) + b)
            .collect()
    }

    pub fn score_matrix(&self, features: &Matrix) -> Matrix {
        let rows: Vec<Vec<f64>> = features.iter_rows().map(|x| self.scores(x)).collect();
        Matrix::from_vec(features.rows(), self.num_classes(), rows.concat()).expect("consistent shapes")
    }
}

/// Trains one binary hinge-loss SVM per class against all others.
///
/// Each head minimizes `½(‖w‖² + b²) + C·Σ max(0, 1 − yᵢ(wᵀxᵢ + b))` by dual
/// coordinate descent, visiting samples in a seeded permutation each epoch.
pub fn train_svm(features: &Matrix, labels: &[u32], num_classes: usize, cfg: &SvmConfig) -> Result<SvmModel> {
    let n = features.rows();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    if n < 2 {
        return Err(Error::TooFewDescriptors { needed: 2, got: n });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            num_classes: num_classes as u32,
        });
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(Error::SingleClass);
    }
    if !(cfg.c_svm > 0.0 && cfg.c_svm.is_finite()) {
        return Err(Error::InvalidConfig("c_svm must be positive".into()));
    }

    let m = features.cols();
    let mut weights = Matrix::zeros(num_classes, m);
    let mut biases = vec![0.0; num_classes];
    for class in 0..num_classes {
        let y: Vec<f64> = labels
            .iter()
            .map(|&l| if l as usize == class { 1.0 } else { -1.0 })
            .collect();
        let (w, b) = binary_dual_cd(features, &y, cfg, class as u64);
        weights.row_mut(class).copy_from_slice(&w);
        biases[class] = b;
    }
    Ok(SvmModel {
        weights,
        biases,
        c_svm: cfg.c_svm,
    })
}

fn binary_dual_cd(x: &Matrix, y: &[f64], cfg: &SvmConfig, head: u64) -> (Vec<f64>, f64) {
    let n = x.rows();
    let c = cfg.c_svm;
    let mut w = vec![0.0; x.cols()];
    let mut b = 0.0;
    let mut alpha = vec![0.0; n];
    let q: Vec<f64> = x.iter_rows().map(|r| dot(r, r) + 1.0).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ head.wrapping_mul(0x9E37_79B9_7F4A_7C15));

    for _ in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
        for &i in &order {
            let xi = x.row(i);
            let g = y[i] * (dot(&w, xi) + b) - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= c {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / q[i]).clamp(0.0, c);
                let delta = (alpha[i] - old) * y[i];
                w.iter_mut().zip(xi).for_each(|(wj, xj)| *wj += delta * xj);
                b += delta;
            }
        }
        if pg_max - pg_min < cfg.tol {
            break;
        }
    }
    (w, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::evaluate;
    use rand::Rng;

    fn separable(seed: u64, n: usize) -> (Matrix, Vec<u32>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let class = (i % 2) as u32;
            let shift = if class == 0 { -2.0 } else { 2.0 };
            rows.push(vec![shift + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
            labels.push(class);
        }
        (Matrix::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn separable_training_accuracy() {
        let (x, y) = separable(1, 40);
        let model = train_svm(&x, &y, 2, &SvmConfig::default()).unwrap();
        let m = evaluate(&model, &x, &y).unwrap();
        assert_eq!(m.top1, 1.0);
    }

    #[test]
    fn duplicated_points_give_same_decision_function() {
        let (x, y) = separable(2, 30);
        let rows: Vec<&[f64]> = x.iter_rows().chain(x.iter_rows()).collect();
        let x2 = Matrix::from_rows(&rows).unwrap();
        let y2: Vec<u32> = y.iter().chain(&y).copied().collect();
        let a = train_svm(&x, &y, 2, &SvmConfig::default()).unwrap();
        let b = train_svm(&x2, &y2, 2, &SvmConfig::default()).unwrap();
        for r in x.iter_rows() {
            for (sa, sb) in a.scores(r).iter().zip(b.scores(r)) {
                assert!((sa - sb).abs() < 1e-6, "{sa} vs {sb}");
            }
        }
    }

    #[test]
    fn two_class_heads_are_mirrored() {
        let (x, y) = separable(3, 24);
        let model = train_svm(&x, &y, 2, &SvmConfig::default()).unwrap();
        for r in x.iter_rows() {
            let s = model.scores(r);
            assert!((s[0] + s[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_single_class() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        assert_eq!(train_svm(&x, &[1, 1], 2, &SvmConfig::default()), Err(Error::SingleClass));
        assert!(train_svm(&x, &[0, 2], 2, &SvmConfig::default()).is_err());
    }

    #[test]
    fn deterministic() {
        let (x, y) = separable(4, 20);
        let cfg = SvmConfig { seed: 9, ..SvmConfig::default() };
        assert_eq!(train_svm(&x, &y, 2, &cfg).unwrap(), train_svm(&x, &y, 2, &cfg).unwrap());
    }
}
