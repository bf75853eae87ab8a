use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kmeans::kmeans_plus_plus;
use super::MAX_ITERATIONS;
use crate::descriptors::DescriptorSet;
use crate::error::{Error, Result};
use crate::fvcodec::{FisherVector, NormFlags};
use crate::math::{log_sum_exp, nearest, LN_2PI};
use crate::Matrix;

/// Relative log-likelihood improvement below which EM stops.
pub const EM_TOLERANCE: f64 = 1e-6;

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Matrix,
    pub variances: Matrix,
}

impl GmmModel {
    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }

    /// `2·K·d`: mean and variance gradients per component.
    pub fn encoding_dim(&self) -> usize {
        2 * self.num_components() * self.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 {
            return Err(Error::Empty("mixture"));
        }
        if self.means.rows() != k || self.variances.rows() != k || self.variances.cols() != self.means.cols() {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: self.means.rows(),
            });
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || self.weights.iter().any(|&w| w.is_nan() || w <= 0.0) {
            return Err(Error::InvalidConfig("mixture weights must be positive and sum to 1".into()));
        }
        if self.variances.as_slice().iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidConfig("variances must be positive".into()));
        }
        Ok(())
    }

    /// `log(w_k) + log N(x; μ_k, diag σ_k²)` for every component.
    fn joint_log_densities(&self, x: &[f64]) -> Vec<f64> {
        (0..self.num_components())
            .map(|k| {
                let mut lp = libm::log(self.weights[k]);
                for ((xi, mu), var) in x.iter().zip(self.means.row(k)).zip(self.variances.row(k)) {
                    let diff = xi - mu;
                    lp -= 0.5 * (LN_2PI + libm::log(*var) + diff * diff / var);
                }
                lp
            })
            .collect()
    }
}

/// Posterior responsibilities `γ(k)` of each component for `x`.
pub fn responsibilities(model: &GmmModel, x: &[f64]) -> Vec<f64> {
    let lp = model.joint_log_densities(x);
    let norm = log_sum_exp(&lp);
    lp.iter().map(|l| libm::exp(l - norm)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Total log-likelihood of the data before each M-step, plus the final one.
    pub log_likelihoods: Vec<f64>,
}

pub fn fit_gmm(data: &Matrix, k: usize, seed: u64) -> Result<GmmModel> {
    fit_gmm_traced(data, k, seed).map(|f| f.model)
}

/// k-means++ seeding, one hard assignment to initialize, then EM until the
/// relative log-likelihood gain drops below [`EM_TOLERANCE`] or
/// [`MAX_ITERATIONS`] M-steps have run. Variances are floored at `1e-6`
/// times the mean per-dimension variance of the data.
pub fn fit_gmm_traced(data: &Matrix, k: usize, seed: u64) -> Result<GmmFit> {
    let (n, d) = (data.rows(), data.cols());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds = kmeans_plus_plus(data, k, &mut rng)?;

    let mut global_mean = vec![0.0; d];
    for x in data.iter_rows() {
        global_mean.iter_mut().zip(x).for_each(|(m, v)| *m += v / n as f64);
    }
    let mut global_var = vec![0.0; d];
    for x in data.iter_rows() {
        for ((g, v), m) in global_var.iter_mut().zip(x).zip(&global_mean) {
            *g += (v - m) * (v - m) / n as f64;
        }
    }
    let floor = (1e-6 * global_var.iter().sum::<f64>() / d as f64).max(f64::MIN_POSITIVE);

    // hard assignment to the seeds gives the starting mixture
    let mut resp = Matrix::zeros(n, k);
    for (i, x) in data.iter_rows().enumerate() {
        resp.set(i, nearest(x, &seeds).0, 1.0);
    }
    let mut model = GmmModel {
        weights: vec![1.0 / k as f64; k],
        means: seeds,
        variances: Matrix::from_vec(k, d, (0..k).flat_map(|_| global_var.iter().map(|v| v.max(floor))).collect())?,
    };
    m_step(data, &resp, floor, &mut model);

    let mut log_likelihoods = Vec::new();
    for iter in 0..=MAX_ITERATIONS {
        let mut total = 0.0;
        for (i, x) in data.iter_rows().enumerate() {
            let lp = model.joint_log_densities(x);
            let norm = log_sum_exp(&lp);
            total += norm;
            for (r, l) in resp.row_mut(i).iter_mut().zip(&lp) {
                *r = libm::exp(l - norm);
            }
        }
        let converged = log_likelihoods
            .last()
            .is_some_and(|&prev: &f64| total - prev < EM_TOLERANCE * prev.abs());
        log_likelihoods.push(total);
        if converged || iter == MAX_ITERATIONS {
            break;
        }
        m_step(data, &resp, floor, &mut model);
    }
    Ok(GmmFit {
        model,
        log_likelihoods,
    })
}

fn m_step(data: &Matrix, resp: &Matrix, floor: f64, model: &mut GmmModel) {
    let (n, d) = (data.rows(), data.cols());
    let k = model.num_components();
    for c in 0..k {
        let nk: f64 = (0..n).map(|i| resp.get(i, c)).sum();
        if nk < 1e-10 {
            // starved component: keep its Gaussian, shrink its weight
            model.weights[c] = 1e-10 / n as f64;
            continue;
        }
        let mut mean = vec![0.0; d];
        for (i, x) in data.iter_rows().enumerate() {
            let r = resp.get(i, c);
            mean.iter_mut().zip(x).for_each(|(m, v)| *m += r * v);
        }
        mean.iter_mut().for_each(|m| *m /= nk);
        let mut var = vec![0.0; d];
        for (i, x) in data.iter_rows().enumerate() {
            let r = resp.get(i, c);
            for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
                *s += r * (v - m) * (v - m);
            }
        }
        for (dst, s) in model.variances.row_mut(c).iter_mut().zip(&var) {
            *dst = (s / nk).max(floor);
        }
        model.means.row_mut(c).copy_from_slice(&mean);
        model.weights[c] = nk / n as f64;
    }
    let total: f64 = model.weights.iter().sum();
    model.weights.iter_mut().for_each(|w| *w /= total);
}

/// Fisher vector of a set under a diagonal GMM: for each component, the
/// normalized gradients with respect to its mean then its variance, summed
/// (not averaged) over descriptors.
pub fn gmm_fv_encode(model: &GmmModel, set: &DescriptorSet) -> Result<FisherVector> {
    let d = model.dim();
    if set.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: set.dim(),
        });
    }
    let mut out = vec![0.0; model.encoding_dim()];
    for x in set.rows_f64() {
        let gamma = responsibilities(model, &x);
        for (c, &g) in gamma.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let w = model.weights[c];
            let mean_scale = g / libm::sqrt(w);
            let var_scale = g / libm::sqrt(2.0 * w);
            let block = &mut out[2 * c * d..2 * (c + 1) * d];
            let (mean_block, var_block) = block.split_at_mut(d);
            for j in 0..d {
                let sigma = libm::sqrt(model.variances.get(c, j));
                let u = (x[j] - model.means.get(c, j)) / sigma;
                mean_block[j] += mean_scale * u;
                var_block[j] += var_scale * (u * u - 1.0);
            }
        }
    }
    Ok(FisherVector {
        values: out,
        flags: NormFlags {
            fim_applied: true,
            ..NormFlags::default()
        },
    })
}
