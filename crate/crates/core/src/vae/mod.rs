//! Variational auto-encoder over single descriptors.
//!
//! The encoder is a two-layer MLP predicting the latent mean; the decoder is
//! one ReLU layer predicting the descriptor mean. Both variances are shared
//! across descriptors and learned as log-variances. A linear softmax head on
//! the sampled latent supplies the optional classification loss.

mod adadelta;
mod params;
mod train;

pub use adadelta::{adadelta_update, AdaDeltaConfig, AdaDeltaState};
pub use params::{VaeConfig, VaeParams, TENSOR_NAMES};
pub use train::{train, TrainOutput};

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::math::{log_sum_exp, relu, LN_2PI};

/// Per-descriptor loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub rec: f64,
    pub reg: f64,
    pub cls: f64,
    /// `λ₁·rec + λ₂·reg + λ₃·cls`.
    pub total: f64,
    /// Variational lower bound, `-(rec + reg)`.
    pub lower_bound: f64,
}

impl LossBreakdown {
    pub fn fuse(rec: f64, reg: f64, cls: f64, w: &LossWeights) -> Self {
        Self {
            rec,
            reg,
            cls,
            total: w.lambda1 * rec + w.lambda2 * reg + w.lambda3 * cls,
            lower_bound: -(rec + reg),
        }
    }

    fn add_scaled(&mut self, other: &Self, scale: f64) {
        self.rec += scale * other.rec;
        self.reg += scale * other.reg;
        self.cls += scale * other.cls;
        self.total += scale * other.total;
        self.lower_bound += scale * other.lower_bound;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    pub hidden_pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub mu_z: Vec<f64>,
    pub z: Vec<f64>,
    pub recon_pre: Vec<f64>,
    pub mu_x: Vec<f64>,
    pub logits: Vec<f64>,
}

/// `out[j] = b[j] + Σ_i x[i]·w[i, j]` for a row-major `x.len() × b.len()` weight.
fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let cols = b.len();
    let mut out = b.to_vec();
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = &w[i * cols..(i + 1) * cols];
        for (o, &wij) in out.iter_mut().zip(row) {
            *o += xi * wij;
        }
    }
    out
}

/// `out[i] = Σ_j w[i, j]·g[j]`, the transpose product used in backprop.
fn affine_back(w: &[f64], g: &[f64], rows: usize) -> Vec<f64> {
    let cols = g.len();
    (0..rows)
        .map(|i| crate::math::dot(&w[i * cols..(i + 1) * cols], g))
        .collect()
}

fn outer_into(dst: &mut [f64], a: &[f64], b: &[f64]) {
    let cols = b.len();
    for (i, &ai) in a.iter().enumerate() {
        for (d, &bj) in dst[i * cols..(i + 1) * cols].iter_mut().zip(b) {
            *d = ai * bj;
        }
    }
}

fn hidden_pre(params: &VaeParams, x: &[f64]) -> Vec<f64> {
    affine(&params.enc_w1, &params.enc_b1, x)
}

/// Latent mean `W₂ᵀ·relu(W₁ᵀx + b₁) + b₂`.
pub fn encoder_forward(params: &VaeParams, x: &[f64]) -> Vec<f64> {
    let h: Vec<f64> = hidden_pre(params, x).into_iter().map(relu).collect();
    affine(&params.enc_w2, &params.enc_b2, &h)
}

/// Descriptor mean `relu(Wᵀz + b)`.
pub fn decoder_forward(params: &VaeParams, z: &[f64]) -> Vec<f64> {
    affine(&params.dec_w, &params.dec_b, z)
        .into_iter()
        .map(relu)
        .collect()
}

/// Draws standard normal noise of length `n`.
pub fn sample_noise<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Reparameterized draw `μ + ε ⊙ exp(logσ²/2)` with `ε ~ N(0, I)`.
pub fn sample_latent<R: Rng + ?Sized>(mu_z: &[f64], log_var_z: &[f64], rng: &mut R) -> Vec<f64> {
    let noise = sample_noise(mu_z.len(), rng);
    latent_from_noise(mu_z, log_var_z, &noise)
}

fn latent_from_noise(mu_z: &[f64], log_var_z: &[f64], noise: &[f64]) -> Vec<f64> {
    mu_z.iter()
        .zip(log_var_z)
        .zip(noise)
        .map(|((m, lv), e)| m + e * libm::exp(0.5 * lv))
        .collect()
}

/// Gaussian negative log-likelihood `-log N(x; μ, σ²I)` with `σ² = exp(log_var_x)`.
pub fn reconstruction_loss(x: &[f64], mu_x: &[f64], log_var_x: f64) -> f64 {
    let sq = crate::math::sq_dist(x, mu_x);
    let d = x.len() as f64;
    0.5 * sq * libm::exp(-log_var_x) + 0.5 * d * (log_var_x + LN_2PI)
}

/// `KL(N(μ, diag σ²) ‖ N(0, I))`.
pub fn regularization_loss(mu_z: &[f64], log_var_z: &[f64]) -> f64 {
    0.5 * mu_z
        .iter()
        .zip(log_var_z)
        .map(|(m, lv)| m * m + libm::exp(*lv) - 1.0 - lv)
        .sum::<f64>()
}

/// Softmax cross-entropy of raw logits against `label`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> f64 {
    let top = crate::math::argmax(logits);
    if top == label {
        // log1p keeps saturated losses from rounding to exactly the logit gap
        let rest: f64 = logits
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != label)
            .map(|(_, l)| libm::exp(l - logits[label]))
            .sum();
        libm::log1p(rest)
    } else {
        log_sum_exp(logits) - logits[label]
    }
}

/// Cross-entropy of the linear head applied to `z`.
pub fn classification_loss(params: &VaeParams, z: &[f64], label: usize) -> f64 {
    softmax_cross_entropy(&affine(&params.cls_w, &params.cls_b, z), label)
}

/// Full training-time forward pass with frozen noise.
pub fn forward(params: &VaeParams, input: &[f64], noise: &[f64]) -> ForwardPass {
    let hidden_pre = hidden_pre(params, input);
    let hidden: Vec<f64> = hidden_pre.iter().copied().map(relu).collect();
    let mu_z = affine(&params.enc_w2, &params.enc_b2, &hidden);
    let z = latent_from_noise(&mu_z, &params.log_var_z, noise);
    let recon_pre = affine(&params.dec_w, &params.dec_b, &z);
    let mu_x = recon_pre.iter().copied().map(relu).collect();
    let logits = affine(&params.cls_w, &params.cls_b, &z);
    ForwardPass {
        hidden_pre,
        hidden,
        mu_z,
        z,
        recon_pre,
        mu_x,
        logits,
    }
}

/// Fused loss and analytic gradients for one descriptor with frozen noise.
///
/// `input` is what the encoder sees (typically dropout-masked); `target` is
/// the clean descriptor the decoder reconstructs.
pub fn loss_and_grads_with_noise(
    params: &VaeParams,
    input: &[f64],
    target: &[f64],
    label: usize,
    weights: &LossWeights,
    noise: &[f64],
) -> (LossBreakdown, VaeParams) {
    let fw = forward(params, input, noise);
    let rec = reconstruction_loss(target, &fw.mu_x, params.log_var_x);
    let reg = regularization_loss(&fw.mu_z, &params.log_var_z);
    let cls = softmax_cross_entropy(&fw.logits, label);
    let loss = LossBreakdown::fuse(rec, reg, cls, weights);

    let LossWeights {
        lambda1,
        lambda2,
        lambda3,
    } = *weights;
    let mut g = params.zeros_like();
    let d = params.d() as f64;

    // reconstruction
    let inv_var_x = libm::exp(-params.log_var_x);
    let resid: Vec<f64> = fw.mu_x.iter().zip(target).map(|(m, t)| m - t).collect();
    let sq: f64 = resid.iter().map(|r| r * r).sum();
    g.log_var_x = lambda1 * (0.5 * d - 0.5 * sq * inv_var_x);
    let d_recon_pre: Vec<f64> = resid
        .iter()
        .zip(&fw.recon_pre)
        .map(|(r, &a)| if a > 0.0 { lambda1 * r * inv_var_x } else { 0.0 })
        .collect();
    outer_into(&mut g.dec_w, &fw.z, &d_recon_pre);
    g.dec_b.copy_from_slice(&d_recon_pre);
    let mut d_z = affine_back(&params.dec_w, &d_recon_pre, params.d_z());

    // classification
    let lse = log_sum_exp(&fw.logits);
    let d_logits: Vec<f64> = fw
        .logits
        .iter()
        .enumerate()
        .map(|(c, l)| {
            let p = libm::exp(l - lse);
            lambda3 * (p - if c == label { 1.0 } else { 0.0 })
        })
        .collect();
    outer_into(&mut g.cls_w, &fw.z, &d_logits);
    g.cls_b.copy_from_slice(&d_logits);
    for (dz, back) in d_z
        .iter_mut()
        .zip(affine_back(&params.cls_w, &d_logits, params.d_z()))
    {
        *dz += back;
    }

    // reparameterization and KL
    let mut d_mu_z = vec![0.0; params.d_z()];
    for k in 0..params.d_z() {
        let lv = params.log_var_z[k];
        d_mu_z[k] = d_z[k] + lambda2 * fw.mu_z[k];
        g.log_var_z[k] =
            d_z[k] * noise[k] * 0.5 * libm::exp(0.5 * lv) + lambda2 * 0.5 * (libm::exp(lv) - 1.0);
    }

    // encoder
    outer_into(&mut g.enc_w2, &fw.hidden, &d_mu_z);
    g.enc_b2.copy_from_slice(&d_mu_z);
    let d_hidden_pre: Vec<f64> = affine_back(&params.enc_w2, &d_mu_z, params.hidden())
        .into_iter()
        .zip(&fw.hidden_pre)
        .map(|(dh, &a)| if a > 0.0 { dh } else { 0.0 })
        .collect();
    outer_into(&mut g.enc_w1, input, &d_hidden_pre);
    g.enc_b1.copy_from_slice(&d_hidden_pre);

    (loss, g)
}

/// Same as [`loss_and_grads_with_noise`], drawing the latent noise from `rng`.
pub fn fused_loss_and_grads<R: Rng + ?Sized>(
    params: &VaeParams,
    input: &[f64],
    target: &[f64],
    label: usize,
    weights: &LossWeights,
    rng: &mut R,
) -> (LossBreakdown, VaeParams) {
    let noise = sample_noise(params.d_z(), rng);
    loss_and_grads_with_noise(params, input, target, label, weights, &noise)
}
