//! Literal, loop-by-loop reimplementations used as independent references.

#![allow(clippy::needless_range_loop)]

use fvq_core::VaeParams;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// `(mu_z, z, mu_x, logits)` for one descriptor with explicit noise.
pub fn vae_forward(p: &VaeParams, input: &[f64], noise: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let (d, hid, dz, c) = (p.d(), p.hidden(), p.d_z(), p.num_classes());
    let mut h = vec![0.0; hid];
    for j in 0..hid {
        let mut s = p.enc_b1[j];
        for i in 0..d {
            s += input[i] * p.enc_w1[i * hid + j];
        }
        h[j] = relu(s);
    }
    let mut mu_z = vec![0.0; dz];
    for k in 0..dz {
        let mut s = p.enc_b2[k];
        for j in 0..hid {
            s += h[j] * p.enc_w2[j * dz + k];
        }
        mu_z[k] = s;
    }
    let mut z = vec![0.0; dz];
    for k in 0..dz {
        z[k] = mu_z[k] + noise[k] * (0.5 * p.log_var_z[k]).exp();
    }
    let mut mu_x = vec![0.0; d];
    for j in 0..d {
        let mut s = p.dec_b[j];
        for k in 0..dz {
            s += z[k] * p.dec_w[k * d + j];
        }
        mu_x[j] = relu(s);
    }
    let mut logits = vec![0.0; c];
    for m in 0..c {
        let mut s = p.cls_b[m];
        for k in 0..dz {
            s += z[k] * p.cls_w[k * c + m];
        }
        logits[m] = s;
    }
    (mu_z, z, mu_x, logits)
}

pub fn rec_loss(target: &[f64], mu_x: &[f64], log_var_x: f64) -> f64 {
    let mut sq = 0.0;
    for j in 0..target.len() {
        sq += (target[j] - mu_x[j]) * (target[j] - mu_x[j]);
    }
    0.5 * sq / log_var_x.exp() + 0.5 * target.len() as f64 * (log_var_x + LN_2PI)
}

/// `λ₁·rec + λ₂·reg + λ₃·cls`.
pub fn vae_loss(
    p: &VaeParams,
    input: &[f64],
    target: &[f64],
    label: usize,
    lambdas: [f64; 3],
    noise: &[f64],
) -> f64 {
    let (mu_z, _, mu_x, logits) = vae_forward(p, input, noise);
    let rec = rec_loss(target, &mu_x, p.log_var_x);
    let mut reg = 0.0;
    for k in 0..mu_z.len() {
        let lv = p.log_var_z[k];
        reg += 0.5 * (mu_z[k] * mu_z[k] + lv.exp() - 1.0 - lv);
    }
    let mut top = f64::NEG_INFINITY;
    for &l in &logits {
        top = top.max(l);
    }
    let mut sum = 0.0;
    for &l in &logits {
        sum += (l - top).exp();
    }
    let cls = sum.ln() + top - logits[label];
    lambdas[0] * rec + lambdas[1] * reg + lambdas[2] * cls
}

/// Reconstruction loss at `z = μ_z`, the extraction-time path.
pub fn extraction_rec_loss(p: &VaeParams, x: &[f64]) -> f64 {
    let zeros = vec![0.0; p.d_z()];
    let (_, _, mu_x, _) = vae_forward(p, x, &zeros);
    rec_loss(x, &mu_x, p.log_var_x)
}

/// Central difference of `f` with respect to every scalar of `p`.
pub fn central_differences(p: &VaeParams, h: f64, f: impl Fn(&VaeParams) -> f64) -> Vec<f64> {
    let mut out = Vec::new();
    for t in 0..10 {
        for i in 0..p.tensors()[t].len() {
            let mut plus = p.clone();
            plus.tensors_mut()[t][i] += h;
            let mut minus = p.clone();
            minus.tensors_mut()[t][i] -= h;
            out.push((f(&plus) - f(&minus)) / (2.0 * h));
        }
    }
    out
}

/// GMM Fisher vector: per component the mean block then the variance block.
pub fn gmm_fv(weights: &[f64], means: &[Vec<f64>], vars: &[Vec<f64>], set: &[Vec<f64>]) -> Vec<f64> {
    let k = weights.len();
    let d = means[0].len();
    let mut out = vec![0.0; 2 * k * d];
    for x in set {
        let mut logp = vec![0.0; k];
        for c in 0..k {
            let mut s = weights[c].ln();
            for j in 0..d {
                s -= 0.5 * (LN_2PI + vars[c][j].ln() + (x[j] - means[c][j]).powi(2) / vars[c][j]);
            }
            logp[c] = s;
        }
        let mut top = f64::NEG_INFINITY;
        for &l in &logp {
            top = top.max(l);
        }
        let mut total = 0.0;
        for &l in &logp {
            total += (l - top).exp();
        }
        for c in 0..k {
            let gamma = (logp[c] - top).exp() / total;
            for j in 0..d {
                let u = (x[j] - means[c][j]) / vars[c][j].sqrt();
                out[2 * c * d + j] += gamma * u / weights[c].sqrt();
                out[2 * c * d + d + j] += gamma * (u * u - 1.0) / (2.0 * weights[c]).sqrt();
            }
        }
    }
    out
}

/// VLAD with nearest-center hard assignment, ties to the lowest index.
pub fn vlad(centers: &[Vec<f64>], set: &[Vec<f64>]) -> Vec<f64> {
    let k = centers.len();
    let d = centers[0].len();
    let mut out = vec![0.0; k * d];
    for x in set {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for c in 0..k {
            let mut dist = 0.0;
            for j in 0..d {
                dist += (x[j] - centers[c][j]).powi(2);
            }
            if dist < best_dist {
                best_dist = dist;
                best = c;
            }
        }
        for j in 0..d {
            out[best * d + j] += x[j] - centers[best][j];
        }
    }
    out
}
