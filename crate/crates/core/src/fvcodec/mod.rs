//! Fisher vectors from a trained auto-encoder.
//!
//! A descriptor's score is the gradient of its reconstruction loss with
//! respect to the decoder weights and bias, evaluated at the latent mean.
//! Scores are summed over a set, whitened by a diagonal empirical Fisher
//! information, and optionally power + L2 normalized.

mod pca;

pub use pca::{pca_compress, PcaBasis};

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::descriptors::{Corpus, DescriptorSet};
use crate::error::{Error, Result};
use crate::vae::{decoder_forward, encoder_forward, VaeParams};

/// Default floor on the diagonal Fisher information.
pub const FIM_EPS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NormFlags {
    pub fim_applied: bool,
    pub power_applied: bool,
    pub l2_applied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherVector {
    pub values: Vec<f64>,
    pub flags: NormFlags,
}

impl FisherVector {
    /// Wraps an unnormalized encoding.
    pub fn raw(values: Vec<f64>) -> Self {
        Self {
            values,
            flags: NormFlags::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Diagonal of `F^{-1/2}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FimDiagonal {
    pub inv_sqrt: Vec<f64>,
    pub eps_floor: f64,
}

impl FimDiagonal {
    /// Whether coordinate `i` was clamped at the floor.
    pub fn is_floored(&self, i: usize) -> bool {
        self.inv_sqrt[i] >= 1.0 / libm::sqrt(self.eps_floor)
    }
}

/// Gradient of the reconstruction loss of `x` with respect to `(dec_w, dec_b)`,
/// using `z = μ_z` and no dropout.
///
/// Layout: the `d_z × d` weight block row-major by latent index, then the
/// `d` bias entries.
pub fn rec_grad(params: &VaeParams, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; params.fv_dim()];
    accumulate_rec_grad(params, x, &mut out);
    out
}

fn accumulate_rec_grad(params: &VaeParams, x: &[f64], out: &mut [f64]) {
    let d = params.d();
    let z = encoder_forward(params, x);
    let mu_x = decoder_forward(params, &z);
    let inv_var = libm::exp(-params.log_var_x);
    let r: Vec<f64> = mu_x
        .iter()
        .zip(x)
        .map(|(&m, &xi)| if m > 0.0 { (m - xi) * inv_var } else { 0.0 })
        .collect();
    for (k, &zk) in z.iter().enumerate() {
        for (o, &rj) in out[k * d..(k + 1) * d].iter_mut().zip(&r) {
            *o += zk * rj;
        }
    }
    let bias = &mut out[params.d_z() * d..];
    for (o, &rj) in bias.iter_mut().zip(&r) {
        *o += rj;
    }
}

fn check_dim(params: &VaeParams, set: &DescriptorSet) -> Result<()> {
    if set.dim() != params.d() {
        return Err(Error::DimensionMismatch {
            expected: params.d(),
            got: set.dim(),
        });
    }
    Ok(())
}

/// `Σ_t rec_grad(x_t)` over a set (the loss-side score, before the sign flip).
pub fn set_score(params: &VaeParams, set: &DescriptorSet) -> Result<Vec<f64>> {
    check_dim(params, set)?;
    let mut acc = vec![0.0; params.fv_dim()];
    for x in set.rows_f64() {
        accumulate_rec_grad(params, &x, &mut acc);
    }
    Ok(acc)
}

/// Diagonal Fisher information averaged over the sets of `corpus`.
pub fn estimate_fim(params: &VaeParams, corpus: &Corpus) -> Result<FimDiagonal> {
    estimate_fim_with_floor(params, corpus, FIM_EPS_FLOOR)
}

pub fn estimate_fim_with_floor(params: &VaeParams, corpus: &Corpus, eps_floor: f64) -> Result<FimDiagonal> {
    if corpus.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let mut second = vec![0.0; params.fv_dim()];
    for set in corpus.sets() {
        let g = set_score(params, set)?;
        second.iter_mut().zip(&g).for_each(|(s, gi)| *s += gi * gi);
    }
    let n = corpus.len() as f64;
    let inv_sqrt = second
        .into_iter()
        .map(|s| 1.0 / libm::sqrt((s / n).max(eps_floor)))
        .collect();
    Ok(FimDiagonal { inv_sqrt, eps_floor })
}

/// Whitened Fisher vector `-F^{-1/2} Σ_t ∇L_rec(x_t)`.
pub fn extract_fv(params: &VaeParams, fim: &FimDiagonal, set: &DescriptorSet) -> Result<FisherVector> {
    if fim.inv_sqrt.len() != params.fv_dim() {
        return Err(Error::DimensionMismatch {
            expected: params.fv_dim(),
            got: fim.inv_sqrt.len(),
        });
    }
    let g = set_score(params, set)?;
    Ok(FisherVector {
        values: g.iter().zip(&fim.inv_sqrt).map(|(gi, w)| -w * gi).collect(),
        flags: NormFlags {
            fim_applied: true,
            ..NormFlags::default()
        },
    })
}

/// Elementwise mean of unnormalized vectors, e.g. frames of one video.
pub fn aggregate_fvs(fvs: &[FisherVector]) -> Result<FisherVector> {
    let first = fvs.first().ok_or(Error::Empty("fisher vector list"))?;
    if first.flags.power_applied || first.flags.l2_applied {
        return Err(Error::AlreadyNormalized);
    }
    let mut sum = vec![0.0; first.len()];
    for fv in fvs {
        if fv.flags != first.flags {
            return Err(Error::FlagMismatch);
        }
        if fv.len() != first.len() {
            return Err(Error::DimensionMismatch {
                expected: first.len(),
                got: fv.len(),
            });
        }
        sum.iter_mut().zip(&fv.values).for_each(|(s, v)| *s += v);
    }
    let k = fvs.len() as f64;
    sum.iter_mut().for_each(|s| *s /= k);
    Ok(FisherVector {
        values: sum,
        flags: first.flags,
    })
}

/// Signed square root followed by L2 normalization.
pub fn power_l2_normalize(fv: &FisherVector) -> Result<FisherVector> {
    if fv.flags.power_applied || fv.flags.l2_applied {
        return Err(Error::AlreadyNormalized);
    }
    let mut values: Vec<f64> = fv
        .values
        .iter()
        .map(|&x| libm::copysign(libm::sqrt(x.abs()), x))
        .collect();
    crate::preprocess::l2_normalize_in_place(&mut values);
    Ok(FisherVector {
        values,
        flags: NormFlags {
            power_applied: true,
            l2_applied: true,
            ..fv.flags
        },
    })
}

/// Fisher kernel as an inner product of two compatible vectors.
pub fn fisher_kernel(a: &FisherVector, b: &FisherVector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.flags != b.flags {
        return Err(Error::FlagMismatch);
    }
    Ok(crate::math::dot(&a.values, &b.values))
}

/// Per-descriptor L1 mass of the whitened score, a region-level saliency.
pub fn attention_values(params: &VaeParams, fim: &FimDiagonal, set: &DescriptorSet) -> Result<Vec<f64>> {
    check_dim(params, set)?;
    if fim.inv_sqrt.len() != params.fv_dim() {
        return Err(Error::DimensionMismatch {
            expected: params.fv_dim(),
            got: fim.inv_sqrt.len(),
        });
    }
    Ok(set
        .rows_f64()
        .map(|x| {
            rec_grad(params, &x)
                .iter()
                .zip(&fim.inv_sqrt)
                .map(|(g, w)| (g * w).abs())
                .sum()
        })
        .collect())
}

/// Sums consecutive groups of `frame_size` region values into frame values.
pub fn frame_attention(region_values: &[f64], frame_size: usize) -> Result<Vec<f64>> {
    if frame_size == 0 {
        return Err(Error::InvalidConfig("frame size must be at least 1".into()));
    }
    Ok(region_values.chunks(frame_size).map(|c| c.iter().sum()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(seed: u64) -> VaeParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = VaeParams::zeros(4, 4, 3, 2);
        for t in p.tensors_mut() {
            t.iter_mut().for_each(|v| *v = rng.random_range(-0.9..0.9));
        }
        p.dec_b.iter_mut().for_each(|b| *b = b.abs() + 0.2);
        p
    }

    fn set(seed: u64, rows: usize) -> DescriptorSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * 4).map(|_| rng.random_range(0.0f32..1.0)).collect();
        DescriptorSet::new("s", 0, 4, data).unwrap()
    }

    #[test]
    fn dead_decoder_gives_zero_gradient() {
        let mut p = params(1);
        p.dec_b = vec![-100.0; 4];
        assert!(rec_grad(&p, &[0.3, 0.1, 0.2, 0.9]).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn exact_reconstruction_gives_zero_gradient() {
        // zero encoder: z = 0, so mu_x = relu(b)
        let mut p = VaeParams::zeros(3, 3, 2, 2);
        p.dec_b = vec![0.25, 0.5, 0.75];
        let g = rec_grad(&p, &[0.25, 0.5, 0.75]);
        assert_eq!(g.len(), 9);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_set_fim() {
        let p = params(2);
        let s = set(3, 5);
        let corpus = Corpus::new(vec![s.clone()], 4, 1, crate::Split::Train).unwrap();
        let fim = estimate_fim(&p, &corpus).unwrap();
        let g = set_score(&p, &s).unwrap();
        for (w, gi) in fim.inv_sqrt.iter().zip(&g) {
            let expected = 1.0 / libm::sqrt((gi * gi).max(FIM_EPS_FLOOR));
            assert!((w - expected).abs() <= 1e-12 * expected);
        }
    }

    #[test]
    fn dead_decoder_fim_is_floor() {
        let mut p = params(2);
        p.dec_b = vec![-100.0; 4];
        let corpus = Corpus::new(vec![set(1, 3), set(2, 4)], 4, 1, crate::Split::Train).unwrap();
        let fim = estimate_fim(&p, &corpus).unwrap();
        assert!(fim.inv_sqrt.iter().all(|&w| w == 1e6));
        assert!((0..fim.inv_sqrt.len()).all(|i| fim.is_floored(i)));
        assert!(estimate_fim(&p, &Corpus::new(vec![], 4, 1, crate::Split::Train).unwrap()).is_err());
    }

    #[test]
    fn power_l2_example() {
        let fv = power_l2_normalize(&FisherVector::raw(vec![4.0, -4.0])).unwrap();
        let h = core::f64::consts::FRAC_1_SQRT_2;
        assert!((fv.values[0] - h).abs() < 1e-15 && (fv.values[1] + h).abs() < 1e-15);
        assert!(fv.flags.power_applied && fv.flags.l2_applied);
        assert_eq!(power_l2_normalize(&fv), Err(Error::AlreadyNormalized));
        let zero = power_l2_normalize(&FisherVector::raw(vec![0.0; 3])).unwrap();
        assert_eq!(zero.values, vec![0.0; 3]);
    }

    #[test]
    fn kernel_of_normalized_vectors() {
        let a = power_l2_normalize(&FisherVector::raw(vec![1.0, -2.0, 3.0])).unwrap();
        assert!((fisher_kernel(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        let x = power_l2_normalize(&FisherVector::raw(vec![1.0, 0.0])).unwrap();
        let y = power_l2_normalize(&FisherVector::raw(vec![0.0, 1.0])).unwrap();
        assert_eq!(fisher_kernel(&x, &y).unwrap(), 0.0);
        assert!(fisher_kernel(&x, &FisherVector::raw(vec![0.0, 1.0])).is_err());
        assert!(fisher_kernel(&x, &a).is_err());
    }

    #[test]
    fn aggregation_rules() {
        let a = FisherVector::raw(vec![1.0, 2.0]);
        assert_eq!(aggregate_fvs(core::slice::from_ref(&a)).unwrap(), a);
        assert_eq!(aggregate_fvs(&[a.clone(), a.clone()]).unwrap(), a);
        assert!(aggregate_fvs(&[]).is_err());
        let whitened = FisherVector {
            flags: NormFlags { fim_applied: true, ..NormFlags::default() },
            ..a.clone()
        };
        assert_eq!(aggregate_fvs(&[a.clone(), whitened]), Err(Error::FlagMismatch));
        let normed = power_l2_normalize(&a).unwrap();
        assert_eq!(aggregate_fvs(&[normed]), Err(Error::AlreadyNormalized));
    }

    #[test]
    fn attention_is_nonnegative_and_dominates_set_mass() {
        let p = params(5);
        let s = set(6, 7);
        let corpus = Corpus::new(vec![s.clone(), set(7, 3)], 4, 1, crate::Split::Train).unwrap();
        let fim = estimate_fim(&p, &corpus).unwrap();
        let att = attention_values(&p, &fim, &s).unwrap();
        assert_eq!(att.len(), 7);
        assert!(att.iter().all(|&v| v >= 0.0));
        let fv = extract_fv(&p, &fim, &s).unwrap();
        let mass: f64 = fv.values.iter().map(|v| v.abs()).sum();
        assert!(att.iter().sum::<f64>() >= mass * (1.0 - 1e-12));
        assert_eq!(frame_attention(&att, 3).unwrap().len(), 3);
    }

    #[test]
    fn extraction_rejects_wrong_width() {
        let p = params(1);
        let fim = FimDiagonal { inv_sqrt: vec![1.0; p.fv_dim()], eps_floor: FIM_EPS_FLOOR };
        let wrong = DescriptorSet::new("w", 0, 3, vec![0.0; 6]).unwrap();
        assert!(matches!(extract_fv(&p, &fim, &wrong), Err(Error::DimensionMismatch { .. })));
    }
}
