//! Descriptor preprocessing: L2 normalization, spatial pyramid max pooling,
//! and inverted dropout masks.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::descriptors::{DescriptorGrid, DescriptorSet};
use crate::error::{Error, Result};

/// Norms below this are left untouched by [`l2_normalize`].
pub const L2_EPS: f64 = 1e-12;

/// Returns `v / ‖v‖₂`, or `v` unchanged when `‖v‖₂ < 1e-12`.
pub fn l2_normalize(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    l2_normalize_in_place(&mut out);
    out
}

pub fn l2_normalize_in_place(v: &mut [f64]) {
    let norm = crate::math::norm2(v);
    if norm < L2_EPS {
        return;
    }
    v.iter_mut().for_each(|x| *x /= norm);
}

/// Pyramid levels, each an `n × n` grid of max-pooling bins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SppConfig {
    pub levels: Vec<usize>,
}

impl Default for SppConfig {
    fn default() -> Self {
        Self {
            levels: vec![6, 3, 2, 1],
        }
    }
}

impl SppConfig {
    /// Number of descriptors produced: `Σ n²`.
    pub fn output_count(&self) -> usize {
        self.levels.iter().map(|n| n * n).sum()
    }
}

/// Half-open `[⌊i·extent/n⌋, ⌈(i+1)·extent/n⌉)`.
fn bin_range(i: usize, n: usize, extent: usize) -> (usize, usize) {
    let start = i * extent / n;
    let end = ((i + 1) * extent).div_ceil(n);
    (start, end)
}

/// Spatial pyramid max pooling of an activation grid into a descriptor set.
///
/// Descriptors are ordered by level as listed in `cfg`, then row-major over
/// bins.
pub fn spp_pool(
    grid: &DescriptorGrid,
    cfg: &SppConfig,
    set_id: impl Into<String>,
    label: u32,
) -> Result<DescriptorSet> {
    let (h, w, c) = (grid.height(), grid.width(), grid.channels());
    for &n in &cfg.levels {
        if n == 0 {
            return Err(Error::InvalidConfig("pyramid level must be at least 1".into()));
        }
        if n > h || n > w {
            return Err(Error::PyramidLevelExceedsGrid {
                level: n,
                height: h,
                width: w,
            });
        }
    }
    if cfg.levels.is_empty() {
        return Err(Error::Empty("pyramid levels"));
    }

    let mut data = Vec::with_capacity(cfg.output_count() * c);
    for &n in &cfg.levels {
        for i in 0..n {
            let (r0, r1) = bin_range(i, n, h);
            for j in 0..n {
                let (c0, c1) = bin_range(j, n, w);
                let mut pooled = vec![f32::NEG_INFINITY; c];
                for r in r0..r1 {
                    for col in c0..c1 {
                        for (p, &v) in pooled.iter_mut().zip(grid.at(r, col)) {
                            *p = p.max(v);
                        }
                    }
                }
                data.extend_from_slice(&pooled);
            }
        }
    }
    DescriptorSet::new(set_id, label, c, data)
}

/// Inverted dropout mask: each entry is `0` with probability `rate`, else
/// `1 / (1 - rate)`.
///
/// # Panics
/// If `rate` is outside `[0, 1)`.
pub fn dropout_mask<R: Rng + ?Sized>(d: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    assert!((0.0..1.0).contains(&rate), "dropout rate must lie in [0, 1)");
    let keep = 1.0 / (1.0 - rate);
    (0..d)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normalizes_three_four_five() {
        let v = l2_normalize(&[3.0, 4.0]);
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn unit_and_zero_vectors() {
        assert_eq!(l2_normalize(&[0.0, 1.0, 0.0]), vec![0.0, 1.0, 0.0]);
        assert_eq!(l2_normalize(&[0.0; 4]), vec![0.0; 4]);
        let tiny = [1e-14, 0.0];
        assert_eq!(l2_normalize(&tiny), tiny.to_vec());
    }

    #[test]
    fn spp_global_max() {
        let grid = DescriptorGrid::new(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let set = spp_pool(&grid, &SppConfig { levels: vec![1] }, "g", 0).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.row(0), &[4.0]);
    }

    #[test]
    fn spp_constant_grid_default_levels() {
        let channels = [0.25f32, -3.0, 7.5];
        let data: Vec<f32> = (0..49).flat_map(|_| channels).collect();
        let grid = DescriptorGrid::new(7, 7, 3, data).unwrap();
        let set = spp_pool(&grid, &SppConfig::default(), "g", 1).unwrap();
        assert_eq!(set.len(), 50);
        assert!(set.rows().all(|r| r == channels));
        assert_eq!(set.label(), 1);
    }

    #[test]
    fn spp_rejects_oversized_level() {
        let grid = DescriptorGrid::new(2, 3, 1, vec![0.0; 6]).unwrap();
        let err = spp_pool(&grid, &SppConfig { levels: vec![3] }, "g", 0).unwrap_err();
        assert!(matches!(err, Error::PyramidLevelExceedsGrid { level: 3, .. }));
    }

    #[test]
    fn spp_bins_cover_and_overlap_on_odd_extents() {
        // 7 rows into 3 bins: [0,3), [2,5), [4,7)
        assert_eq!(bin_range(0, 3, 7), (0, 3));
        assert_eq!(bin_range(1, 3, 7), (2, 5));
        assert_eq!(bin_range(2, 3, 7), (4, 7));
        assert_eq!(bin_range(5, 6, 7), (5, 7));
    }

    #[test]
    fn dropout_identity_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(dropout_mask(100, 0.0, &mut rng).iter().all(|&m| m == 1.0));
        let a = dropout_mask(64, 0.3, &mut ChaCha8Rng::seed_from_u64(9));
        let b = dropout_mask(64, 0.3, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn dropout_half_rate_concentrates() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mask = dropout_mask(100_000, 0.5, &mut rng);
        let zeros = mask.iter().filter(|&&m| m == 0.0).count() as f64 / 1e5;
        assert!((0.49..=0.51).contains(&zeros), "zero fraction {zeros}");
        assert!(mask.iter().all(|&m| m == 0.0 || m == 2.0));
        let mean = mask.iter().sum::<f64>() / 1e5;
        assert!((mean - 1.0).abs() < 0.02);
    }

    proptest! {
        #[test]
        fn l2_idempotent(v in proptest::collection::vec(-1e3f64..1e3, 1..32)) {
            let once = l2_normalize(&v);
            let twice = l2_normalize(&once);
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn spp_count_and_monotone(
            h in 1usize..9, w in 1usize..9, c in 1usize..4,
            seed in any::<u64>(), bump in 0.0f32..5.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f32> = (0..h * w * c).map(|_| rng.random_range(-1.0..1.0)).collect();
            let levels: Vec<usize> = [6, 3, 2, 1].into_iter().filter(|&n| n <= h.min(w)).collect();
            let cfg = SppConfig { levels };
            let grid = DescriptorGrid::new(h, w, c, data.clone()).unwrap();
            let base = spp_pool(&grid, &cfg, "p", 0).unwrap();
            prop_assert_eq!(base.len(), cfg.output_count());

            let idx = rng.random_range(0..data.len());
            let mut bumped = data;
            bumped[idx] += bump;
            let grid2 = DescriptorGrid::new(h, w, c, bumped).unwrap();
            let after = spp_pool(&grid2, &cfg, "p", 0).unwrap();
            for (a, b) in base.as_slice().iter().zip(after.as_slice()) {
                prop_assert!(b >= a);
            }
        }
    }
}
