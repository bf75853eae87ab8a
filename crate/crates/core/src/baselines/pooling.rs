use alloc::vec;
use alloc::vec::Vec;

use crate::descriptors::{DescriptorGrid, DescriptorSet};

/// `Σ_t x_t x_tᵀ`, flattened row-major (`d²` entries).
pub fn bilinear_encode(set: &DescriptorSet) -> Vec<f64> {
    let d = set.dim();
    let mut out = vec![0.0; d * d];
    for x in set.rows_f64() {
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (o, &xj) in out[i * d..(i + 1) * d].iter_mut().zip(&x) {
                *o += xi * xj;
            }
        }
    }
    out
}

/// Elementwise mean of the descriptors.
pub fn average_encode(set: &DescriptorSet) -> Vec<f64> {
    let mut out = vec![0.0; set.dim()];
    for row in set.rows() {
        out.iter_mut().zip(row).for_each(|(o, &v)| *o += f64::from(v));
    }
    let n = set.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

/// Row-major flattening of an activation grid (`H·W·C` entries).
pub fn concat_encode(grid: &DescriptorGrid) -> Vec<f64> {
    grid.as_slice().iter().map(|&v| f64::from(v)).collect()
}

/// Flattening of a set viewed as a `T_x × 1 × d` grid.
pub fn concat_set(set: &DescriptorSet) -> Vec<f64> {
    set.as_slice().iter().map(|&v| f64::from(v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_single_axis() {
        let set = DescriptorSet::new("s", 0, 2, vec![1.0, 0.0]).unwrap();
        assert_eq!(bilinear_encode(&set), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn bilinear_is_symmetric_psd() {
        let set = DescriptorSet::new("s", 0, 3, vec![1.0, -2.0, 0.5, 0.3, 0.1, -1.0, 2.0, 2.0, 2.0]).unwrap();
        let m = bilinear_encode(&set);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m[i * 3 + j], m[j * 3 + i]);
            }
        }
        for v in [[1.0, 0.0, -1.0], [0.2, 3.0, 1.0], [-1.0, -1.0, 4.0]] {
            let q: f64 = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| v[i] * m[i * 3 + j] * v[j]).sum();
            assert!(q >= -1e-12);
        }
    }

    #[test]
    fn average_of_identical_rows() {
        let set = DescriptorSet::new("s", 0, 2, vec![0.5, -1.5, 0.5, -1.5, 0.5, -1.5]).unwrap();
        assert_eq!(average_encode(&set), vec![0.5, -1.5]);
    }

    #[test]
    fn concat_grid_dimension() {
        let grid = DescriptorGrid::new(7, 7, 512, vec![0.0; 7 * 7 * 512]).unwrap();
        assert_eq!(concat_encode(&grid).len(), 25088);
    }
}
