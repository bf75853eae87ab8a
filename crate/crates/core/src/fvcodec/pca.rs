use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::dot;
use crate::Matrix;

/// Mean and orthonormal principal directions of a set of encodings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    /// `k × M`, one unit-norm direction per row.
    pub components: Matrix,
    /// Sum of squared centered projections captured by each direction.
    pub captured: Vec<f64>,
}

impl PcaBasis {
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        self.components.iter_rows().map(|c| dot(c, &centered)).collect()
    }

    pub fn reconstruct(&self, y: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, &yi) in self.components.iter_rows().zip(y) {
            out.iter_mut().zip(c).for_each(|(o, ci)| *o += yi * ci);
        }
        out
    }
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) -> f64 {
    // two passes of modified Gram-Schmidt
    for _ in 0..2 {
        for b in basis {
            let p = dot(v, b);
            v.iter_mut().zip(b).for_each(|(x, bi)| *x -= p * bi);
        }
    }
    libm::sqrt(dot(v, v))
}

/// Top-`k` principal directions of the rows of `data` via the `N × N` Gram
/// matrix of the centered rows. Returns the basis and the `N × k` projections.
///
/// Directions beyond the rank of the centered data are completed with an
/// arbitrary orthonormal extension and capture zero variance.
pub fn pca_compress(data: &Matrix, k: usize) -> Result<(PcaBasis, Matrix)> {
    let (n, m) = (data.rows(), data.cols());
    let max = n.min(m);
    if k == 0 || k > max {
        return Err(Error::DimensionOutOfRange { k, max });
    }

    let mut mean = vec![0.0; m];
    for row in data.iter_rows() {
        mean.iter_mut().zip(row).for_each(|(a, x)| *a += x);
    }
    mean.iter_mut().for_each(|a| *a /= n as f64);
    let centered: Vec<Vec<f64>> = data
        .iter_rows()
        .map(|r| r.iter().zip(&mean).map(|(x, mu)| x - mu).collect())
        .collect();

    let gram = DMatrix::from_fn(n, n, |i, j| dot(&centered[i], &centered[j]));
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let top = eig.eigenvalues[order[0]].max(0.0);
    let tol = top * 1e-10;

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut captured = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let lambda = eig.eigenvalues[idx];
        if lambda <= tol || lambda <= 0.0 {
            break;
        }
        let u = eig.eigenvectors.column(idx);
        let mut v = vec![0.0; m];
        for (i, row) in centered.iter().enumerate() {
            v.iter_mut().zip(row).for_each(|(a, x)| *a += u[i] * x);
        }
        let norm = orthogonalize(&mut v, &basis);
        v.iter_mut().for_each(|a| *a /= norm);
        basis.push(v);
        captured.push(lambda);
    }
    let mut axis = 0;
    while basis.len() < k {
        let mut v = vec![0.0; m];
        v[axis] = 1.0;
        axis += 1;
        let norm = orthogonalize(&mut v, &basis);
        if norm > 1e-6 {
            v.iter_mut().for_each(|a| *a /= norm);
            basis.push(v);
            captured.push(0.0);
        }
    }

    let components = Matrix::from_rows(&basis)?;
    let pca = PcaBasis {
        mean,
        components,
        captured,
    };
    let projected: Vec<Vec<f64>> = data.iter_rows().map(|r| pca.project(r)).collect();
    let projected = Matrix::from_rows(&projected)?;
    Ok((pca, projected))
}
