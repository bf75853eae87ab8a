use alloc::vec;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MAX_ITERATIONS;
use crate::descriptors::DescriptorSet;
use crate::error::{Error, Result};
use crate::math::{nearest, sq_dist};
use crate::Matrix;

/// k-means++ seeding: the first center uniformly, each next one with
/// probability proportional to the squared distance to the chosen ones.
pub fn kmeans_plus_plus<R: Rng + ?Sized>(data: &Matrix, k: usize, rng: &mut R) -> Result<Matrix> {
    let n = data.rows();
    if k == 0 {
        return Err(Error::InvalidConfig("need at least one center".into()));
    }
    if n < k {
        return Err(Error::TooFewDescriptors { needed: k, got: n });
    }
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = data.iter_rows().map(|x| sq_dist(x, data.row(chosen[0]))).collect();
    while chosen.len() < k {
        let next = WeightedIndex::new(&d2)
            .map_err(|_| Error::TooFewDescriptors {
                needed: k,
                got: chosen.len(),
            })?
            .sample(rng);
        chosen.push(next);
        for (i, x) in data.iter_rows().enumerate() {
            d2[i] = d2[i].min(sq_dist(x, data.row(next)));
        }
    }
    let rows: Vec<&[f64]> = chosen.iter().map(|&i| data.row(i)).collect();
    Matrix::from_rows(&rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centroids: Matrix,
    /// Within-cluster sum of squares after each assignment step.
    pub wcss: Vec<f64>,
    pub assignments: Vec<usize>,
}

/// k-means++ followed by Lloyd iterations until the assignment stops
/// changing (or [`MAX_ITERATIONS`]). Empty clusters keep their center.
pub fn kmeans(data: &Matrix, k: usize, seed: u64) -> Result<KMeansFit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(data, k, &mut rng)?;
    let d = data.cols();
    let mut assignments: Vec<usize> = Vec::new();
    let mut wcss = Vec::new();
    for _ in 0..MAX_ITERATIONS {
        let mut total = 0.0;
        let next: Vec<usize> = data
            .iter_rows()
            .map(|x| {
                let (c, dist) = nearest(x, &centroids);
                total += dist;
                c
            })
            .collect();
        wcss.push(total);
        if next == assignments {
            break;
        }
        assignments = next;

        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (x, &c) in data.iter_rows().zip(&assignments) {
            counts[c] += 1;
            sums.row_mut(c).iter_mut().zip(x).for_each(|(s, v)| *s += v);
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                centroids
                    .row_mut(c)
                    .iter_mut()
                    .zip(sums.row(c))
                    .for_each(|(m, s)| *m = s * inv);
            }
        }
    }
    Ok(KMeansFit {
        centroids,
        wcss,
        assignments,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VladCodebook {
    pub centroids: Matrix,
}

impl VladCodebook {
    pub fn new(centroids: Matrix) -> Result<Self> {
        if centroids.rows() == 0 {
            return Err(Error::Empty("codebook"));
        }
        if let Some(index) = centroids.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { centroids })
    }

    pub fn num_centers(&self) -> usize {
        self.centroids.rows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.cols()
    }

    pub fn encoding_dim(&self) -> usize {
        self.num_centers() * self.dim()
    }
}

pub fn fit_vlad(data: &Matrix, k: usize, seed: u64) -> Result<VladCodebook> {
    VladCodebook::new(kmeans(data, k, seed)?.centroids)
}

/// Per-center sums of residuals to the nearest center, concatenated in
/// center order.
pub fn vlad_encode(codebook: &VladCodebook, set: &DescriptorSet) -> Result<Vec<f64>> {
    let d = codebook.dim();
    if set.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: set.dim(),
        });
    }
    let mut out = vec![0.0; codebook.encoding_dim()];
    for x in set.rows_f64() {
        let (c, _) = nearest(&x, &codebook.centroids);
        let center = codebook.centroids.row(c);
        for ((o, xi), ci) in out[c * d..(c + 1) * d].iter_mut().zip(&x).zip(center) {
            *o += xi - ci;
        }
    }
    Ok(out)
}
