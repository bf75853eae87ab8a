use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::SvmModel;
use crate::error::{Error, Result};
use crate::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub top1: f64,
    pub top3: f64,
    pub map: f64,
}

/// Threshold-swept average precision: `Σ (R_n − R_{n−1})·P_n` over distinct
/// score thresholds in decreasing order. Tied scores enter together.
/// Returns `None` when there are no positives.
pub fn average_precision(scores: &[f64], relevant: &[bool]) -> Option<f64> {
    let positives = relevant.iter().filter(|&&r| r).count();
    if positives == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            tp += usize::from(relevant[order[i]]);
            seen += 1;
            i += 1;
        }
        let recall = tp as f64 / positives as f64;
        ap += (recall - prev_recall) * (tp as f64 / seen as f64);
        prev_recall = recall;
    }
    Some(ap)
}

/// Top-1, top-3, and mAP from a `N × classes` score matrix.
///
/// Ranking ties go to the lower class index; classes absent from `labels`
/// are excluded from the mean AP.
pub fn evaluate_scores(scores: &Matrix, labels: &[u32]) -> Result<Metrics> {
    if scores.rows() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.rows(),
            got: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let classes = scores.cols();
    let (mut top1, mut top3) = (0usize, 0usize);
    for (row, &label) in scores.iter_rows().zip(labels) {
        let mut ranked: Vec<usize> = (0..classes).collect();
        ranked.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        top1 += usize::from(ranked.first() == Some(&(label as usize)));
        top3 += usize::from(ranked.iter().take(3).any(|&c| c == label as usize));
    }

    let mut ap_sum = 0.0;
    let mut ap_count = 0usize;
    for c in 0..classes {
        let column: Vec<f64> = (0..scores.rows()).map(|i| scores.get(i, c)).collect();
        let relevant: Vec<bool> = labels.iter().map(|&l| l as usize == c).collect();
        if let Some(ap) = average_precision(&column, &relevant) {
            ap_sum += ap;
            ap_count += 1;
        }
    }
    let n = labels.len() as f64;
    Ok(Metrics {
        top1: top1 as f64 / n,
        top3: top3 as f64 / n,
        map: if ap_count == 0 { 0.0 } else { ap_sum / ap_count as f64 },
    })
}

pub fn evaluate(model: &SvmModel, features: &Matrix, labels: &[u32]) -> Result<Metrics> {
    if features.cols() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: features.cols(),
        });
    }
    evaluate_scores(&model.score_matrix(features), labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Precision/recall at every distinct threshold, computed from scratch.
    fn brute_force_ap(scores: &[f64], relevant: &[bool]) -> f64 {
        let positives = relevant.iter().filter(|&&r| r).count() as f64;
        let mut thresholds: Vec<f64> = scores.to_vec();
        thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
        thresholds.dedup();
        let mut ap = 0.0;
        let mut prev_recall = 0.0;
        for t in thresholds {
            let predicted: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] >= t).collect();
            let tp = predicted.iter().filter(|&&i| relevant[i]).count() as f64;
            let recall = tp / positives;
            ap += (recall - prev_recall) * tp / predicted.len() as f64;
            prev_recall = recall;
        }
        ap
    }

    #[test]
    fn perfect_scores() {
        let labels = [0u32, 2, 1, 2, 0];
        let mut scores = Matrix::zeros(5, 3);
        for (i, &l) in labels.iter().enumerate() {
            for c in 0..3 {
                scores.set(i, c, if c == l as usize { 1.0 } else { -1.0 });
            }
        }
        let m = evaluate_scores(&scores, &labels).unwrap();
        assert_eq!((m.top1, m.top3, m.map), (1.0, 1.0, 1.0));
    }

    #[test]
    fn constant_scores_balanced() {
        let labels = [0u32, 1, 1, 0, 0, 1];
        let scores = Matrix::from_vec(6, 2, vec![0.3; 12]).unwrap();
        let m = evaluate_scores(&scores, &labels).unwrap();
        assert_eq!(m.top1, 0.5);
        assert_eq!(m.top3, 1.0);
        let column = [0.3; 6];
        let rel: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
        assert_eq!(average_precision(&column, &rel), Some(0.5));
        assert_eq!(m.map, 0.5);
    }

    #[test]
    fn ap_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let n = rng.random_range(1..40);
            // coarse grid to force ties
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..8) as f64 * 0.25).collect();
            let relevant: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
            match average_precision(&scores, &relevant) {
                None => assert!(relevant.iter().all(|r| !r)),
                Some(ap) => assert!((ap - brute_force_ap(&scores, &relevant)).abs() < 1e-10),
            }
        }
    }

    #[test]
    fn metric_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let labels: Vec<u32> = (0..20).map(|_| rng.random_range(0..5)).collect();
            let data: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..1.0)).collect();
            let m = evaluate_scores(&Matrix::from_vec(20, 5, data).unwrap(), &labels).unwrap();
            for v in [m.top1, m.top3, m.map] {
                assert!((0.0..=1.0).contains(&v));
            }
            assert!(m.top3 >= m.top1);
        }
    }
}
