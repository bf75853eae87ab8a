use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{loss_and_grads_with_noise, sample_noise, AdaDeltaState, LossBreakdown, VaeConfig, VaeParams};
use crate::descriptors::Corpus;
use crate::error::{Error, Result};
use crate::preprocess::dropout_mask;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub params: VaeParams,
    /// Batch-averaged losses, one entry per batch.
    pub trace: Vec<LossBreakdown>,
}

/// Minibatch AdaDelta training on every descriptor of `corpus`.
///
/// Descriptors are expected to be L2-normalized already. Each batch draws
/// `batch_size` descriptors uniformly with replacement; every draw gets a
/// fresh dropout mask on the encoder input and fresh latent noise, while the
/// reconstruction target stays clean. One `ChaCha8` stream seeded from
/// `cfg.seed` drives initialization and all sampling, in that order.
pub fn train(corpus: &Corpus, cfg: &VaeConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    if corpus.num_descriptors() == 0 {
        return Err(Error::Empty("training corpus"));
    }
    if corpus.dim() != cfg.d {
        return Err(Error::DimensionMismatch {
            expected: cfg.d,
            got: corpus.dim(),
        });
    }
    if corpus.num_classes() as usize > cfg.num_classes {
        return Err(Error::InvalidConfig("corpus has more classes than the classifier head".into()));
    }

    let data = corpus.stacked();
    let labels: Vec<usize> = corpus
        .sets()
        .iter()
        .flat_map(|s| core::iter::repeat_n(s.label() as usize, s.len()))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = VaeParams::init(cfg, &mut rng);
    let mut optimizer = AdaDeltaState::new(&params, cfg.optimizer);
    let weights = cfg.weights();
    let scale = 1.0 / cfg.batch_size as f64;

    let mut trace = Vec::with_capacity(cfg.max_batches);
    let mut input = alloc::vec![0.0; cfg.d];
    for _ in 0..cfg.max_batches {
        let mut grads = params.zeros_like();
        let mut loss = LossBreakdown::default();
        for _ in 0..cfg.batch_size {
            let idx = rng.random_range(0..data.rows());
            let target = data.row(idx);
            let mask = dropout_mask(cfg.d, cfg.dropout_rate, &mut rng);
            for ((dst, x), m) in input.iter_mut().zip(target).zip(&mask) {
                *dst = x * m;
            }
            let noise = sample_noise(cfg.d_z, &mut rng);
            let (l, g) = loss_and_grads_with_noise(&params, &input, target, labels[idx], &weights, &noise);
            grads.add_scaled(&g, scale);
            loss.add_scaled(&l, scale);
        }
        optimizer.step(&mut params, &grads);
        trace.push(LossBreakdown::fuse(loss.rec, loss.reg, loss.cls, &weights));
    }
    Ok(TrainOutput { params, trace })
}
